"""Command-line front end for the decomposition library.

One subcommand per capability: synthesize test scenes, ROF denoising,
the three-part split, norm measurement, regime classification, split
checking, oscillation-norm estimation, and road detection.  Every JSON
report embeds a run manifest (command line, parameters, input hashes,
seed, version, wall time) so results can be traced back to the exact
invocation.  All outputs are written atomically.

Exit codes: 0 success, 1 usage error, 2 I/O or format error, 3 numerical
failure (for example a non-zero-mean input to the oscillation norm
without --subtract-mean).
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import os
import re
import shlex
import sys
import time

import numpy as np

from . import __version__
from .analysis import (
    NonZeroMeanError,
    check_optimality,
    classify_input,
    gnorm_estimate,
    norms,
)
from .decompose import BvgParams, bvg_decompose, objective
from .formats import FormatError, atomic_write_bytes, read_image, write_bvgf, write_pgm
from .grid import (
    GridError,
    Image,
    NonFiniteValueError,
    l1_norm,
    l2_norm,
    mean_value,
    require_same_grid,
    sup_norm,
    tv_norm,
)
from .projector import ProjectorParams, rof_energy, rof_solve
from .roads import (
    DetectionParams,
    detect_segments,
    fuse_segments,
    overlay,
    road_pipeline,
)
from .synth import KINDS, SceneSpec, UnderResolvedError, oracle_norms, render

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1.

    The negative-number matcher is widened so values like ``-2,-2,2,2``
    (domain corners) parse without requiring the ``--flag=value`` form.
    """

    def __init__(self, *pos, **kw):
        super().__init__(*pos, **kw)
        self._negative_number_matcher = re.compile(r"^-\d|^-\.\d")

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _grid_arg(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")


def _pair_arg(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(",")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y, got {text!r}")


def _domain_arg(text: str) -> tuple[float, float, float, float]:
    try:
        x0, y0, x1, y1 = text.split(",")
        return float(x0), float(y0), float(x1), float(y1)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X0,Y0,X1,Y1, got {text!r}")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class _Run:
    """Collects reproducibility metadata for the report manifest."""

    def __init__(self, argv: list[str], args: argparse.Namespace):
        self.t0 = time.perf_counter()
        self.argv = argv
        self.args = args
        self.inputs: dict[str, str] = {}

    def read(self, path: str) -> Image:
        image = read_image(
            path,
            spacing=getattr(self.args, "spacing", 1.0),
            origin=getattr(self.args, "origin", (0.0, 0.0)),
        )
        self.inputs[str(path)] = _sha256(path)
        return image

    def manifest(self) -> dict:
        params = {}
        for key, value in sorted(vars(self.args).items()):
            if key in ("func", "quiet", "threads"):
                continue
            params[key] = value
        return {
            "command": shlex.join(["bvg", *self.argv]),
            "params": params,
            "inputs": dict(sorted(self.inputs.items())),
            "seed": getattr(self.args, "seed", None),
            "version": __version__,
            "wall_time_s": round(time.perf_counter() - self.t0, 6),
        }


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(path: str, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    atomic_write_bytes(path, (text + "\n").encode())


def _write_raster(path: str, image: Image, bits: int):
    """Write an image output; PGM targets get an affine map when needed.

    Returns the recorded {lo, hi} source range when the values had to be
    rescaled into [0, 1] for PGM quantization, else None.
    """
    if str(path).lower().endswith(".bvgf"):
        write_bvgf(path, image)
        return None
    lo = float(image.values.min())
    hi = float(image.values.max())
    if 0.0 <= lo and hi <= 1.0:
        write_pgm(path, image, bits=bits)
        return None
    span = hi - lo if hi > lo else 1.0
    write_pgm(path, image.like((image.values - lo) / span), bits=bits)
    return {"lo": lo, "hi": hi}


def _say(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def _part_norms(image: Image) -> dict:
    return {
        "l1": l1_norm(image),
        "l2": l2_norm(image),
        "tv": tv_norm(image),
        "sup": sup_norm(image),
        "mean": mean_value(image),
    }


# ---------------------------------------------------------------- commands

def _cmd_synth(args, run: _Run) -> int:
    width, height = args.grid
    spec = SceneSpec(
        kind=args.kind,
        width=width,
        height=height,
        domain=args.domain,
        amplitude=args.amplitude,
        center=args.center,
        radius=args.r,
        length=args.length,
        thickness=args.thickness,
        angle_deg=args.angle,
        side=args.side,
        frequency=args.frequency,
        phase=args.phase,
        sigma=args.sigma,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        supersample=args.supersample,
    )
    image = render(spec, strict=args.strict)
    scale = _write_raster(args.out, image, args.bits)
    if args.oracle:
        payload = oracle_norms(spec).to_dict()
        payload["pgm_scale"] = scale
        payload["run"] = run.manifest()
        _write_json(args.oracle, payload)
    _say(args, f"wrote {args.out} ({width}x{height} {args.kind})")
    if scale is not None:
        _say(args, f"  pgm rescaled from [{scale['lo']:g}, {scale['hi']:g}]")
    return 0


def _cmd_rof(args, run: _Run) -> int:
    f = run.read(args.input)
    lam = args.lam if args.lam is not None else 1.0 / (2.0 * args.ball_radius)
    params = ProjectorParams(
        radius=1.0 / (2.0 * lam), fp_tol=args.tol, max_iters=args.max_iters,
    )
    u, v, trace = rof_solve(f, lam, params=params)
    scales = {}
    scales["u"] = _write_raster(args.out, u, args.bits)
    if args.v_out:
        scales["v"] = _write_raster(args.v_out, v, args.bits)
    if args.report:
        tv_term = tv_norm(u)
        fidelity = rof_energy(u, f, lam) - tv_term
        payload = {
            "lambda": lam,
            "ball_radius": 1.0 / (2.0 * lam),
            "iterations_used": trace.iterations,
            "converged": trace.converged,
            "final_residual": trace.final_change,
            "energy": {
                "tv": tv_term,
                "fidelity": fidelity,
                "total": tv_term + fidelity,
            },
            "pgm_scales": scales,
            "run": run.manifest(),
        }
        _write_json(args.report, payload)
    _say(args, f"rof: {trace.iterations} iterations, residual {trace.final_change:.3g}")
    return 0


def _cmd_decompose(args, run: _Run) -> int:
    f = run.read(args.input)
    params = BvgParams(
        lam=args.lam,
        mu=args.mu,
        stop_tol=args.tol,
        max_outer_iters=args.max_iters,
        fp_tol=args.fp_tol,
        inner_max_iters=args.inner_max_iters,
        warm_start=not args.no_warm_start,
    )
    d = bvg_decompose(f, params)
    prefix = args.out_prefix
    scales = {}
    for name, part in (("u", d.u), ("v", d.v), ("w", d.w)):
        write_bvgf(f"{prefix}_{name}.bvgf", part)
        scales[name] = _write_raster(f"{prefix}_{name}.pgm", part, args.bits)
    case = check_optimality(
        d.u, d.v, d.w, args.lam, args.mu, tol=args.case_tol, bv_mode=args.bv_mode,
    )
    payload = {
        "objective": objective(d, bv_mode=args.bv_mode),
        "norms": {
            "u": _part_norms(d.u),
            "v": _part_norms(d.v),
            "w": _part_norms(d.w),
        },
        "trace": {
            "outer_iterations": d.outer_iterations,
            "converged": d.converged,
            "final_change": d.final_change,
            "inner_iterations": d.inner_iterations,
        },
        "case": case.to_dict(),
        "pgm_scales": scales,
        "run": run.manifest(),
    }
    _write_json(f"{prefix}_report.json", payload)
    _say(args, f"decompose: {d.outer_iterations} outer iterations, "
               f"converged={d.converged}, report {prefix}_report.json")
    return 0


def _cmd_analyze(args, run: _Run) -> int:
    f = run.read(args.input)
    mode = "skip" if args.skip_gnorm else ("auto" if args.subtract_mean else "strict")
    report = norms(f, gnorm=mode, tol=args.tol, fp_tol=args.fp_tol,
                   max_iters=args.max_iters)
    payload = report.to_dict()
    payload["run"] = run.manifest()
    _write_json(args.json, payload)
    g_text = "skipped" if report.g is None else f"{report.g:.6g}"
    _say(args, f"analyze: l2 {report.l2:.6g}, tv {report.tv:.6g}, g {g_text}")
    return 0


def _cmd_classify(args, run: _Run) -> int:
    f = run.read(args.input)
    report = classify_input(
        f, args.lam, args.mu,
        bv_mode=args.bv_mode, tol=args.tol,
        subtract_mean=args.subtract_mean,
    )
    payload = report.to_dict()
    payload["run"] = run.manifest()
    _write_json(args.json, payload)
    _say(args, f"classify: {report.input_class.value}")
    return 0


def _cmd_check(args, run: _Run) -> int:
    u = run.read(args.u)
    v = run.read(args.v)
    w = run.read(args.w)
    require_same_grid(u, v)
    require_same_grid(u, w)
    report = check_optimality(
        u, v, w, args.lam, args.mu, tol=args.tol, bv_mode=args.bv_mode,
    )
    payload = report.to_dict()
    payload["run"] = run.manifest()
    _write_json(args.json, payload)
    flags = {k: getattr(report, k) for k in
             ("no_structure", "no_texture", "saturated", "residual_only")}
    _say(args, f"check: {flags}")
    return 0


def _cmd_gnorm(args, run: _Run) -> int:
    f = run.read(args.input)
    result = gnorm_estimate(
        f, tol=args.tol, subtract_mean=args.subtract_mean,
        fp_tol=args.fp_tol, max_iters=args.max_iters,
    )
    if args.json:
        payload = result.to_dict()
        payload["run"] = run.manifest()
        _write_json(args.json, payload)
    certainty = "certified" if result.certified else "uncertified"
    _say(args, f"gnorm: {result.estimate:.6g} in [{result.lo:.6g}, {result.hi:.6g}] "
               f"({certainty})")
    if args.quiet:
        print(f"{result.estimate:.12g}")
    return 0


def _cmd_detect_roads(args, run: _Run) -> int:
    f = run.read(args.input)
    detector = DetectionParams(
        precision=args.precision,
        epsilon=args.epsilon,
        endpoint_stride=args.stride,
        sample_step=args.sample_step,
        min_length=args.min_length,
        overlap_max=args.overlap_max,
        merge_dist_px=args.merge_dist,
        merge_angle_deg=args.merge_angle,
        chain_gap_px=args.chain_gap,
    )
    if args.direct:
        raw = detect_segments(f, detector)
        fused = fuse_segments(raw)
        decomposition = None
        detect_image = f
    else:
        solver = BvgParams(lam=args.lam, mu=args.mu, stop_tol=args.tol,
                           max_outer_iters=args.max_iters)
        report = road_pipeline(f, solver, detector)
        raw, fused = report.raw, report.fused
        decomposition = report.decomposition
        detect_image = decomposition.w

    columns = ("x1", "y1", "x2", "y2", "length", "k", "l", "log10_nfa")
    rows = [
        {
            "x1": s.x1, "y1": s.y1, "x2": s.x2, "y2": s.y2,
            "length": s.length, "k": s.aligned, "l": s.total,
            "log10_nfa": s.log10_nfa,
        }
        for s in fused.segments
    ]
    payload = {
        "segments": rows,
        "count": len(rows),
        "raw_count": len(raw),
        "n_tests": raw.n_tests,
        "fusion": {
            "merge_dist_px": detector.merge_dist_px,
            "merge_angle_deg": detector.merge_angle_deg,
            "chain_gap_px": detector.chain_gap_px,
        },
        "solver": None if decomposition is None else {
            "outer_iterations": decomposition.outer_iterations,
            "converged": decomposition.converged,
        },
        "run": run.manifest(),
    }
    _write_json(args.segments, payload)

    csv_path = args.csv or (os.path.splitext(args.segments)[0] + ".csv")
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in columns))
    atomic_write_bytes(csv_path, ("\n".join(lines) + "\n").encode())

    if args.overlay:
        _write_raster(args.overlay, overlay(detect_image, fused), args.bits)
    _say(args, f"detect-roads: {len(rows)} segments (raw {len(raw)}, "
               f"n_tests {raw.n_tests})")
    return 0


# ---------------------------------------------------------------- parser

def _add_io_flags(p: _Parser) -> None:
    p.add_argument("--spacing", type=float, default=1.0,
                   help="pixel spacing for PGM inputs (bvgf carries its own)")
    p.add_argument("--origin", type=_pair_arg, default=(0.0, 0.0),
                   help="origin X,Y for PGM inputs")


def _add_gnorm_flags(p: _Parser, tol_default: float = 1e-2) -> None:
    p.add_argument("--tol", type=float, default=tol_default,
                   help="relative bracket width for the oscillation norm")
    p.add_argument("--fp-tol", type=float, default=1e-6,
                   help="projector fixed-point tolerance")
    p.add_argument("--max-iters", type=int, default=800,
                   help="projector iteration cap per membership test")


def build_parser() -> _Parser:
    parser = _Parser(prog="bvg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bvg {__version__}")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress informational output")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap internal thread pools (default: BVG_THREADS or unlimited)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", parents=[], help="render a synthetic scene")
    p.add_argument("--kind", required=True,
                   choices=sorted(k for k in KINDS if k != "composite"))
    p.add_argument("--grid", type=_grid_arg, default=(256, 256), metavar="WxH")
    p.add_argument("--domain", type=_domain_arg, default=(0.0, 0.0, 1.0, 1.0),
                   metavar="X0,Y0,X1,Y1")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--center", type=_pair_arg, default=(0.0, 0.0), metavar="X,Y")
    p.add_argument("--r", "--radius", dest="r", type=float, default=1.0,
                   help="disk radius")
    p.add_argument("--length", type=float, default=1.0)
    p.add_argument("--thickness", type=float, default=0.1)
    p.add_argument("--angle", type=float, default=0.0, help="bar angle in degrees")
    p.add_argument("--side", type=float, default=1.0)
    p.add_argument("--frequency", type=float, default=8.0,
                   help="cycles per unit length along x")
    p.add_argument("--phase", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.25)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--supersample", type=int, default=1)
    p.add_argument("--strict", action="store_true",
                   help="fail instead of warn on under-resolved features")
    p.add_argument("--bits", type=int, choices=(8, 16), default=16)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--oracle", help="write closed-form norms as JSON")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("rof", help="total-variation denoising")
    p.add_argument("-i", "--input", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--lambda", dest="lam", type=float,
                       help="fidelity weight")
    group.add_argument("--ball-radius", type=float,
                       help="equivalent constraint radius 1/(2*lambda)")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="fixed-point tolerance on the dual update")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--bits", type=int, choices=(8, 16), default=16)
    p.add_argument("-o", "--out", required=True, help="structure output")
    p.add_argument("--v-out", help="residual output")
    p.add_argument("--report", help="JSON report path")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_rof)

    p = sub.add_parser("decompose", help="three-part structure/residual/texture split")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-4,
                   help="stop when both parts move less than this")
    p.add_argument("--max-iters", type=int, default=200, help="outer iteration cap")
    p.add_argument("--inner-max-iters", type=int, default=2000)
    p.add_argument("--fp-tol", type=float, default=1e-6)
    p.add_argument("--no-warm-start", action="store_true")
    p.add_argument("--bv-mode", choices=("seminorm", "full"), default="seminorm")
    p.add_argument("--case-tol", type=float, default=0.05)
    p.add_argument("--bits", type=int, choices=(8, 16), default=16)
    p.add_argument("--out-prefix", required=True)
    _add_io_flags(p)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("analyze", help="measure every norm of an image")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--subtract-mean", action="store_true",
                   help="allow non-zero-mean input to the oscillation norm")
    p.add_argument("--skip-gnorm", action="store_true")
    p.add_argument("--json", required=True)
    _add_gnorm_flags(p)
    _add_io_flags(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("classify", help="place an image relative to the model thresholds")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--bv-mode", choices=("seminorm", "full"), default="seminorm")
    p.add_argument("--subtract-mean", action="store_true")
    p.add_argument("--json", required=True)
    p.add_argument("--tol", type=float, default=1e-2)
    _add_io_flags(p)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("check", help="test a candidate split against the balance laws")
    p.add_argument("-u", required=True)
    p.add_argument("-v", required=True)
    p.add_argument("-w", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--bv-mode", choices=("seminorm", "full"), default="seminorm")
    p.add_argument("--json", required=True)
    _add_io_flags(p)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("gnorm", help="estimate the oscillation norm with brackets")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--subtract-mean", action="store_true")
    p.add_argument("--json")
    _add_gnorm_flags(p)
    _add_io_flags(p)
    p.set_defaults(func=_cmd_gnorm)

    p = sub.add_parser("detect-roads", help="a-contrario detection of elongated structures")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-4, help="solver stop tolerance")
    p.add_argument("--max-iters", type=int, default=60, help="solver outer cap")
    p.add_argument("--direct", action="store_true",
                   help="detect on the input itself, skipping the decomposition")
    p.add_argument("--epsilon", type=float, default=1.0,
                   help="expected false alarms under the noise hypothesis")
    p.add_argument("--precision", type=float, default=1.0 / 16.0)
    p.add_argument("--min-length", type=float, default=0.0, help="physical units")
    p.add_argument("--stride", type=int, default=None,
                   help="endpoint lattice stride in pixels")
    p.add_argument("--sample-step", type=float, default=2.0)
    p.add_argument("--overlap-max", type=float, default=0.5)
    p.add_argument("--merge-dist", type=float, default=3.0, help="pixels")
    p.add_argument("--merge-angle", type=float, default=5.0, help="degrees")
    p.add_argument("--chain-gap", type=float, default=10.0, help="pixels")
    p.add_argument("--segments", required=True, help="JSON output path")
    p.add_argument("--csv", help="CSV output path (default: segments path with .csv)")
    p.add_argument("--overlay", help="write the input with segments burned in")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)
    _add_io_flags(p)
    p.set_defaults(func=_cmd_detect_roads)

    return parser


def _thread_cap(threads: int | None):
    if threads is None:
        env = os.environ.get("BVG_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise argparse.ArgumentTypeError(f"BVG_THREADS must be an int, got {env!r}")
    if threads is None:
        return contextlib.nullcontext()
    if threads < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        # best effort without threadpoolctl: env caps for pools not yet started
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(threads)
        return contextlib.nullcontext()
    return threadpool_limits(limits=threads)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    run = _Run(argv, args)
    try:
        with _thread_cap(args.threads):
            return args.func(args, run)
    except argparse.ArgumentTypeError as exc:
        print(f"bvg: error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError,
            PermissionError) as exc:
        print(f"bvg: i/o error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"bvg: format error: {exc}", file=sys.stderr)
        return 2
    except NonZeroMeanError as exc:
        print(f"bvg: numerical failure: {exc}", file=sys.stderr)
        return 3
    except NonFiniteValueError as exc:
        print(f"bvg: numerical failure: {exc}", file=sys.stderr)
        return 3
    except UnderResolvedError as exc:
        print(f"bvg: numerical failure: {exc}", file=sys.stderr)
        return 3
    except GridError as exc:
        print(f"bvg: grid error: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, OverflowError, ZeroDivisionError) as exc:
        print(f"bvg: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"bvg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
