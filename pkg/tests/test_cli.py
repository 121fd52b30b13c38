"""End-to-end tests for the command-line front end.

Every test shells out to ``python -m bvg`` so argument parsing, exit
codes, and file I/O are exercised exactly as a user would hit them.
Reports are cross-checked against the library API on the same inputs.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from bvg import __version__
from bvg.formats import read_image
from bvg.grid import l2_norm, mean_value, sup_norm, tv_norm
from bvg.projector import rof_energy
from bvg.synth import SceneSpec, oracle_norms

CLI = [sys.executable, "-m", "bvg"]

DISK_ARGS = [
    "synth", "--kind", "disk", "--grid", "64x64", "--domain", "-2,-2,2,2",
    "--r", "1", "--amplitude", "1",
]
TEX_ARGS = [
    "synth", "--kind", "textured_square", "--grid", "48x48",
    "--domain", "-2,-2,2,2", "--side", "3", "--frequency", "1.5",
    "--amplitude", "0.3",
]
DECOMPOSE_ARGS = [
    "decompose", "-i", "tex.bvgf", "--lambda", "5", "--mu", "0.1",
    "--tol", "1e-3", "--max-iters", "40", "--out-prefix", "run",
]


def run_cli(*argv, cwd, env_extra=None):
    env = {k: v for k, v in os.environ.items() if k != "BVG_THREADS"}
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [*CLI, *map(str, argv)],
        cwd=cwd, env=env, capture_output=True, text=True, timeout=300,
    )


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def angdist_deg(a, b):
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


@pytest.fixture(scope="module")
def products(tmp_path_factory):
    """Shared artifacts: a disk, a textured square, and two identical
    decompose invocations run in separate directories."""
    base = tmp_path_factory.mktemp("cli")
    proc = run_cli(*DISK_ARGS, "-o", "disk.bvgf", cwd=base)
    assert proc.returncode == 0, proc.stderr
    for sub in ("run1", "run2"):
        d = base / sub
        d.mkdir()
        proc = run_cli(*TEX_ARGS, "-o", "tex.bvgf", cwd=d)
        assert proc.returncode == 0, proc.stderr
        proc = run_cli(*DECOMPOSE_ARGS, cwd=d)
        assert proc.returncode == 0, proc.stderr
    return base


# ---------------------------------------------------------------- exit codes

def test_version_reports_package_version(tmp_path):
    proc = run_cli("--version", cwd=tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.strip() == f"bvg {__version__}"


def test_no_subcommand_is_usage_error(tmp_path):
    proc = run_cli(cwd=tmp_path)
    assert proc.returncode == 1
    assert "usage:" in proc.stderr


def test_unknown_flag_is_usage_error(tmp_path):
    proc = run_cli("synth", "--kind", "disk", "-o", "x.bvgf",
                   "--bogus-flag", cwd=tmp_path)
    assert proc.returncode == 1
    assert "usage:" in proc.stderr
    assert "--bogus-flag" in proc.stderr


def test_missing_input_file_exits_two(tmp_path):
    proc = run_cli("analyze", "-i", "nope.bvgf", "--json", "out.json",
                   cwd=tmp_path)
    assert proc.returncode == 2
    assert "i/o error" in proc.stderr
    assert not (tmp_path / "out.json").exists()


def test_missing_output_directory_exits_two(tmp_path):
    proc = run_cli(*DISK_ARGS, "-o", "nodir/out.bvgf", cwd=tmp_path)
    assert proc.returncode == 2
    assert not (tmp_path / "nodir").exists()


def test_grid_mismatch_exits_two(tmp_path):
    run_cli(*DISK_ARGS, "-o", "big.bvgf", cwd=tmp_path)
    run_cli("synth", "--kind", "disk", "--grid", "32x32",
            "--domain", "-2,-2,2,2", "-o", "small.bvgf", cwd=tmp_path)
    proc = run_cli("check", "-u", "big.bvgf", "-v", "big.bvgf",
                   "-w", "small.bvgf", "--lambda", "1", "--mu", "1",
                   "--json", "chk.json", cwd=tmp_path)
    assert proc.returncode == 2
    assert "(64, 64)" in proc.stderr and "(32, 32)" in proc.stderr
    assert not (tmp_path / "chk.json").exists()


def test_nonzero_mean_gnorm_exits_three(products):
    proc = run_cli("gnorm", "-i", "disk.bvgf", cwd=products)
    assert proc.returncode == 3
    assert "numerical failure" in proc.stderr
    assert "subtract_mean" in proc.stderr


def test_strict_synth_underresolved_exits_three(tmp_path):
    # 0.05 units is under a pixel at 32^2 on a 4-unit domain
    proc = run_cli("synth", "--kind", "bar", "--grid", "32x32",
                   "--domain", "-2,-2,2,2", "--thickness", "0.05",
                   "--strict", "-o", "thin.bvgf", cwd=tmp_path)
    assert proc.returncode == 3
    assert "numerical failure" in proc.stderr


def test_invalid_threads_env_exits_one(tmp_path):
    proc = run_cli(*DISK_ARGS, "-o", "d.bvgf", cwd=tmp_path,
                   env_extra={"BVG_THREADS": "abc"})
    assert proc.returncode == 1
    assert "BVG_THREADS" in proc.stderr


# ---------------------------------------------------------------- synth

def test_synth_oracle_matches_library(tmp_path):
    proc = run_cli(*DISK_ARGS, "-o", "d.bvgf", "--oracle", "o.json",
                   cwd=tmp_path)
    assert proc.returncode == 0
    payload = load_json(tmp_path / "o.json")
    spec = SceneSpec(kind="disk", width=64, height=64,
                     domain=(-2, -2, 2, 2), radius=1.0, amplitude=1.0)
    expected = oracle_norms(spec).to_dict()
    for key, value in expected.items():
        assert payload[key] == value, key
    run = payload["run"]
    assert set(run) == {"command", "params", "inputs", "seed",
                        "version", "wall_time_s"}
    assert run["version"] == __version__
    assert run["seed"] == 0
    assert run["inputs"] == {}  # synth reads nothing
    assert run["wall_time_s"] > 0
    assert "--kind disk" in run["command"]


def test_synth_pgm_rescale_is_recorded(tmp_path):
    # noise spills outside [0, 1]; the affine map back is in the oracle
    proc = run_cli("synth", "--kind", "noise", "--grid", "16x16",
                   "--noise-sigma", "0.5", "--seed", "7",
                   "-o", "n.pgm", "--oracle", "n.json", cwd=tmp_path)
    assert proc.returncode == 0
    scale = load_json(tmp_path / "n.json")["pgm_scale"]
    assert scale is not None and scale["lo"] < 0.0 < scale["hi"]

    proc = run_cli(*DISK_ARGS, "-o", "d.pgm", "--oracle", "d.json",
                   cwd=tmp_path)
    assert proc.returncode == 0
    assert load_json(tmp_path / "d.json")["pgm_scale"] is None


def test_synth_determinism(products):
    a = (products / "run1" / "tex.bvgf").read_bytes()
    b = (products / "run2" / "tex.bvgf").read_bytes()
    assert a == b


# ---------------------------------------------------------------- rof

def test_rof_report_is_self_consistent(products, tmp_path):
    proc = run_cli("rof", "-i", str(products / "disk.bvgf"),
                   "--lambda", "8", "--tol", "1e-5", "--max-iters", "3000",
                   "-o", str(tmp_path / "u.bvgf"),
                   "--v-out", str(tmp_path / "v.bvgf"),
                   "--report", str(tmp_path / "r.json"), cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    report = load_json(tmp_path / "r.json")
    assert report["lambda"] == 8.0
    assert report["ball_radius"] == 1.0 / 16.0

    f = read_image(str(products / "disk.bvgf"))
    u = read_image(str(tmp_path / "u.bvgf"))
    v = read_image(str(tmp_path / "v.bvgf"))
    np.testing.assert_allclose(u.values + v.values, f.values, atol=1e-14)

    energy = report["energy"]
    assert energy["tv"] == pytest.approx(tv_norm(u), rel=1e-12)
    assert energy["total"] == pytest.approx(rof_energy(u, f, 8.0), rel=1e-12)
    assert energy["total"] == pytest.approx(energy["tv"] + energy["fidelity"])
    assert report["iterations_used"] >= 1
    assert isinstance(report["converged"], bool)


def test_rof_ball_radius_flag_sets_lambda(products, tmp_path):
    proc = run_cli("rof", "-i", str(products / "disk.bvgf"),
                   "--ball-radius", "0.0625", "--max-iters", "50",
                   "-o", str(tmp_path / "u.bvgf"),
                   "--report", str(tmp_path / "r.json"), cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    report = load_json(tmp_path / "r.json")
    assert report["lambda"] == 8.0
    assert report["ball_radius"] == 0.0625


def test_rof_lambda_and_radius_are_exclusive(products, tmp_path):
    proc = run_cli("rof", "-i", str(products / "disk.bvgf"),
                   "--lambda", "8", "--ball-radius", "0.0625",
                   "-o", str(tmp_path / "u.bvgf"), cwd=tmp_path)
    assert proc.returncode == 1
    assert "not allowed with" in proc.stderr


# ---------------------------------------------------------------- decompose

def test_decompose_writes_full_artifact_set(products):
    d = products / "run1"
    for name in ("run_u.bvgf", "run_v.bvgf", "run_w.bvgf",
                 "run_u.pgm", "run_v.pgm", "run_w.pgm", "run_report.json"):
        assert (d / name).exists(), name
    assert list(d.glob(".tmp-*")) == []  # atomic writes leave no droppings

    report = load_json(d / "run_report.json")
    assert set(report) == {"objective", "norms", "trace", "case",
                           "pgm_scales", "run"}

    obj = report["objective"]
    assert obj["total"] == pytest.approx(
        obj["bv_term"] + obj["l2_term"] + obj["g_term"], rel=1e-12)
    lo, hi = obj["g_error_bar"]
    assert lo <= obj["g_term"] <= hi

    trace = report["trace"]
    assert 1 <= trace["outer_iterations"] <= 40
    assert trace["inner_iterations"] >= 2 * trace["outer_iterations"]

    for part in ("u", "v", "w"):
        block = report["norms"][part]
        assert set(block) == {"l1", "l2", "tv", "sup", "mean"}
    assert set(report["case"]) >= {"flags", "gaps", "measured", "thresholds"}


def test_decompose_parts_reconstruct_input(products):
    d = products / "run1"
    f = read_image(str(d / "tex.bvgf"))
    total = sum(read_image(str(d / f"run_{p}.bvgf")).values
                for p in ("u", "v", "w"))
    np.testing.assert_allclose(total, f.values, atol=1e-12)


def test_decompose_rerun_is_bit_identical(products):
    for part in ("u", "v", "w"):
        a = (products / "run1" / f"run_{part}.bvgf").read_bytes()
        b = (products / "run2" / f"run_{part}.bvgf").read_bytes()
        assert a == b, part


def test_decompose_report_embeds_input_hash(products):
    report = load_json(products / "run1" / "run_report.json")
    digest = hashlib.sha256(
        (products / "run1" / "tex.bvgf").read_bytes()).hexdigest()
    assert report["run"]["inputs"] == {"tex.bvgf": digest}
    params = report["run"]["params"]
    assert params["lam"] == 5.0 and params["mu"] == 0.1
    assert "func" not in params


def test_check_agrees_with_decompose_case_block(products, tmp_path):
    d = products / "run1"
    proc = run_cli("check",
                   "-u", str(d / "run_u.bvgf"),
                   "-v", str(d / "run_v.bvgf"),
                   "-w", str(d / "run_w.bvgf"),
                   "--lambda", "5", "--mu", "0.1",
                   "--json", str(tmp_path / "chk.json"), cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    checked = load_json(tmp_path / "chk.json")
    case = load_json(d / "run_report.json")["case"]
    assert checked["flags"] == case["flags"]
    for key, value in case["measured"].items():
        assert checked["measured"][key] == pytest.approx(value, rel=1e-12)


# ---------------------------------------------------------------- analysis

def test_analyze_pgm_with_spacing_and_skip(tmp_path):
    run_cli("synth", "--kind", "noise", "--grid", "24x24",
            "--noise-sigma", "0.5", "--seed", "3", "-o", "n.pgm",
            cwd=tmp_path)
    proc = run_cli("analyze", "-i", "n.pgm", "--spacing", "0.05",
                   "--origin", "0.1,0.2", "--skip-gnorm",
                   "--json", "a.json", cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    report = load_json(tmp_path / "a.json")
    assert report["g"] is None and report["g_valid"] is False

    img = read_image(str(tmp_path / "n.pgm"), spacing=0.05, origin=(0.1, 0.2))
    assert report["l2"] == pytest.approx(l2_norm(img), rel=1e-12)
    assert report["tv"] == pytest.approx(tv_norm(img), rel=1e-12)
    assert report["sup"] == pytest.approx(sup_norm(img), rel=1e-12)
    assert report["mean"] == pytest.approx(mean_value(img), abs=1e-15)


def test_analyze_subtract_mean_reports_gnorm(products, tmp_path):
    proc = run_cli("analyze", "-i", str(products / "disk.bvgf"),
                   "--subtract-mean", "--json", str(tmp_path / "a.json"),
                   cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    report = load_json(tmp_path / "a.json")
    assert report["g_valid"] is True
    assert 0.0 < report["g"] < math.inf


def test_classify_reports_class(products, tmp_path):
    proc = run_cli("classify", "-i", str(products / "disk.bvgf"),
                   "--lambda", "1", "--mu", "1", "--subtract-mean",
                   "--json", str(tmp_path / "c.json"), cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    report = load_json(tmp_path / "c.json")
    assert report["input_class"] in {"trivial_residual", "nontrivial",
                                     "out_of_scope", "unknown"}
    assert report["bv_value"] > 0
    assert report["g_threshold"] > 0
    assert "run" in report


def test_quiet_gnorm_prints_bare_estimate(products, tmp_path):
    proc = run_cli("--quiet", "gnorm", "-i", str(products / "disk.bvgf"),
                   "--subtract-mean", "--json", str(tmp_path / "g.json"),
                   cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.strip().splitlines()
    assert len(lines) == 1
    bare = float(lines[0])
    report = load_json(tmp_path / "g.json")
    assert bare == pytest.approx(report["estimate"], rel=1e-10)
    lo, hi = report["bracket"]
    assert lo <= report["estimate"] <= hi
    assert report["certified"] is True

    chatty = run_cli("gnorm", "-i", str(products / "disk.bvgf"),
                     "--subtract-mean", cwd=tmp_path)
    assert "gnorm:" in chatty.stdout


# ---------------------------------------------------------------- roads

def test_detect_roads_direct_writes_json_csv_overlay(tmp_path):
    run_cli("synth", "--kind", "bar", "--grid", "96x96",
            "--domain", "-2,-2,2,2", "--length", "2.4",
            "--thickness", "0.2", "--angle", "0", "--supersample", "4",
            "-o", "bar.bvgf", cwd=tmp_path)
    proc = run_cli("detect-roads", "-i", "bar.bvgf", "--direct",
                   "--min-length", "0.5", "--segments", "segs.json",
                   "--overlay", "ov.pgm", cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr

    payload = load_json(tmp_path / "segs.json")
    assert payload["solver"] is None  # --direct skips the decomposition
    assert payload["count"] == len(payload["segments"]) >= 1
    assert payload["raw_count"] >= payload["count"]
    assert payload["n_tests"] > 0

    best = payload["segments"][0]
    angle = math.degrees(math.atan2(best["y2"] - best["y1"],
                                    best["x2"] - best["x1"]))
    assert angdist_deg(angle, 0.0) < 5.0
    assert best["length"] >= 1.5
    assert best["log10_nfa"] < 0

    csv_lines = (tmp_path / "segs.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "x1,y1,x2,y2,length,k,l,log10_nfa"
    assert len(csv_lines) == 1 + payload["count"]
    first = [float(t) for t in csv_lines[1].split(",")]
    assert first[0] == best["x1"] and first[7] == best["log10_nfa"]

    assert (tmp_path / "ov.pgm").exists()
    assert list(tmp_path.glob(".tmp-*")) == []


def test_detect_roads_pipeline_records_solver(tmp_path):
    run_cli("synth", "--kind", "bar", "--grid", "48x48",
            "--domain", "-2,-2,2,2", "--length", "1.6",
            "--thickness", "0.3", "--angle", "30", "--supersample", "4",
            "-o", "bar.bvgf", cwd=tmp_path)
    proc = run_cli("detect-roads", "-i", "bar.bvgf",
                   "--lambda", "20", "--mu", "0.1", "--tol", "1e-3",
                   "--max-iters", "6", "--min-length", "0.4",
                   "--segments", "segs.json", cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    payload = load_json(tmp_path / "segs.json")
    solver = payload["solver"]
    assert solver is not None
    assert solver["outer_iterations"] >= 1
    assert isinstance(solver["converged"], bool)
    assert payload["fusion"]["merge_angle_deg"] == 5.0
