"""A-contrario detection of straight elongated structures.

The detector tests a fixed family of candidate segments (all ordered pairs
of lattice points at a given stride) against the hypothesis that level-line
orientations are independent and uniform.  For a candidate through l sample
points of which k are aligned with its direction within an angular
tolerance of precision * pi (points with undefined orientation count as
unaligned), the number of false alarms is

    NFA = n_tests * BinomialTail(l, k, precision)

computed in log space; a candidate is kept when NFA <= epsilon.  Under
pure noise the expected number of detections is below epsilon by
construction, which is what makes the epsilon threshold interpretable.

Detections are pruned greedily: candidates are visited by increasing NFA
and dropped when more than half of their sample pixels are already covered
by kept segments.  ``fuse_segments`` then merges near-duplicates and
chains collinear pieces until nothing changes, so fusing twice is exactly
the same as fusing once.

The road pipeline runs the three-part decomposition first and detects on
the texture part, where thin elongated structures land.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .decompose import BvgParams, Decomposition, bvg_decompose
from .grid import Image

__all__ = [
    "DetectionParams",
    "OrientationField",
    "Segment",
    "SegmentSet",
    "RoadReport",
    "orientation_field",
    "log10_binom_tail",
    "detect_segments",
    "fuse_segments",
    "road_pipeline",
    "overlay",
]

_LN10 = math.log(10.0)


@dataclass(frozen=True)
class DetectionParams:
    """Knobs of the a-contrario detector.

    precision is the angular tolerance as a fraction of pi (a point is
    aligned when its level-line direction is within precision * pi of the
    candidate direction, so precision is also the alignment probability
    under the noise hypothesis).  endpoint_stride (pixels) quantizes the
    candidate endpoints; None picks max(2, min(height, width) // 32).
    sample_step is the spacing of sample points along a candidate, in
    pixels.  min_length is in physical units.  Merge distances are in
    pixels and are scaled by the image spacing internally.
    """

    precision: float = 1.0 / 16.0
    epsilon: float = 1.0
    endpoint_stride: int | None = None
    sample_step: float = 2.0
    min_length: float = 0.0
    mag_threshold_rel: float = 1.0 / 255.0
    overlap_max: float = 0.5
    merge_dist_px: float = 3.0
    merge_angle_deg: float = 5.0
    chain_gap_px: float = 10.0

    def __post_init__(self):
        if not 0 < self.precision < 0.5:
            raise ValueError(f"precision must lie in (0, 0.5), got {self.precision}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.sample_step <= 0:
            raise ValueError("sample_step must be positive")


@dataclass
class OrientationField:
    """Per-pixel level-line directions.

    angle holds the direction of the level line (gradient rotated a
    quarter turn), in radians mod 2*pi; valid is false where the gradient
    magnitude is below the noise threshold or the 2x2 stencil runs off the
    grid (last row and column).
    """

    angle: np.ndarray
    magnitude: np.ndarray
    valid: np.ndarray
    threshold: float


def orientation_field(image: Image, mag_threshold_rel: float = 1.0 / 255.0) -> OrientationField:
    """Level-line directions from 2x2 finite differences.

    The threshold below which a pixel is flagged undefined is
    ``mag_threshold_rel`` times the value range of the image, which for
    8-bit sources puts one quantization step right at the cutoff.
    """
    a = image.values
    H, W = a.shape
    gx = np.zeros((H, W))
    gy = np.zeros((H, W))
    if H > 1 and W > 1:
        gx[:-1, :-1] = 0.5 * (a[:-1, 1:] + a[1:, 1:] - a[:-1, :-1] - a[1:, :-1])
        gy[:-1, :-1] = 0.5 * (a[1:, :-1] + a[1:, 1:] - a[:-1, :-1] - a[:-1, 1:])
    mag = np.hypot(gx, gy)
    vrange = float(a.max() - a.min())
    threshold = mag_threshold_rel * vrange
    valid = mag > threshold
    valid[-1, :] = False
    valid[:, -1] = False
    # level line: rotate the gradient by +90 degrees
    angle = np.arctan2(gx, -gy)
    return OrientationField(angle=angle, magnitude=mag, valid=valid, threshold=threshold)


def log10_binom_tail(l, k, p: float):
    """log10 of P(X >= k) for X binomial(l, p), elementwise and finite.

    Entries where the direct survival function underflows are recomputed
    by summing the log pmf, so the result is finite whenever k <= l.
    """
    l = np.asarray(l, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    out = np.zeros(np.broadcast(l, k).shape, dtype=np.float64)
    lb, kb = np.broadcast_arrays(l, k)
    pos = kb > 0
    if np.any(pos):
        with np.errstate(divide="ignore", invalid="ignore"):
            ln_tail = binom.logsf(kb[pos] - 1, lb[pos], p)
        vals = ln_tail / _LN10
        out_pos = vals
        bad = ~np.isfinite(out_pos)
        if np.any(bad):
            li = lb[pos][bad]
            ki = kb[pos][bad]
            fixed = np.empty(li.shape)
            for idx, (ll, kk) in enumerate(zip(li, ki)):
                if kk > ll:
                    fixed[idx] = -np.inf  # impossible event; callers filter k<=l
                    continue
                j = np.arange(kk, ll + 1)
                lp = binom.logpmf(j, ll, p)
                m = lp.max()
                fixed[idx] = (m + np.log(np.sum(np.exp(lp - m)))) / _LN10
            out_pos[bad] = fixed
        out[pos] = out_pos
    return out if out.shape else float(out)


@dataclass(frozen=True)
class Segment:
    """A detected directed segment, endpoints in physical coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float
    log10_nfa: float
    aligned: int
    total: int

    def __post_init__(self):
        # numpy scalars repr as np.float64(...), which breaks CSV output
        for name in ("x1", "y1", "x2", "y2", "log10_nfa"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("aligned", "total"):
            object.__setattr__(self, name, int(getattr(self, name)))

    @property
    def length(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)

    @property
    def angle(self) -> float:
        return math.atan2(self.y2 - self.y1, self.x2 - self.x1)

    def to_dict(self) -> dict:
        return {
            "x1": self.x1, "y1": self.y1, "x2": self.x2, "y2": self.y2,
            "log10_nfa": self.log10_nfa,
            "aligned": self.aligned, "total": self.total,
            "length": self.length, "angle": self.angle,
        }


@dataclass
class SegmentSet:
    """Detections plus the size of the family they were tested against.

    degenerate marks inputs with no defined orientation anywhere (constant
    or empty images); such runs return no segments by construction.
    """

    segments: list[Segment]
    n_tests: int
    spacing: float
    origin: tuple[float, float]
    shape: tuple[int, int]
    params: DetectionParams
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.segments)

    def to_dict(self) -> dict:
        return {
            "n_tests": self.n_tests,
            "count": len(self.segments),
            "degenerate": self.degenerate,
            "segments": [s.to_dict() for s in self.segments],
        }


def _auto_stride(shape: tuple[int, int]) -> int:
    return max(2, min(shape) // 32)


def _segment_pixels(ax, ay, bx, by, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Integer sample pixels along one segment, endpoints in pixel coords."""
    length = math.hypot(bx - ax, by - ay)
    n = max(2, int(length / step) + 1)
    t = np.linspace(0.0, 1.0, n)
    px = np.rint(ax + (bx - ax) * t).astype(np.int64)
    py = np.rint(ay + (by - ay) * t).astype(np.int64)
    return px, py


def detect_segments(image: Image, params: DetectionParams | None = None) -> SegmentSet:
    """Run the a-contrario segment detector on one image.

    The candidate family consists of all ordered pairs of distinct lattice
    points (stride ``endpoint_stride``) at least ``min_length`` apart; its
    size enters the NFA as n_tests.  Each candidate is sampled every
    ``sample_step`` pixels; every sample counts toward l, but only samples
    with a defined orientation can count as aligned, so flat stretches
    penalize a candidate rather than shrink its sample set.  The alignment
    test uses the candidate's own direction, so an edge seen from its two
    sides yields two separate candidates.

    Returns the kept segments sorted by increasing NFA after greedy
    overlap pruning.
    """
    if params is None:
        params = DetectionParams()
    H, W = image.values.shape
    field_ = orientation_field(image, params.mag_threshold_rel)
    stride = params.endpoint_stride or _auto_stride((H, W))

    ys = np.arange(0, H, stride, dtype=np.float64)
    xs = np.arange(0, W, stride, dtype=np.float64)
    nx, ny = np.meshgrid(xs, ys)
    nodes_x = nx.ravel()
    nodes_y = ny.ravel()
    n_nodes = nodes_x.size

    ia, ib = np.triu_indices(n_nodes, k=1)
    ax, ay = nodes_x[ia], nodes_y[ia]
    bx, by = nodes_x[ib], nodes_y[ib]
    seg_len = np.hypot(bx - ax, by - ay)
    min_len_px = max(params.min_length / image.spacing, params.sample_step)
    keep = seg_len >= min_len_px
    ax, ay, bx, by, seg_len = (arr[keep] for arr in (ax, ay, bx, by, seg_len))
    n_pairs = ax.size
    n_tests = 2 * n_pairs  # both directions of every pair are tested
    log10_eps = math.log10(params.epsilon)

    cos_tol = math.cos(params.precision * math.pi)
    angle = field_.angle
    valid = field_.valid

    found: list[tuple[float, float, float, float, float, int, int]] = []
    chunk = 8192
    for lo in range(0, n_pairs, chunk):
        sl = slice(lo, lo + chunk)
        cax, cay, cbx, cby, clen = ax[sl], ay[sl], bx[sl], by[sl], seg_len[sl]
        m = cax.size
        n_samples = np.maximum(2, (clen / params.sample_step).astype(np.int64) + 1)
        max_n = int(n_samples.max())
        j = np.arange(max_n)[None, :]
        denom = (n_samples - 1).astype(np.float64)[:, None]
        frac = np.minimum(j / denom, 1.0)
        px = np.rint(cax[:, None] + (cbx - cax)[:, None] * frac).astype(np.int64)
        py = np.rint(cay[:, None] + (cby - cay)[:, None] * frac).astype(np.int64)
        in_range = j < n_samples[:, None]
        v = valid[py, px] & in_range
        ang = angle[py, px]
        direction = np.arctan2(cby - cay, cbx - cax)
        dcos = np.cos(ang - direction[:, None])
        k_fwd = np.sum(v & (dcos >= cos_tol), axis=1)
        k_rev = np.sum(v & (dcos <= -cos_tol), axis=1)
        l_total = n_samples

        lt_fwd = log10_binom_tail(l_total, k_fwd, params.precision)
        lt_rev = log10_binom_tail(l_total, k_rev, params.precision)
        nfa_fwd = math.log10(max(n_tests, 1)) + lt_fwd
        nfa_rev = math.log10(max(n_tests, 1)) + lt_rev

        for sign, nfa in ((1, nfa_fwd), (-1, nfa_rev)):
            hits = np.nonzero(nfa <= log10_eps)[0]
            for i in hits:
                if sign > 0:
                    x1, y1, x2, y2 = cax[i], cay[i], cbx[i], cby[i]
                    kk = int(k_fwd[i])
                else:
                    x1, y1, x2, y2 = cbx[i], cby[i], cax[i], cay[i]
                    kk = int(k_rev[i])
                found.append((float(nfa[i]), x1, y1, x2, y2, kk, int(l_total[i])))

    found.sort(key=lambda t: (t[0], t[1], t[2], t[3], t[4]))

    covered = np.zeros((H, W), dtype=bool)
    h = image.spacing
    x0, y0 = image.origin
    kept: list[Segment] = []
    for nfa, x1, y1, x2, y2, kk, ll in found:
        px, py = _segment_pixels(x1, y1, x2, y2, params.sample_step)
        frac_covered = float(np.mean(covered[py, px]))
        if frac_covered > params.overlap_max:
            continue
        kept.append(Segment(
            x1=x0 + h * x1, y1=y0 + h * y1,
            x2=x0 + h * x2, y2=y0 + h * y2,
            log10_nfa=nfa, aligned=kk, total=ll,
        ))
        # paint a 3x3 neighborhood around each sample pixel
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                qx = np.clip(px + dx, 0, W - 1)
                qy = np.clip(py + dy, 0, H - 1)
                covered[qy, qx] = True

    return SegmentSet(
        segments=kept,
        n_tests=n_tests,
        spacing=image.spacing,
        origin=image.origin,
        shape=(H, W),
        params=params,
        degenerate=not bool(valid.any()),
    )


def _angle_diff_mod_pi(a: float, b: float) -> float:
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def _mergeable(s: Segment, t: Segment, merge_dist: float, merge_angle: float,
               chain_gap: float) -> bool:
    if _angle_diff_mod_pi(s.angle, t.angle) > merge_angle:
        return False
    # lateral distance of t's endpoints from the line through s
    c, sn = math.cos(s.angle), math.sin(s.angle)
    mx, my = 0.5 * (s.x1 + s.x2), 0.5 * (s.y1 + s.y2)
    half = 0.5 * s.length

    def offsets(x, y):
        dx, dy = x - mx, y - my
        lon = dx * c + dy * sn
        lat = -dx * sn + dy * c
        return lon, lat

    lon1, lat1 = offsets(t.x1, t.y1)
    lon2, lat2 = offsets(t.x2, t.y2)
    if max(abs(lat1), abs(lat2)) > merge_dist:
        # not on a common line; allow only direct endpoint proximity
        d = min(
            math.hypot(s.x1 - t.x1, s.y1 - t.y1),
            math.hypot(s.x1 - t.x2, s.y1 - t.y2),
            math.hypot(s.x2 - t.x1, s.y2 - t.y1),
            math.hypot(s.x2 - t.x2, s.y2 - t.y2),
        )
        return d <= merge_dist
    lo, hi = min(lon1, lon2), max(lon1, lon2)
    gap = max(lo - half, -half - hi, 0.0)
    return gap <= chain_gap


def _merge(s: Segment, t: Segment) -> Segment:
    better = s if s.log10_nfa <= t.log10_nfa else t
    c, sn = math.cos(better.angle), math.sin(better.angle)
    mx, my = 0.5 * (better.x1 + better.x2), 0.5 * (better.y1 + better.y2)
    pts = [(s.x1, s.y1), (s.x2, s.y2), (t.x1, t.y1), (t.x2, t.y2)]
    lons = [(x - mx) * c + (y - my) * sn for x, y in pts]
    lo, hi = min(lons), max(lons)
    return Segment(
        x1=mx + lo * c, y1=my + lo * sn,
        x2=mx + hi * c, y2=my + hi * sn,
        log10_nfa=min(s.log10_nfa, t.log10_nfa),
        aligned=s.aligned + t.aligned,
        total=s.total + t.total,
    )


def fuse_segments(segset: SegmentSet, params: DetectionParams | None = None) -> SegmentSet:
    """Merge near-duplicate and collinear detections until a fixed point.

    Two segments merge when their directions differ by at most the merge
    angle and they either nearly touch, or lie on a common line with a
    longitudinal gap of at most the chain gap.  The merge keeps the better
    NFA and covers both inputs.  The loop runs until no pair is mergeable,
    so the operation is idempotent exactly.
    """
    if params is None:
        params = segset.params
    h = segset.spacing
    merge_dist = params.merge_dist_px * h
    merge_angle = math.radians(params.merge_angle_deg)
    chain_gap = params.chain_gap_px * h

    def order(s: Segment):
        return (s.log10_nfa, s.x1, s.y1, s.x2, s.y2)

    segs = sorted(segset.segments, key=order)
    changed = True
    while changed:
        changed = False
        for i in range(len(segs)):
            for jj in range(i + 1, len(segs)):
                if _mergeable(segs[i], segs[jj], merge_dist, merge_angle, chain_gap):
                    merged = _merge(segs[i], segs[jj])
                    rest = [ss for idx, ss in enumerate(segs) if idx not in (i, jj)]
                    segs = sorted(rest + [merged], key=order)
                    changed = True
                    break
            if changed:
                break
    return replace_segments(segset, segs)


def replace_segments(segset: SegmentSet, segments: list[Segment]) -> SegmentSet:
    return SegmentSet(
        segments=segments,
        n_tests=segset.n_tests,
        spacing=segset.spacing,
        origin=segset.origin,
        shape=segset.shape,
        params=segset.params,
        degenerate=segset.degenerate,
    )


@dataclass
class RoadReport:
    """Everything the road pipeline produced."""

    decomposition: Decomposition
    raw: SegmentSet
    fused: SegmentSet

    def to_dict(self) -> dict:
        return {
            "outer_iterations": self.decomposition.outer_iterations,
            "solver_converged": self.decomposition.converged,
            "raw": self.raw.to_dict(),
            "fused": self.fused.to_dict(),
        }


def road_pipeline(
    f: Image,
    solver: BvgParams,
    detector: DetectionParams | None = None,
) -> RoadReport:
    """Decompose f and detect elongated structures on its texture part.

    Thin bright ribbons (roads in aerial imagery) have small area but
    large perimeter, which sends them to the texture part of the split;
    detecting there suppresses clutter from large smooth structures.
    """
    d = bvg_decompose(f, solver)
    raw = detect_segments(d.w, detector)
    fused = fuse_segments(raw)
    return RoadReport(decomposition=d, raw=raw, fused=fused)


def overlay(image: Image, segset: SegmentSet, value: float | None = None) -> Image:
    """Burn segments into a copy of the image for quick visual checks."""
    out = image.values.copy()
    if value is None:
        value = float(out.max()) if out.size else 1.0
    h = image.spacing
    x0, y0 = image.origin
    H, W = out.shape
    for s in segset.segments:
        px, py = _segment_pixels(
            (s.x1 - x0) / h, (s.y1 - y0) / h,
            (s.x2 - x0) / h, (s.y2 - y0) / h,
            step=0.5,
        )
        px = np.clip(px, 0, W - 1)
        py = np.clip(py, 0, H - 1)
        out[py, px] = value
    return image.like(out)
