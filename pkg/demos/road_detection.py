"""Find the road-like stroke in a cluttered scene.

Pipeline: three-part split first, then a-contrario segment detection on
the texture part, then fusion of collinear fragments.  The disk and the
smooth bump are routed to the structure part, so the detector only ever
sees the elongated stroke and the noise -- and the noise, by design of
the NFA threshold, yields about one false alarm per run at epsilon=1.
"""

import pathlib

from bvg.decompose import BvgParams
from bvg.formats import write_pgm
from bvg.roads import DetectionParams, overlay, road_pipeline
from bvg.synth import SceneSpec, render

HERE = pathlib.Path(__file__).parent

scene = SceneSpec(
    kind="composite", width=96, height=96, domain=(-2, -2, 2, 2),
    parts=(
        SceneSpec(kind="disk", radius=0.9, center=(-0.4, 0.4), amplitude=0.8),
        SceneSpec(kind="bar", length=1.6, thickness=0.06, angle_deg=30.0,
                  center=(-0.2, 0.2), amplitude=1.2),
        SceneSpec(kind="textured_square", side=3.6, frequency=1.5,
                  amplitude=0.15),
        SceneSpec(kind="noise", noise_sigma=0.02, seed=5),
    ),
)
f = render(scene)

solver = BvgParams(lam=20.0, mu=0.1, stop_tol=5e-4, max_outer_iters=60,
                   accel=True)
detector = DetectionParams(epsilon=1.0, min_length=0.3)
report = road_pipeline(f, solver, detector)

print(f"raw detections: {len(report.raw)}  after fusion: {len(report.fused)}")
print(f"{'angle':>7} {'length':>7} {'log10 NFA':>10} {'aligned':>8}")
for seg in report.fused.segments:
    import math
    print(f"{math.degrees(seg.angle) % 180:7.1f} {seg.length:7.3f} "
          f"{seg.log10_nfa:10.2f} {seg.aligned:4d}/{seg.total}")

marked = overlay(f, report.fused)
lo, hi = marked.values.min(), marked.values.max()
write_pgm(HERE / "roads_overlay.pgm",
          marked.like((marked.values - lo) / (hi - lo)))
print("\nwrote roads_overlay.pgm -- the 30-degree stroke should be the "
      "longest surviving segment; short tangent chords along the disk rim "
      "are legitimate alignments and fuse away or stay short.")
