"""Total-variation denoising on a noisy disk.

Sweeps the fidelity weight to show the classic trade-off: small lambda
flattens everything toward the mean, large lambda keeps the noise.  The
cartoon part of each run is written next to this script as a PGM.
"""

import pathlib

from bvg.grid import l2_norm, sup_norm
from bvg.formats import write_pgm
from bvg.projector import ProjectorParams, rof_energy, rof_solve
from bvg.synth import SceneSpec, render

HERE = pathlib.Path(__file__).parent

clean = render(SceneSpec(kind="disk", width=128, height=128,
                         domain=(-2, -2, 2, 2), radius=1.0, amplitude=1.0))
noise = render(SceneSpec(kind="noise", width=128, height=128,
                         domain=(-2, -2, 2, 2), noise_sigma=0.15, seed=11))
noisy = clean.like(clean.values + noise.values)
write_pgm(HERE / "rof_input.pgm", noisy.like(noisy.values.clip(0.0, 1.0)))

print(f"input:  l2 error vs clean = {l2_norm(noisy.like(noisy.values - clean.values)):.4f}")
print(f"{'lambda':>8} {'iters':>6} {'energy':>10} {'l2 err':>8} {'max(u)':>8}")

params = ProjectorParams(radius=1.0, fp_tol=1e-6, max_iters=4000)
for lam in (1.0, 4.0, 16.0, 64.0):
    u, v, trace = rof_solve(noisy, lam, params=params)
    err = l2_norm(u.like(u.values - clean.values))
    print(f"{lam:8.1f} {trace.iterations:6d} {rof_energy(u, noisy, lam):10.4f} "
          f"{err:8.4f} {sup_norm(u):8.4f}")
    write_pgm(HERE / f"rof_lambda{lam:g}.pgm", u.like(u.values.clip(0.0, 1.0)))

print("\nNote the loss of intensity: even at the best lambda the disk top "
      "sits below the clean amplitude 1.0 -- the projection always shaves "
      "a thin layer proportional to the ball radius over the disk radius.")
