"""Checks on the pieces the trainer is built from.

Spectral normalisation, the triangular learning-rate schedule, the hinge
loss and the Frechet distance, each probed with a few numbers.

    python demos/02_building_blocks.py
"""

import numpy as np

from sketchloom.evaluation import fid, gaussian_stats
from sketchloom.nn import SpectralState, power_iteration, spectral_normalize
from sketchloom.training import cyclical_lr, hinge_d_loss

rng = np.random.default_rng(0)

# %% Spectral normalisation
# One power iteration per step is cheap because u persists between steps.
# Starting cold, the estimate climbs toward the true top singular value from
# below, so the normalised matrix has spectral norm slightly above 1 until it
# converges.
w = rng.standard_normal((32, 64))
sigma = np.linalg.svd(w, compute_uv=False)[0]
u0 = SpectralState.random(32, rng, np.float64).u
print(f"true sigma {sigma:.4f}")
for n in (1, 3, 10, 30, 100):
    est = power_iteration(w, u0, n)[2]
    wbar, _ = spectral_normalize(w, SpectralState(u0, n))
    print(f"  {n:3d} iterations: estimate {est:.4f}, |W_bar|_2 = {np.linalg.norm(wbar, 2):.5f}")

# %% Cyclical learning rate
# Triangle between base and max with a half-period of step_size. The
# discriminator runs on a higher interval and indexes by its own counter.
row = [f"{cyclical_lr(s, 1e-5, 2e-4, 2000):.2e}" for s in range(0, 8001, 1000)]
print("G lr every 1000 steps:", " ".join(row))

# %% Hinge loss
# Zero only once real scores clear +1 and fake scores sit below -1.
for real, fake in [(2.0, -2.0), (1.0, -1.0), (0.5, -0.5), (0.0, 0.0)]:
    print(f"  real {real:+.1f}, fake {fake:+.1f}: hinge D loss {hinge_d_loss([real], [fake]):.2f}")

# %% Frechet distance
# A mean shift of delta along one axis adds delta**2; FID ignores rotations.
x = rng.standard_normal((2000, 4))
base = gaussian_stats(x)
for delta in (0.0, 0.5, 1.0, 2.0):
    shifted = gaussian_stats(x + np.array([delta, 0, 0, 0]))
    print(f"  shift {delta:.1f}: FID {fid(base, shifted):.4f}")
q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
y = rng.standard_normal((2000, 4)) * 1.5
print(f"  FID before/after a shared rotation: {fid(base, gaussian_stats(y)):.6f} / "
      f"{fid(gaussian_stats(x @ q.T), gaussian_stats(y @ q.T)):.6f}")
