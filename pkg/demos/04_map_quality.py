"""
The map-quality score on orthogonal planes
==========================================

Points on three mutually orthogonal planes score zero. Noise raises the
score roughly with its variance, and a misaligned second scan raises it
further because the planes no longer coincide.
"""

# %%
import numpy as np

from fgsync import se2
from fgsync.metrics import local_mom


def planes(rng, n=400, sigma=0.0, size=4.0):
    out = []
    for axis in range(3):
        p = rng.uniform(0.0, size, (n, 3))
        p[:, axis] = rng.normal(0.0, sigma, n) if sigma else 0.0
        out.append(p)
    return np.concatenate(out)


rng = np.random.default_rng(0)
print("exact planes:", local_mom(planes(rng)).value)

# %% The smallest eigenvalue of a local plane fit underestimates sigma^2
for sigma in (0.01, 0.02, 0.04):
    v = local_mom(planes(rng, 600, sigma)).value
    print(f"sigma {sigma:.2f}  score {v:.2e}  score/sigma^2 {v / sigma**2:.2f}")

# %% A 0.2 m shift of the second scan
a, b = planes(rng, 300, 0.01), planes(rng, 300, 0.01)
shift = np.array([0.2, 0.0, 0.0])
print("aligned   ", local_mom(np.concatenate([a, b])).value)
print("misaligned", local_mom(np.concatenate([a, se2.transform_points(shift, b)])).value)
