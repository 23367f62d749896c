"""Low-discrepancy dilated-sphere sampling used by the numerical certificates.

Negativity of the Lyapunov derivative is checked on a family of spheres
pushed through both weighted dilations across several decades of radius;
for bl-homogeneous quantities this spans the behavior at all scales.  The
scans are numerical certificates, not proofs, and are labeled as such in
all reports.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

DEFAULT_RADII = np.logspace(-3.0, 3.0, 13)  # half-decade steps
DEFAULT_DIRECTIONS = 2000


def sphere_directions(dim: int, count: int = DEFAULT_DIRECTIONS, seed: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy directions on the unit sphere in R^dim.

    Sobol points mapped through the normal quantile and normalized; for
    dim = 1 this degenerates to the two signs.
    """
    if dim == 1:
        reps = (count + 1) // 2
        return np.tile(np.array([[1.0], [-1.0]]), (reps, 1))[:count]
    sob = qmc.Sobol(d=dim, scramble=True, seed=seed)
    # draw a power-of-two block (balanced Sobol) and slice
    m = max(1, int(np.ceil(np.log2(count))))
    u = sob.random_base2(m)[:count]
    # keep strictly inside (0,1) so the quantile stays finite
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    g = ndtri(u)
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return g / norms


def dilate(directions: np.ndarray, weights: np.ndarray, radius: float) -> np.ndarray:
    """Apply the weighted dilation ``z_i = radius**w_i * u_i`` row-wise."""
    return directions * radius ** np.asarray(weights, dtype=float)


def dilated_shells(
    directions: np.ndarray,
    r0: np.ndarray,
    rinf: np.ndarray,
    radii: np.ndarray = DEFAULT_RADII,
):
    """Yield ``(radius, points)`` with both dilations stacked per shell.

    Each shell holds ``2 * len(directions)`` points: the direction set pushed
    through the ``r0`` dilation and through the ``rinf`` dilation.
    """
    for rho in radii:
        pts = np.vstack([dilate(directions, r0, rho), dilate(directions, rinf, rho)])
        yield float(rho), pts
