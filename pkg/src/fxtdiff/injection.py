"""Weights and output-injection nonlinearities of the differentiator.

The differentiator injects the measurement error through chained monotone
functions ``phi_i = varphi_i o ... o varphi_1`` where each ``varphi_i`` is a
sum of two signed power functions.  The powers come from two weight ladders,
one governing behavior near the origin (degree ``d0``) and one far from it
(degree ``dinf``).  Everything here is a pure function of the configuration
and broadcasts over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DegreeConfig",
    "WeightVectors",
    "InternalGains",
    "HomogeneousApprox",
    "signed_pow",
    "compute_weights",
    "varphi_eval",
    "varphi_prime",
    "phi_eval",
    "varphi_inverse",
    "homog_approx",
    "homog_limit_eval",
]

# Tolerances for the numerical inverse of varphi_i (see varphi_inverse).
INVERSE_RTOL = 1e-12
INVERSE_ATOL = 1e-15
INVERSE_MAX_ITER = 200


def signed_pow(s, p: float):
    """Signed power ``|s|**p * sign(s)`` with the convention ``0**0 = 0``.

    Evaluated as ``sign(s) * exp(p * log|s|)`` under the hood (numpy's
    float pow), which keeps fractional powers of negative arguments well
    defined and makes the function odd in ``s`` bit-exactly.
    """
    s = np.asarray(s, dtype=float)
    if p == 0.0:
        return np.sign(s)
    return np.sign(s) * np.abs(s) ** p


def _abs_pow(s, p: float):
    """``|s|**p`` with ``|0|**0 = 1`` (numpy default)."""
    return np.abs(np.asarray(s, dtype=float)) ** p


@dataclass(frozen=True)
class DegreeConfig:
    """Order and homogeneity-degree pair defining a differentiator family.

    ``n`` is the number of estimated states (order), ``d0`` the degree of the
    0-limit approximation and ``dinf`` the degree of the inf-limit one.
    Admissible range: ``-1 <= d0 <= dinf < 1/(n-1)`` (no upper bound for
    ``n == 1``).
    """

    n: int
    d0: float
    dinf: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"order n must be an integer >= 1, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not self.d0 >= -1.0:
            raise ValueError(f"degree d0 violates -1 <= d0: d0 = {self.d0}")
        if not self.d0 <= self.dinf:
            raise ValueError(
                f"degree ordering violated: d0 = {self.d0} > dinf = {self.dinf}"
            )
        if self.n > 1 and not self.dinf < 1.0 / (self.n - 1):
            raise ValueError(
                f"dinf violates dinf < 1/(n-1) = {1.0 / (self.n - 1)}: "
                f"dinf = {self.dinf}"
            )

    @property
    def is_homogeneous(self) -> bool:
        return self.d0 == self.dinf

    @property
    def is_discontinuous(self) -> bool:
        return self.d0 == -1.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class WeightVectors:
    """Weight ladders ``r0, rinf`` (indices 1..n+1) and cached power ratios.

    ``r0[i-1] = 1 - (n-i)*d0`` and likewise for ``rinf``; ``exp0[i-1]`` is
    the power ``r0[i+1]/r0[i]`` used by the first term of ``varphi_i``,
    ``expinf`` the second.  Ratios are precomputed once per configuration.
    """

    n: int
    r0: np.ndarray
    rinf: np.ndarray
    exp0: np.ndarray = field(repr=False)
    expinf: np.ndarray = field(repr=False)


def compute_weights(cfg: DegreeConfig) -> WeightVectors:
    """Build both weight ladders of a degree configuration.

    Raises ValueError (via DegreeConfig) when the degree bounds are violated.
    """
    n = cfg.n
    i = np.arange(1, n + 2, dtype=float)
    r0 = 1.0 - (n - i) * cfg.d0
    rinf = 1.0 - (n - i) * cfg.dinf
    exp0 = r0[1:] / r0[:-1]
    expinf = rinf[1:] / rinf[:-1]
    return WeightVectors(
        n=n,
        r0=_readonly(r0),
        rinf=_readonly(rinf),
        exp0=_readonly(exp0),
        expinf=_readonly(expinf),
    )


@dataclass(frozen=True)
class InternalGains:
    """Per-stage positive weights ``kappa_i`` (low-power) and ``theta_i``."""

    kappa: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        kappa = _readonly(np.atleast_1d(self.kappa))
        theta = _readonly(np.atleast_1d(self.theta))
        if kappa.shape != theta.shape or kappa.ndim != 1:
            raise ValueError("kappa and theta must be 1-d arrays of equal length")
        if np.any(kappa <= 0) or np.any(theta < 0):
            raise ValueError("internal gains must be positive (kappa > 0, theta >= 0)")
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, n: int, kappa: float = 1.0, theta: float = 1.0) -> "InternalGains":
        return cls(np.full(n, float(kappa)), np.full(n, float(theta)))

    @classmethod
    def balanced(cls, n: int, mu: float) -> "InternalGains":
        """Convenience split ``kappa_i = mu``, ``theta_i = 1 - mu``, 0 < mu < 1."""
        if not 0.0 < mu < 1.0:
            raise ValueError(f"mu must lie in (0, 1), got {mu}")
        return cls(np.full(n, mu), np.full(n, 1.0 - mu))

    @property
    def n(self) -> int:
        return self.kappa.shape[0]


def varphi_eval(i: int, s, weights: WeightVectors, gains: InternalGains):
    """Stage nonlinearity ``varphi_i(s)``, the sum of two signed powers.

    ``i`` is 1-based.  Odd in ``s``; strictly increasing (away from 0 in the
    discontinuous case i = n, d0 = -1, where the sign term uses sign(0) = 0).
    """
    k = i - 1
    return gains.kappa[k] * signed_pow(s, weights.exp0[k]) + gains.theta[
        k
    ] * signed_pow(s, weights.expinf[k])


def varphi_prime(i: int, s, weights: WeightVectors, gains: InternalGains):
    """Derivative of ``varphi_i`` (infinite at 0 when the low power < 1)."""
    k = i - 1
    a = weights.exp0[k]
    b = weights.expinf[k]
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        out = gains.kappa[k] * a * _abs_pow(s, a - 1.0) + gains.theta[
            k
        ] * b * _abs_pow(s, b - 1.0)
    return out


def phi_eval(i: int, z, weights: WeightVectors, gains: InternalGains):
    """Composed injection ``phi_i(z) = varphi_i(...varphi_1(z))``, 1-based."""
    out = np.asarray(z, dtype=float)
    for j in range(1, i + 1):
        out = varphi_eval(j, out, weights, gains)
    return out


def phi_chain(z, weights: WeightVectors, gains: InternalGains) -> np.ndarray:
    """All compositions ``[phi_1(z), ..., phi_n(z)]`` in one sweep."""
    vals = np.empty((weights.n,) + np.shape(np.asarray(z)), dtype=float)
    cur = np.asarray(z, dtype=float)
    for j in range(1, weights.n + 1):
        cur = varphi_eval(j, cur, weights, gains)
        vals[j - 1] = cur
    return vals


def _inverse_bracket(i: int, y_abs, weights: WeightVectors, gains: InternalGains):
    """Upper bracket for ``varphi_i^{-1}`` from the two single-power branches."""
    k = i - 1
    a = weights.exp0[k]
    b = weights.expinf[k]
    kap = gains.kappa[k]
    the = gains.theta[k]
    with np.errstate(divide="ignore", over="ignore"):
        up_a = (y_abs / kap) ** (1.0 / a) if kap > 0 else np.full_like(y_abs, np.inf)
        up_b = (y_abs / the) ** (1.0 / b) if the > 0 else np.full_like(y_abs, np.inf)
    return 2.0 * np.minimum(up_a, up_b)


def varphi_inverse(i: int, y, weights: WeightVectors, gains: InternalGains):
    """Numerical inverse of ``varphi_i`` for i = 1..n-1 (monotone bisection).

    Returns s with ``|varphi_i(s) - y| <= INVERSE_ATOL + INVERSE_RTOL*|y|``.
    The bracket comes from inverting each power branch alone; the sum of two
    increasing powers has no closed-form inverse.  Raises RuntimeError if the
    iteration cap is hit, which indicates a tolerance/bracketing bug rather
    than a domain error (varphi_i is surjective).
    """
    if not 1 <= i <= weights.n - 1 and weights.n > 1:
        raise ValueError(f"varphi_inverse index must be in 1..n-1, got {i}")
    y_arr = np.asarray(y, dtype=float)
    scalar = y_arr.ndim == 0
    y_abs = np.atleast_1d(np.abs(y_arr)).astype(float)
    sign = np.sign(np.atleast_1d(y_arr))

    lo = np.zeros_like(y_abs)
    hi = _inverse_bracket(i, y_abs, weights, gains)
    tol = INVERSE_ATOL + INVERSE_RTOL * y_abs

    sol = np.zeros_like(y_abs)
    done = y_abs == 0.0
    converged = done.copy()
    for _ in range(INVERSE_MAX_ITER):
        if converged.all():
            break
        mid = 0.5 * (lo + hi)
        f = varphi_eval(i, mid, weights, gains)
        err = f - y_abs
        hit = np.abs(err) <= tol
        newly = hit & ~converged
        sol[newly] = mid[newly]
        converged |= hit
        low_mask = (err < 0.0) & ~converged
        hi_mask = (err > 0.0) & ~converged
        lo[low_mask] = mid[low_mask]
        hi[hi_mask] = mid[hi_mask]
    else:
        bad = int(np.argmax(~converged))
        raise RuntimeError(
            f"varphi_inverse(i={i}) failed to converge for y = {y_abs[bad]!r} "
            f"within {INVERSE_MAX_ITER} bisection steps (bracket bug?)"
        )
    out = sign * sol
    return float(out[0]) if scalar else out.reshape(y_arr.shape)


@dataclass(frozen=True)
class HomogeneousApprox:
    """Coefficient/exponent tables of the 0- and inf-limit single-power maps.

    ``phi_{i,0}(s) = K0[i-1] * ceil(s)^(exponents0[i-1])`` approximates
    ``phi_i`` near 0, ``phi_{i,inf}`` likewise near infinity.
    """

    K0: np.ndarray
    Kinf: np.ndarray
    exponents0: np.ndarray
    exponentsInf: np.ndarray


def homog_approx(
    cfg: DegreeConfig, weights: WeightVectors, gains: InternalGains
) -> HomogeneousApprox:
    """Products ``K_{i,0} = prod_j kappa_j^(r0[i+1]/r0[j+1])`` and the
    inf-limit analogue, with exponents ``r0[i+1]/r0[1]`` / ``rinf[i+1]/rinf[1]``.

    The j = i factor always has unit power ratio (same weight over itself),
    which also covers the 0/0 case r0[n+1]/r0[n+1] at d0 = -1.
    """
    n = cfg.n
    K0 = np.empty(n)
    Kinf = np.empty(n)
    for i in range(1, n + 1):
        acc0 = 1.0
        accinf = 1.0
        for j in range(1, i + 1):
            e0 = 1.0 if j == i else weights.r0[i] / weights.r0[j]
            einf = 1.0 if j == i else weights.rinf[i] / weights.rinf[j]
            acc0 *= gains.kappa[j - 1] ** e0
            accinf *= gains.theta[j - 1] ** einf
        K0[i - 1] = acc0
        Kinf[i - 1] = accinf
    exponents0 = weights.r0[1:] / weights.r0[0]
    exponentsInf = weights.rinf[1:] / weights.rinf[0]
    return HomogeneousApprox(
        K0=_readonly(K0),
        Kinf=_readonly(Kinf),
        exponents0=_readonly(exponents0),
        exponentsInf=_readonly(exponentsInf),
    )


def homog_limit_eval(approx: HomogeneousApprox, i: int, s, which: str):
    """Evaluate ``phi_{i,0}`` (``which='0'``) or ``phi_{i,inf}`` at ``s``."""
    k = i - 1
    if which == "0":
        return approx.K0[k] * signed_pow(s, approx.exponents0[k])
    if which == "inf":
        return approx.Kinf[k] * signed_pow(s, approx.exponentsInf[k])
    raise ValueError("which must be '0' or 'inf'")
