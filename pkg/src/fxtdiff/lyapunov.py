"""Smooth bl-homogeneous Lyapunov function, its derivative form and the
fixed-time certificate.

The function is a sum of stage costs ``Z_i`` that vanish exactly on the
nested manifolds ``varphi_i(z_i) = z_{i+1}``.  Its derivative along the
error dynamics collapses to a weighted sum of non-positive stage terms; the
worst case over the set-valued sign term is evaluated single-valuedly as
``W*``.  Decay constants and the resulting fixed-time bound are estimated by
sampling scans over dilated spheres, which makes the output a numerical
certificate rather than a proof.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .injection import (
    DegreeConfig,
    InternalGains,
    WeightVectors,
    _abs_pow,
    phi_chain,
    signed_pow,
    varphi_inverse,
)
from .sampling import DEFAULT_RADII, dilated_shells, sphere_directions

__all__ = [
    "LyapunovParams",
    "DecayCertificate",
    "CertificationError",
    "default_p",
    "check_p",
    "Z_i",
    "lyapunov_V",
    "sigma_i",
    "s_i",
    "W_star",
    "estimate_eta",
    "fixed_time_bound",
]

PINF_INFLATION = 1.05
ETA_SAFETY = 2.0
RATIO_DENOM_FLOOR = 1e-12


class CertificationError(RuntimeError):
    """A sampled negativity/decay scan failed; gains are not certified."""


@dataclass(frozen=True)
class LyapunovParams:
    """Homogeneity exponents ``p0, pinf`` and stage coefficients ``beta``."""

    p0: float
    pinf: float
    beta0: np.ndarray
    betainf: np.ndarray

    def __post_init__(self):
        beta0 = np.atleast_1d(np.asarray(self.beta0, dtype=float))
        betainf = np.atleast_1d(np.asarray(self.betainf, dtype=float))
        if self.p0 <= 0 or self.pinf <= 0:
            raise ValueError("p0 and pinf must be positive")
        if beta0.shape != betainf.shape or beta0.ndim != 1:
            raise ValueError("beta0 and betainf must be 1-d arrays of equal length")
        if np.any(beta0 <= 0) or np.any(betainf <= 0):
            raise ValueError("beta coefficients must be strictly positive")
        object.__setattr__(self, "beta0", beta0)
        object.__setattr__(self, "betainf", betainf)

    @classmethod
    def with_default_beta(cls, n: int, p0: float, pinf: float) -> "LyapunovParams":
        return cls(p0, pinf, np.ones(n), np.ones(n))


@dataclass(frozen=True)
class DecayCertificate:
    """Sampled decay constants and the fixed-time bound they imply.

    ``min_margin`` is the smallest sampled value of ``-W*/(V^a + V^b)``;
    the decay constants carry a safety factor and ``Tbar`` is evaluated
    from them verbatim (None outside the fixed-time regime d0 < 0 < dinf).
    """

    eta0: float
    etainf: float
    Tbar: Optional[float]
    sample_count: int
    min_margin: float
    p0: float
    pinf: float
    d0: float
    dinf: float


def _degrees_from_weights(weights: WeightVectors) -> tuple[float, float]:
    return float(weights.r0[1] - weights.r0[0]), float(weights.rinf[1] - weights.rinf[0])


def default_p(cfg: DegreeConfig, weights: WeightVectors) -> tuple[float, float]:
    """Smallest exponent pair satisfying the degree conditions.

    ``p0`` is the max of the cross-weight bound over all stages; ``pinf``
    starts at its own bound and is inflated multiplicatively until the
    strict ordering ``p0/r0_i < pinf/rinf_i`` holds at every stage (small
    exponents keep the floating-point range manageable).
    """
    r0 = weights.r0[: cfg.n]
    rinf = weights.rinf[: cfg.n]
    p0 = float(np.max(r0 / rinf * (2.0 * rinf + cfg.dinf)))
    pinf = float(2.0 * np.max(rinf) + cfg.dinf)
    while not np.all(p0 / r0 < pinf / rinf):
        pinf *= PINF_INFLATION
    return p0, pinf


def check_p(p0: float, pinf: float, weights: WeightVectors) -> tuple[bool, str]:
    """Check both exponent conditions; the diagnostic names the first
    violated stage index (1-based)."""
    n = weights.n
    d0, dinf = _degrees_from_weights(weights)
    r0 = weights.r0[:n]
    rinf = weights.rinf[:n]
    bound0 = r0 / rinf * (2.0 * rinf + dinf)
    if p0 < np.max(bound0):
        i = int(np.argmax(bound0)) + 1
        return False, f"p0 = {p0} violates p0 >= {np.max(bound0)} (stage i={i})"
    if pinf < 2.0 * np.max(rinf) + dinf:
        return False, f"pinf = {pinf} violates pinf >= {2.0 * np.max(rinf) + dinf}"
    strict = p0 / r0 < pinf / rinf
    if not np.all(strict):
        i = int(np.argmax(~strict)) + 1
        note = ""
        if d0 == dinf:
            note = " (homogeneous case d0 = dinf collapses the two approximations)"
        return False, (
            f"exponent ordering p0/r0_i < pinf/rinf_i fails at i={i}: "
            f"{p0 / r0[i - 1]} >= {pinf / rinf[i - 1]}{note}"
        )
    return True, "ok"


def _stage_xi(i, z_next, weights, gains):
    """xi = varphi_i^{-1}(z_{i+1}); the i = n stage pins xi = 0."""
    if i >= weights.n:
        return np.zeros_like(np.asarray(z_next, dtype=float))
    return varphi_inverse(i, z_next, weights, gains)


def _Z_terms(i, z_i, xi, params, weights):
    """Both power terms of the stage cost Z_i given a precomputed xi."""
    z_i = np.asarray(z_i, dtype=float)
    out = 0.0
    for p, r, beta in (
        (params.p0, weights.r0[i - 1], params.beta0[i - 1]),
        (params.pinf, weights.rinf[i - 1], params.betainf[i - 1]),
    ):
        q = (p - r) / r
        out = out + beta * (
            (r / p) * _abs_pow(z_i, p / r)
            - z_i * signed_pow(xi, q)
            + (q * r / p) * _abs_pow(xi, p / r)
        )
    return out


def Z_i(i: int, z_i, z_next, params: LyapunovParams, weights: WeightVectors, gains: InternalGains):
    """Stage cost ``Z_i(z_i, z_{i+1})``; nonnegative, zero exactly on the
    manifold ``varphi_i(z_i) = z_{i+1}`` (for i = n the pinning is z = 0)."""
    xi = _stage_xi(i, z_next, weights, gains)
    return _Z_terms(i, z_i, xi, params, weights)


def lyapunov_V(z, params: LyapunovParams, weights: WeightVectors, gains: InternalGains):
    """Lyapunov function: sum of the stage costs over i = 1..n.

    ``z`` has shape (..., n); broadcasts over leading axes.
    """
    z = np.asarray(z, dtype=float)
    n = weights.n
    total = 0.0
    for i in range(1, n):
        total = total + Z_i(i, z[..., i - 1], z[..., i], params, weights, gains)
    total = total + Z_i(n, z[..., n - 1], 0.0, params, weights, gains)
    return total


def _sigma_from_xi(i, z_i, xi, params, weights):
    out = 0.0
    for p, r, beta in (
        (params.p0, weights.r0[i - 1], params.beta0[i - 1]),
        (params.pinf, weights.rinf[i - 1], params.betainf[i - 1]),
    ):
        q = (p - r) / r
        out = out + beta * (signed_pow(z_i, q) - signed_pow(xi, q))
    return out


def sigma_i(i: int, z_i, z_next, params: LyapunovParams, weights: WeightVectors, gains: InternalGains):
    """Partial derivative of Z_i in its first argument (closed form)."""
    xi = _stage_xi(i, z_next, weights, gains)
    return _sigma_from_xi(i, np.asarray(z_i, dtype=float), xi, params, weights)


def _s_from_xi(i, z_i, xi, params, weights, gains):
    """Partial of Z_i in z_{i+1} with the inverse-derivative folded in.

    Written as ``-beta*q*(z_i - xi) / (ka*|xi|^(a-1-m) + tb*|xi|^(b-1-m))``
    so the xi -> 0 limit evaluates cleanly (all four exponents are <= 0
    under the exponent conditions, so the denominator only grows there).
    """
    k = i - 1
    a = weights.exp0[k]
    b = weights.expinf[k]
    ka = gains.kappa[k] * a
    tb = gains.theta[k] * b
    z_i = np.asarray(z_i, dtype=float)
    diff = z_i - xi
    out = 0.0
    for p, r, beta in (
        (params.p0, weights.r0[k], params.beta0[k]),
        (params.pinf, weights.rinf[k], params.betainf[k]),
    ):
        q = (p - r) / r
        m = (p - 2.0 * r) / r
        with np.errstate(divide="ignore"):
            den = ka * _abs_pow(xi, a - 1.0 - m) + tb * _abs_pow(xi, b - 1.0 - m)
        term = np.where(np.isinf(den), 0.0, -beta * q * diff / den)
        out = out + term
    return out


def s_i(i: int, z_i, z_next, params: LyapunovParams, weights: WeightVectors, gains: InternalGains):
    """Partial derivative of Z_i in its second argument; s_n is identically 0."""
    if i >= weights.n:
        return np.zeros_like(np.asarray(z_i, dtype=float))
    xi = _stage_xi(i, z_next, weights, gains)
    return _s_from_xi(i, z_i, xi, params, weights, gains)


def _grad_stage_terms(z, params, weights, gains):
    """sigma_i and s_i for all stages of a batch ``z`` of shape (..., n).

    Returns (sigma, s) arrays shaped like z; inverse evaluations are shared
    between the two.
    """
    z = np.asarray(z, dtype=float)
    n = weights.n
    sigma = np.empty_like(z)
    s = np.zeros_like(z)
    for i in range(1, n + 1):
        z_next = z[..., i] if i < n else 0.0
        xi = _stage_xi(i, z_next, weights, gains)
        sigma[..., i - 1] = _sigma_from_xi(i, z[..., i - 1], xi, params, weights)
        if i < n:
            s[..., i - 1] = _s_from_xi(i, z[..., i - 1], xi, params, weights, gains)
    return sigma, s


def W_star(
    z,
    params: LyapunovParams,
    weights: WeightVectors,
    gains: InternalGains,
    gain_ladder,
    Delta: float = 0.0,
):
    """Worst-case derivative form ``W*(z)``; negativity certifies decay.

    The set-valued sign term of the last stage is replaced by its maximum
    over the perturbation interval: ``-kt_n*g_n*phi_n(z1) + kt_n*|g_n|*Delta/k_n``
    with ``g_n = s_{n-1} + sigma_n``.  Requires ``Delta = 0`` unless
    ``d0 = -1``, and ``Delta < kappa_n * k_n`` there.
    """
    d0, _ = _degrees_from_weights(weights)
    n = weights.n
    kt = np.asarray(gain_ladder.ktilde, dtype=float)
    kn = float(np.asarray(gain_ladder.k, dtype=float)[-1])
    if Delta < 0:
        raise ValueError("Delta must be nonnegative")
    if Delta > 0 and d0 != -1.0:
        raise ValueError("a nonzero Lipschitz bound requires d0 = -1")
    if Delta > 0 and not Delta < gains.kappa[-1] * kn:
        raise ValueError(
            f"Delta = {Delta} violates kappa_n*k_n > Delta "
            f"(kappa_n*k_n = {gains.kappa[-1] * kn})"
        )
    z = np.asarray(z, dtype=float)
    sigma, s = _grad_stage_terms(z, params, weights, gains)
    chain = phi_chain(z[..., 0], weights, gains)  # (n, ...) leading stage axis

    out = 0.0
    for j in range(1, n):
        g = sigma[..., j - 1] + (s[..., j - 2] if j >= 2 else 0.0)
        out = out + (-kt[j - 1]) * g * (chain[j - 1] - z[..., j])
    g_n = sigma[..., n - 1] + (s[..., n - 2] if n >= 2 else 0.0)
    out = out + (-kt[n - 1]) * g_n * chain[n - 1] + kt[n - 1] * np.abs(g_n) * (
        Delta / kn
    )
    return out


def decay_exponents(params: LyapunovParams, d0: float, dinf: float) -> tuple[float, float]:
    return (params.p0 + d0) / params.p0, (params.pinf + dinf) / params.pinf


def estimate_eta(
    params: LyapunovParams,
    weights: WeightVectors,
    gains: InternalGains,
    gain_ladder,
    Delta: float = 0.0,
    *,
    directions: int = 2000,
    radii: np.ndarray = DEFAULT_RADII,
    seed: int = 0,
) -> DecayCertificate:
    """Sampled decay certificate over the dilated-sphere plan.

    Every sampled ``W*`` must be strictly negative; the decay constants are
    the sampled minimum of ``-W*/(V^a + V^b)`` divided by a safety factor
    (sampled minima overestimate the true infimum).  Samples whose
    denominator is below the floor sit in the near-origin exclusion tube and
    are skipped (their scale is covered by homogeneity of the plan).
    """
    d0, dinf = _degrees_from_weights(weights)
    a, b = decay_exponents(params, d0, dinf)
    dirs = sphere_directions(weights.n, directions, seed=seed)
    min_ratio = np.inf
    valid = 0
    for rho, pts in dilated_shells(dirs, weights.r0[: weights.n], weights.rinf[: weights.n], radii):
        w = W_star(pts, params, weights, gains, gain_ladder, Delta)
        if np.any(w >= 0.0):
            idx = int(np.argmax(w >= 0.0))
            raise CertificationError(
                f"W* is not negative at radius {rho:g}: W*={w[idx]:.6g} at "
                f"z={pts[idx]!r} (gains not certified)"
            )
        v = lyapunov_V(pts, params, weights, gains)
        denom = v**a + v**b
        mask = denom >= RATIO_DENOM_FLOOR
        if np.any(mask):
            ratios = -w[mask] / denom[mask]
            min_ratio = min(min_ratio, float(np.min(ratios)))
            valid += int(np.count_nonzero(mask))
    if not np.isfinite(min_ratio) or valid == 0:
        raise CertificationError("no valid samples above the denominator floor")
    if min_ratio <= 0.0:
        raise CertificationError(
            f"sampled decay ratio is not positive (min {min_ratio:.6g})"
        )
    eta = min_ratio / ETA_SAFETY
    tbar = None
    if d0 < 0.0 < dinf:
        tbar = fixed_time_bound(eta, eta, params.p0, params.pinf, d0, dinf)
    return DecayCertificate(
        eta0=eta,
        etainf=eta,
        Tbar=tbar,
        sample_count=valid,
        min_margin=min_ratio,
        p0=params.p0,
        pinf=params.pinf,
        d0=d0,
        dinf=dinf,
    )


def fixed_time_bound(
    eta0: float, etainf: float, p0: float, pinf: float, d0: float, dinf: float
) -> float:
    """Fixed-time bound from the decay inequality, taken verbatim.

    Valid for d0 < 0 < dinf with positive decay constants; the two negative
    factors cancel.  A non-positive result is reported as an anomaly rather
    than silently rectified.
    """
    if not (d0 < 0.0 < dinf):
        raise ValueError(f"fixed-time bound requires d0 < 0 < dinf, got ({d0}, {dinf})")
    if eta0 <= 0.0 or etainf <= 0.0:
        raise ValueError("decay constants must be positive")
    ratio = (pinf * d0) / (p0 * dinf) - 1.0
    tbar = (p0 / (d0 * etainf)) * ratio * (eta0 / etainf) ** (1.0 / ratio)
    if not tbar > 0.0:
        raise ArithmeticError(
            f"fixed-time bound evaluated non-positive ({tbar}); "
            "check the exponent configuration"
        )
    return float(tbar)
