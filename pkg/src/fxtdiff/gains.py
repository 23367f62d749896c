"""Gain ladders: validation, recursive synthesis and (alpha, L) scaling.

Gains are synthesized backwards: the last one is pinned by the supported
perturbation size, every earlier ratio must dominate a sampled maximization
of a cross-term/stage-term ratio.  The maximizations are evaluated on the
same dilated-sphere plan used for certification, with a near-manifold
exclusion tube and an unbounded-growth detector across the outermost radius
decades.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .injection import (
    DegreeConfig,
    InternalGains,
    WeightVectors,
    varphi_eval,
    varphi_inverse,
)
from .sampling import DEFAULT_RADII, dilate, sphere_directions

__all__ = [
    "GainLadder",
    "ScalingParams",
    "SynthesisError",
    "scale_gains",
    "design_for_targets",
    "validate_ladder",
    "synthesize_gains",
]

KN_MARGIN = 1.5  # kappa_n * k_n >= KN_MARGIN * Delta
OMEGA_SAFETY = 2.0
KTILDE_FLOOR = 1e-6
GROWTH_LIMIT = 1.1  # >10% growth between outermost decades = unbounded ratio
RATIO_DENOM_FLOOR = 1e-12


class SynthesisError(RuntimeError):
    """The sampled gain maximization did not stabilize across radii."""


def _readonly(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GainLadder:
    """Output-injection gains ``k_i`` and their ratios ``ktilde_i = k_i/k_{i-1}``.

    One representation is primary (whichever constructor was used), the
    other is derived from it, so the two stay consistent by construction.
    """

    k: np.ndarray
    ktilde: np.ndarray

    def __post_init__(self):
        k = _readonly(np.atleast_1d(self.k))
        kt = _readonly(np.atleast_1d(self.ktilde))
        if k.shape != kt.shape or k.ndim != 1:
            raise ValueError("k and ktilde must be 1-d arrays of equal length")
        if np.any(k <= 0) or np.any(kt <= 0):
            raise ValueError("gain ladder entries must be strictly positive")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "ktilde", kt)

    @classmethod
    def from_k(cls, k) -> "GainLadder":
        k = np.atleast_1d(np.asarray(k, dtype=float))
        prev = np.concatenate(([1.0], k[:-1]))
        return cls(k, k / prev)

    @classmethod
    def from_ktilde(cls, ktilde) -> "GainLadder":
        kt = np.atleast_1d(np.asarray(ktilde, dtype=float))
        return cls(np.cumprod(kt), kt)

    @property
    def n(self) -> int:
        return self.k.shape[0]

    @property
    def k_prefix(self) -> np.ndarray:
        """``[k_0, ..., k_{n-1}] = [1, k_1, ..., k_{n-1}]`` (error scaling)."""
        return np.concatenate(([1.0], self.k[:-1]))


@dataclass(frozen=True)
class ScalingParams:
    """Lipschitz-scale factor ``alpha`` and time-scale factor ``L``."""

    alpha: float
    L: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")


def scale_gains(
    cfg: DegreeConfig,
    gains: InternalGains,
    ladder: GainLadder,
    s: ScalingParams,
) -> tuple[InternalGains, GainLadder]:
    """Apply the two-parameter gain scaling.

    ``kappa_i -> c^(d0/r0_i) kappa_i``, ``theta_i -> c^(dinf/rinf_i) theta_i``
    with ``c = L^n/alpha``, and ``k_i -> L^i k_i``.  Composition of two
    scalings equals the scaling by the componentwise products.
    """
    from .injection import compute_weights

    w = compute_weights(cfg)
    c = s.L**cfg.n / s.alpha
    kappa = c ** (cfg.d0 / w.r0[: cfg.n]) * gains.kappa
    theta = c ** (cfg.dinf / w.rinf[: cfg.n]) * gains.theta
    k = s.L ** np.arange(1, cfg.n + 1, dtype=float) * ladder.k
    return InternalGains(kappa, theta), GainLadder.from_k(k)


def design_for_targets(
    Tbar_measured: float, Delta_base: float, Tstar: float, Deltastar: float
) -> ScalingParams:
    """Scaling pair reaching a target convergence time and Lipschitz bound.

    ``alpha = max(1, Delta*/Delta)`` enlarges the supported perturbation;
    ``L = max(1, Tbar/Tbar*)`` accelerates by the required factor (time
    scales as 1/L, so a smaller target time needs the measured/target
    ratio, not its reciprocal).
    """
    if Tstar <= 0 or Tbar_measured <= 0:
        raise ValueError("convergence times must be positive")
    if Deltastar > 0 and Delta_base <= 0:
        raise ValueError(
            "base design supports no perturbation; cannot scale to Delta* > 0"
        )
    alpha = max(1.0, Deltastar / Delta_base) if Deltastar > 0 else 1.0
    L = max(1.0, Tbar_measured / Tstar)
    return ScalingParams(alpha=alpha, L=L)


def validate_ladder(
    cfg: DegreeConfig,
    gains: InternalGains,
    ladder: GainLadder,
    Delta: float,
) -> tuple[bool, list[str]]:
    """Structural gain checks: positivity, ``kappa_n k_n > Delta``, and
    k/ktilde consistency.  The decay scan itself lives in the lyapunov
    module and is triggered separately."""
    problems: list[str] = []
    if ladder.n != cfg.n or gains.n != cfg.n:
        problems.append(
            f"ladder/gain length mismatch: order n={cfg.n}, "
            f"len(k)={ladder.n}, len(kappa)={gains.n}"
        )
        return False, problems
    if np.any(ladder.k <= 0) or np.any(ladder.ktilde <= 0):
        problems.append("gain ladder entries must be strictly positive")
    if Delta < 0:
        problems.append(f"Delta must be nonnegative, got {Delta}")
    if Delta > 0 and cfg.d0 != -1.0:
        problems.append(
            f"Delta = {Delta} > 0 requires d0 = -1 (exact differentiation); "
            f"got d0 = {cfg.d0}"
        )
    kn_kappa = float(gains.kappa[-1] * ladder.k[-1])
    if not kn_kappa > Delta:
        problems.append(
            f"last-gain condition kappa_n*k_n > Delta fails: "
            f"{kn_kappa} <= {Delta}"
        )
    recon = np.cumprod(ladder.ktilde)
    if not np.allclose(recon, ladder.k, rtol=1e-9, atol=0.0):
        problems.append("k and ktilde are inconsistent (k_i != prod ktilde_j)")
    return len(problems) == 0, problems


def _omega_ratio_samples(
    i: int,
    pts: np.ndarray,
    ktilde_tail: np.ndarray,
    delta_tilde: float,
    params,
    weights: WeightVectors,
    gains: InternalGains,
):
    """Numerator/denominator of the stage-i gain ratio on a sample batch.

    ``pts`` holds the free coordinates ``(z_i, ..., z_n)`` row-wise;
    ``ktilde_tail`` the already-chosen ratios ``(ktilde_{i+1}, ..., ktilde_n)``.
    The set-valued sign term of the last stage enters through its worst
    case at the committed relative perturbation ``delta_tilde``.
    """
    from .lyapunov import _s_from_xi, _sigma_from_xi, _stage_xi

    n = weights.n
    m = n - i + 1
    z = {i + c: pts[:, c] for c in range(m)}  # 1-based coordinate map
    z[n + 1] = np.zeros(pts.shape[0])

    # composition chain C_j = varphi_j(...varphi_i(z_i)) for j = i..n
    comp = {}
    cur = z[i]
    for j in range(i, n + 1):
        cur = varphi_eval(j, cur, weights, gains)
        comp[j] = cur

    xi = {j: _stage_xi(j, z[j + 1], weights, gains) for j in range(i, n + 1)}
    sig = {
        j: _sigma_from_xi(j, z[j], xi[j], params, weights) for j in range(i, n + 1)
    }
    sv = {
        j: _s_from_xi(j, z[j], xi[j], params, weights, gains)
        for j in range(i, n)
    }

    numer = np.zeros(pts.shape[0])
    for j in range(i + 1, n + 1):
        g = sig[j] + (sv[j - 1] if j - 1 >= i else 0.0)
        if j < n:
            numer += ktilde_tail[j - i - 1] * g * (z[j + 1] - comp[j])
        else:
            numer += ktilde_tail[j - i - 1] * (
                -g * comp[j] + np.abs(g) * gains.kappa[-1] * delta_tilde
            )
    denom = sig[i] * (comp[i] - z[i + 1])
    return numer, denom, comp[i]


def _estimate_omega(
    i: int,
    ktilde_tail: np.ndarray,
    delta_tilde: float,
    params,
    weights: WeightVectors,
    gains: InternalGains,
    directions: int,
    radii: np.ndarray,
    seed: int,
) -> float:
    """Sampled supremum of the stage-i ratio over dilated spheres.

    Samples inside the near-manifold tube (tiny denominator relative to its
    shell) are excluded; there the certified downstream terms make the ratio
    dive to -inf, so the exclusion cannot hide a genuine maximum.  Raises
    SynthesisError when the per-shell maxima keep growing at either end of
    the radius range.
    """
    n = weights.n
    m = n - i + 1
    dirs = sphere_directions(m, directions, seed=seed)
    sub_r0 = weights.r0[i - 1 : n]
    sub_rinf = weights.rinf[i - 1 : n]
    shell_max = []
    for rho in radii:
        pts = np.vstack([dilate(dirs, sub_r0, rho), dilate(dirs, sub_rinf, rho)])
        numer, denom, phi_i = _omega_ratio_samples(
            i, pts, ktilde_tail, delta_tilde, params, weights, gains
        )
        # near-manifold tube: the denominator vanishes exactly there, where
        # the certified downstream terms drive the ratio to -inf anyway
        tube = np.abs(phi_i - pts[:, 1]) <= 1e-9 * (
            np.abs(phi_i) + np.abs(pts[:, 1])
        )
        valid = (denom > RATIO_DENOM_FLOOR) & ~tube & np.isfinite(numer)
        if not np.any(valid):
            shell_max.append(-np.inf)
            continue
        shell_max.append(float(np.max(numer[valid] / denom[valid])))
    shell_max = np.asarray(shell_max)
    finite = shell_max[np.isfinite(shell_max)]
    if finite.size == 0:
        return -np.inf
    omega = float(np.max(finite))

    # growth detector: compare the outermost decade against its neighbor
    def _decade_max(sel):
        vals = shell_max[sel]
        vals = vals[np.isfinite(vals)]
        return float(np.max(vals)) if vals.size else -np.inf

    lo, hi = np.log10(radii[0]), np.log10(radii[-1])
    outer_hi = _decade_max(np.log10(radii) > hi - 1.0)
    inner_hi = _decade_max((np.log10(radii) > hi - 2.0) & (np.log10(radii) <= hi - 1.0))
    outer_lo = _decade_max(np.log10(radii) < lo + 1.0)
    inner_lo = _decade_max((np.log10(radii) < lo + 2.0) & (np.log10(radii) >= lo + 1.0))
    for outer, inner, side in ((outer_hi, inner_hi, "large"), (outer_lo, inner_lo, "small")):
        if outer > 0 and np.isfinite(inner) and inner > 0 and outer > GROWTH_LIMIT * inner:
            raise SynthesisError(
                f"stage {i} gain ratio keeps growing toward {side} radii "
                f"({outer:.4g} > {GROWTH_LIMIT} * {inner:.4g}); "
                "maximization looks unbounded"
            )
    return omega


def synthesize_gains(
    cfg: DegreeConfig,
    weights: WeightVectors,
    gains: InternalGains,
    Delta: float,
    params,
    *,
    directions: int = 2000,
    radii: np.ndarray = DEFAULT_RADII,
    seed: int = 0,
    certify: bool = True,
    certify_directions: int | None = None,
):
    """Backward gain synthesis with a final decay-scan certificate.

    The last gain is pinned so ``kappa_n k_n`` carries a 50% margin over
    ``Delta`` (committed relative perturbation 2/3); each earlier ratio is a
    safety factor times the sampled ratio supremum (floored).  Because the
    ratios are synthesized before the absolute last gain is known, the final
    ladder is rescaled-and-resynthesized until the margin holds; shrinking
    the realized relative perturbation below the committed one only adds
    slack, so the certificate remains valid.  Returns ``(ladder,
    certificate)``; the certificate is None when ``certify=False``.
    """
    from .lyapunov import estimate_eta

    n = cfg.n
    if Delta < 0:
        raise ValueError("Delta must be nonnegative")
    if Delta > 0 and cfg.d0 != -1.0:
        raise ValueError("Delta > 0 requires d0 = -1")

    delta_tilde = 1.0 / KN_MARGIN if Delta > 0 else 0.0
    ktilde = np.ones(n)
    if n == 1:
        # single-gain ladder: the last-stage condition alone suffices
        k1 = KN_MARGIN * Delta / gains.kappa[0] if Delta > 0 else 1.0
        ladder = GainLadder.from_k([k1])
        cert = (
            estimate_eta(
                params,
                weights,
                gains,
                ladder,
                Delta,
                directions=certify_directions or directions,
                radii=radii,
                seed=seed,
            )
            if certify
            else None
        )
        return ladder, cert

    # Backward ratio synthesis, then normalize the free last ratio so the
    # absolute last gain lands on its margin target.  The ratio suprema are
    # (nearly) linear in the downstream ratios, so a damped fixed point on
    # ktilde_n converges in a few sweeps; each sweep re-estimates every
    # omega with the current tail, keeping the certificate consistent.
    target_kn = KN_MARGIN * Delta / gains.kappa[-1] if Delta > 0 else None
    converged = Delta == 0.0
    for attempt in range(40):
        for i in range(n - 1, 0, -1):
            omega = _estimate_omega(
                i,
                ktilde[i:],
                delta_tilde,
                params,
                weights,
                gains,
                directions,
                radii,
                seed,
            )
            ktilde[i - 1] = OMEGA_SAFETY * max(omega, KTILDE_FLOOR)
        kn = float(np.prod(ktilde))
        if target_kn is None:
            converged = True
            break
        rho = target_kn / kn
        if 1.0 / 1.2 <= rho <= 1.001:  # kn within [~target, 1.2*target]
            converged = True
            break
        ktilde[-1] *= rho ** (1.0 / n)
    if not converged:
        raise SynthesisError(
            f"last-gain normalization did not converge to kappa_n*k_n ~ "
            f"{KN_MARGIN}*Delta (reached kappa_n*k_n = {gains.kappa[-1] * kn:g})"
        )
    if target_kn is not None and kn < target_kn:
        # float-level undershoot of the margin target: nudge the last ratio
        ktilde[-1] *= target_kn / kn * (1.0 + 1e-9)

    ladder = GainLadder.from_ktilde(ktilde)
    ok, problems = validate_ladder(cfg, gains, ladder, Delta)
    if not ok:
        raise SynthesisError("synthesized ladder failed validation: " + "; ".join(problems))
    cert = None
    if certify:
        cert = estimate_eta(
            params,
            weights,
            gains,
            ladder,
            Delta,
            directions=certify_directions or directions,
            radii=radii,
            seed=seed,
        )
    return ladder, cert
