"""Test signals with exact analytic derivatives and bounded noise.

Signals carry their own Lipschitz bookkeeping: the bound on the n-th
derivative is either supplied (and checked against a dense grid) or derived
analytically where the waveform allows it.  Noise is uniformly bounded by
construction; there is no stochastic (unbounded) model here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["NoiseSpec", "SignalSpec", "eval_signal", "sample_noise"]

DELTA_GRID_POINTS = 100_000
DELTA_GRID_INFLATION = 1.01


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer; uint64 array in, uint64 array out."""
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@dataclass(frozen=True)
class NoiseSpec:
    """Bounded measurement noise: |nu(t)| <= epsilon for every sample.

    The uniform kind hashes (seed, t) into [-eps, eps], so a sample is a
    pure function of time and seed; the sinusoidal kind is analytic.
    """

    kind: str
    epsilon: float
    seed: int = 0
    omega: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform-bounded", "sinusoidal"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


def sample_noise(spec: Optional[NoiseSpec], t):
    """Noise sample(s) at time(s) t; deterministic given (seed, t)."""
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    if spec is None or spec.epsilon == 0.0:
        out = np.zeros_like(t_arr)
        return float(out) if scalar else out
    if spec.kind == "sinusoidal":
        out = spec.epsilon * np.sin(spec.omega * t_arr + spec.phase)
        return float(out) if scalar else out
    bits = np.ascontiguousarray(np.atleast_1d(t_arr)).view(np.uint64)
    seed_h = _splitmix64(np.full(1, spec.seed % 2**64, dtype=np.uint64))[0]
    h = _splitmix64(seed_h ^ bits)
    u = (h >> np.uint64(11)) * 2.0**-53  # [0, 1)
    out = spec.epsilon * (2.0 * u - 1.0)
    return float(out[0]) if scalar else out.reshape(t_arr.shape)


@dataclass(frozen=True)
class SignalSpec:
    """Base signal with exact derivatives up to the differentiator order.

    kinds:
      polynomial      -- coefficients, ascending powers of t
      sinusoid-mix    -- terms [(amp, omega, phase)], sum of amp*sin(w t + p)
      custom-harmonic -- fundamental plus harmonics [(mult, amp, phase)]

    ``Delta`` bounds |f0^(n)|; pass None to derive it (analytically for
    sinusoids, from an inflated dense-grid max for polynomials).  A supplied
    bound is checked against the grid max over the horizon.
    """

    kind: str
    n: int
    coefficients: tuple = ()
    terms: tuple = ()
    fundamental: float = 0.0
    Delta: Optional[float] = None
    noise: Optional[NoiseSpec] = None
    horizon: float = 100.0
    _terms_flat: tuple = field(init=False, repr=False, default=())

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("differentiator order n must be >= 1")
        if self.kind == "polynomial":
            coeffs = tuple(float(c) for c in self.coefficients)
            if not coeffs:
                coeffs = (0.0,)
            object.__setattr__(self, "coefficients", coeffs)
        elif self.kind == "sinusoid-mix":
            flat = tuple((float(a), float(w), float(p)) for a, w, p in self.terms)
            object.__setattr__(self, "_terms_flat", flat)
        elif self.kind == "custom-harmonic":
            if self.fundamental <= 0:
                raise ValueError("custom-harmonic needs a positive fundamental")
            flat = tuple(
                (float(a), float(m) * self.fundamental, float(p))
                for m, a, p in self.terms
            )
            object.__setattr__(self, "_terms_flat", flat)
        else:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        object.__setattr__(self, "Delta", self._resolve_delta())

    # -- derivative machinery -------------------------------------------------

    def _poly_derivative_coeffs(self, order: int) -> np.ndarray:
        c = np.asarray(self.coefficients, dtype=float)
        for _ in range(order):
            if c.size <= 1:
                return np.zeros(1)
            c = c[1:] * np.arange(1, c.size, dtype=float)
        return c

    def _eval(self, t, order: int):
        t = np.asarray(t, dtype=float)
        if self.kind == "polynomial":
            c = self._poly_derivative_coeffs(order)
            return np.polynomial.polynomial.polyval(t, c)
        out = np.zeros_like(t, dtype=float)
        half_pi = 0.5 * math.pi
        for amp, w, ph in self._terms_flat:
            out = out + amp * w**order * np.sin(w * t + ph + order * half_pi)
        return out

    def _analytic_bound(self) -> Optional[float]:
        if self.kind == "polynomial":
            if len(self.coefficients) - 1 < self.n:
                return 0.0
            return None
        return float(sum(abs(a) * w**self.n for a, w, _ in self._terms_flat))

    def _grid_max(self) -> float:
        t = np.linspace(0.0, self.horizon, DELTA_GRID_POINTS)
        return float(np.max(np.abs(self._eval(t, self.n))))

    def _resolve_delta(self) -> float:
        analytic = self._analytic_bound()
        if self.Delta is None:
            if analytic is not None:
                return analytic
            return DELTA_GRID_INFLATION * self._grid_max()
        delta = float(self.Delta)
        if delta < 0:
            raise ValueError("Delta must be nonnegative")
        gmax = self._grid_max()
        if gmax > delta:
            raise ValueError(
                f"Delta = {delta} is not a valid bound: |f0^({self.n})| reaches "
                f"{gmax} on the horizon"
            )
        return delta

    @property
    def signal_class(self) -> str:
        """'S0' for the polynomial-type class (f0^(n) == 0), else 'SDelta'."""
        if self.kind == "polynomial" and len(self.coefficients) - 1 < self.n:
            return "S0"
        if all(a == 0.0 for a, _, _ in self._terms_flat) and self.kind != "polynomial":
            return "S0"
        return "SDelta"


def eval_signal(spec: SignalSpec, t, derivative_order: int = 0, measured: bool = False):
    """Exact derivative of the base signal; optionally the noisy measurement.

    ``measured=True`` is only meaningful at order 0 and adds the noise
    realization on top of the clean value.
    """
    if derivative_order < 0 or derivative_order > spec.n:
        raise ValueError(
            f"derivative order must be in 0..{spec.n}, got {derivative_order}"
        )
    out = spec._eval(t, derivative_order)
    if measured:
        if derivative_order != 0:
            raise ValueError("measured signal only exists at derivative order 0")
        out = out + sample_noise(spec.noise, t)
    if np.ndim(t) == 0:
        return float(out)
    return out
