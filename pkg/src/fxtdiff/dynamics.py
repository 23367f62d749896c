"""Right-hand sides and fixed-step Euler integration of the differentiator.

Explicit forward Euler at fixed dt is the deliberate choice: the d0 = -1
case has a discontinuous right-hand side where smooth high-order schemes
lose their order anyway, and a plain scheme keeps the chattering behavior
honest and auditable.  The sign discontinuity is integrated single-valuedly
with sign(0) = 0; an optional saturation width exists for comparison runs
but is off by default.  Batches of runs advance in lockstep inside a
compiled kernel; elementwise arithmetic keeps per-run results identical to
single-run integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .gains import GainLadder
from .injection import InternalGains, WeightVectors, phi_chain

__all__ = [
    "Trajectory",
    "DivergenceError",
    "differentiator_rhs",
    "error_rhs",
    "integrate",
    "integrate_batch",
    "measure_convergence_time",
]

GUARD_FACTOR = 1e12


@dataclass
class Trajectory:
    """Recorded samples of one integration run.

    ``states`` holds the raw integrated variables (observer states for the
    full form, normalized errors for the error form); ``e`` the derived
    differentiation errors, with ``norm_e`` their Euclidean norm.  ``V`` is
    filled only when a Lyapunov parameterization is supplied to the
    integrator.  ``status`` is 0 for a clean run, 3 when the divergence
    guard tripped at step ``diverged_at`` (states stay frozen at the last
    valid sample from there on).
    """

    t: np.ndarray
    states: np.ndarray
    e: np.ndarray
    norm_e: np.ndarray
    dt: float
    record_every: int
    kind: str
    status: int = 0
    diverged_at: Optional[int] = None
    V: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)


class DivergenceError(RuntimeError):
    """State norm exceeded the divergence guard; carries the partial run."""

    def __init__(self, message: str, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


@njit(cache=True, inline="always")
def _spow(s, p):
    if p == 0.0:
        if s > 0.0:
            return 1.0
        elif s < 0.0:
            return -1.0
        return 0.0
    if s > 0.0:
        return s**p
    elif s < 0.0:
        return -((-s) ** p)
    return 0.0


@njit(cache=True, inline="always")
def _sign_sat(s, width):
    if width <= 0.0:
        if s > 0.0:
            return 1.0
        elif s < 0.0:
            return -1.0
        return 0.0
    v = s / width
    if v > 1.0:
        return 1.0
    if v < -1.0:
        return -1.0
    return v


@njit(cache=True)
def _euler_kernel(
    x0,
    drive,
    dbar,
    dt,
    gains_out,
    kappa,
    theta,
    exp0,
    expinf,
    full_form,
    record_every,
    guard_factor,
    sat_width,
):
    """Lockstep Euler for a batch of runs.

    ``drive[step]`` is the measured signal (full form) or the noise sample
    (error form); ``dbar`` is the normalized perturbation (error form only).
    ``gains_out`` holds k_i (full) or ktilde_i (error).  Returns the record
    buffer plus per-run status and divergence step.
    """
    m, n = x0.shape
    nsteps = drive.shape[0]
    nrec = nsteps // record_every + 1
    rec = np.empty((nrec, m, n))
    status = np.zeros(m, dtype=np.int64)
    div_step = np.full(m, -1, dtype=np.int64)

    x = x0.copy()
    guard2 = np.empty(m)
    for r in range(m):
        s2 = 0.0
        for j in range(n):
            s2 += x0[r, j] * x0[r, j]
        g = guard_factor * (1.0 + np.sqrt(s2))
        guard2[r] = g * g
        for j in range(n):
            rec[0, r, j] = x0[r, j]

    chain = np.empty(n)
    new = np.empty(n)
    for step in range(nsteps):
        for r in range(m):
            if status[r] != 0:
                continue
            # measured error (full) / noise-shifted first error (error form)
            cur = x[r, 0] - drive[step]
            for j in range(n):
                if exp0[j] == 0.0:
                    lo = _sign_sat(cur, sat_width)
                else:
                    lo = _spow(cur, exp0[j])
                cur = kappa[j] * lo + theta[j] * _spow(cur, expinf[j])
                chain[j] = cur
            if full_form:
                for j in range(n - 1):
                    new[j] = x[r, j] + dt * (-gains_out[j] * chain[j] + x[r, j + 1])
                new[n - 1] = x[r, n - 1] + dt * (-gains_out[n - 1] * chain[n - 1])
            else:
                for j in range(n - 1):
                    new[j] = x[r, j] + dt * (
                        -gains_out[j] * (chain[j] - x[r, j + 1])
                    )
                new[n - 1] = x[r, n - 1] + dt * (
                    -gains_out[n - 1] * (chain[n - 1] - dbar[step])
                )
            ok = True
            s2 = 0.0
            for j in range(n):
                v = new[j]
                if not np.isfinite(v):
                    ok = False
                s2 += v * v
            if (not ok) or s2 > guard2[r]:
                status[r] = 3
                div_step[r] = step + 1
            else:
                for j in range(n):
                    x[r, j] = new[j]
        if (step + 1) % record_every == 0:
            idx = (step + 1) // record_every
            for r in range(m):
                for j in range(n):
                    rec[idx, r, j] = x[r, j]
    return rec, status, div_step


def differentiator_rhs(
    x,
    f_sample: float,
    weights: WeightVectors,
    gains: InternalGains,
    ladder: GainLadder,
):
    """Observer-form right-hand side at one measurement sample."""
    x = np.asarray(x, dtype=float)
    chain = phi_chain(x[0] - f_sample, weights, gains)
    out = np.empty_like(x)
    out[:-1] = -ladder.k[:-1] * chain[:-1] + x[1:]
    out[-1] = -ladder.k[-1] * chain[-1]
    return out


def error_rhs(
    z,
    nu: float,
    delta_bar: float,
    weights: WeightVectors,
    gains: InternalGains,
    ladder: GainLadder,
):
    """Normalized error-form right-hand side."""
    z = np.asarray(z, dtype=float)
    chain = phi_chain(z[0] - nu, weights, gains)
    out = np.empty_like(z)
    out[:-1] = -ladder.ktilde[:-1] * (chain[:-1] - z[1:])
    out[-1] = -ladder.ktilde[-1] * (chain[-1] - delta_bar)
    return out


def _num_steps(dt: float, t_final: float) -> int:
    if dt <= 0 or t_final <= 0:
        raise ValueError("dt and t_final must be positive")
    steps = int(round(t_final / dt))
    if steps < 1:
        raise ValueError(f"horizon shorter than one step: t_final={t_final}, dt={dt}")
    return steps


def integrate_batch(
    rhs_kind: str,
    initial: np.ndarray,
    *,
    weights: WeightVectors,
    gains: InternalGains,
    ladder: GainLadder,
    signal=None,
    dt: float,
    t_final: float,
    record_every: int = 1,
    with_noise: bool = True,
    nu_series: Optional[np.ndarray] = None,
    dbar_series: Optional[np.ndarray] = None,
    guard_factor: float = GUARD_FACTOR,
    sat_width: float = 0.0,
    lyapunov_params=None,
    metadata: Optional[dict] = None,
) -> list[Trajectory]:
    """Integrate a batch of runs in lockstep; one Trajectory per row.

    The error form needs per-step noise and normalized-perturbation series,
    taken from ``signal`` unless overridden explicitly.  The full form
    integrates the observer against the measured signal ``f0 + nu``.
    """
    if rhs_kind not in ("full", "error"):
        raise ValueError(f"rhs_kind must be 'full' or 'error', got {rhs_kind!r}")
    x0 = np.atleast_2d(np.asarray(initial, dtype=float))
    m, n = x0.shape
    if n != weights.n:
        raise ValueError(f"state dimension {n} does not match order {weights.n}")
    steps = _num_steps(dt, t_final)
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    tgrid = np.arange(steps, dtype=float) * dt

    from .signals import eval_signal, sample_noise

    if rhs_kind == "full":
        if signal is None:
            raise ValueError("the full form requires a signal")
        drive = eval_signal(signal, tgrid, 0)
        if with_noise and signal.noise is not None:
            drive = drive + sample_noise(signal.noise, tgrid)
        dbar = np.zeros(steps)
        gains_out = ladder.k
    else:
        if nu_series is not None:
            drive = np.asarray(nu_series, dtype=float)
        elif signal is not None and signal.noise is not None and with_noise:
            drive = sample_noise(signal.noise, tgrid)
        else:
            drive = np.zeros(steps)
        if dbar_series is not None:
            dbar = np.asarray(dbar_series, dtype=float)
        elif signal is not None:
            dbar = -eval_signal(signal, tgrid, weights.n) / ladder.k[-1]
        else:
            dbar = np.zeros(steps)
        if drive.shape[0] != steps or dbar.shape[0] != steps:
            raise ValueError("nu/dbar series must have one entry per step")
        gains_out = ladder.ktilde

    rec, status, div_step = _euler_kernel(
        x0,
        np.ascontiguousarray(drive),
        np.ascontiguousarray(dbar),
        float(dt),
        np.ascontiguousarray(gains_out),
        np.ascontiguousarray(gains.kappa),
        np.ascontiguousarray(gains.theta),
        np.ascontiguousarray(weights.exp0),
        np.ascontiguousarray(weights.expinf),
        rhs_kind == "full",
        int(record_every),
        float(guard_factor),
        float(sat_width),
    )
    t_rec = np.arange(rec.shape[0], dtype=float) * (record_every * dt)

    trajectories = []
    for r in range(m):
        states = rec[:, r, :]
        if rhs_kind == "full":
            deriv = np.stack(
                [eval_signal(signal, t_rec, k) for k in range(n)], axis=1
            )
            e = states - deriv
        else:
            e = states * ladder.k_prefix
        norm_e = np.linalg.norm(e, axis=1)
        V = None
        if lyapunov_params is not None:
            from .lyapunov import lyapunov_V

            zrec = e / ladder.k_prefix
            V = lyapunov_V(zrec, lyapunov_params, weights, gains)
        trajectories.append(
            Trajectory(
                t=t_rec,
                states=states.copy(),
                e=e,
                norm_e=norm_e,
                dt=float(dt),
                record_every=int(record_every),
                kind=rhs_kind,
                status=int(status[r]),
                diverged_at=int(div_step[r]) if status[r] != 0 else None,
                V=V,
                metadata=dict(metadata or {}),
            )
        )
    return trajectories


def integrate(
    rhs_kind: str,
    initial,
    *,
    raise_on_divergence: bool = True,
    **kwargs,
) -> Trajectory:
    """Single-run integration; raises DivergenceError if the guard trips."""
    traj = integrate_batch(rhs_kind, np.atleast_2d(initial), **kwargs)[0]
    if traj.status != 0 and raise_on_divergence:
        raise DivergenceError(
            f"state norm exceeded the divergence guard at step {traj.diverged_at} "
            f"(t = {traj.diverged_at * traj.dt:.6g}); unstable gains or too-large dt",
            traj,
        )
    return traj


def measure_convergence_time(traj: Trajectory, threshold: float) -> Optional[float]:
    """Earliest recorded time after which ``|e|`` stays at or below threshold.

    Returns 0.0 for a trajectory that never exceeds the threshold and None
    if the tail never settles below it.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    above = traj.norm_e > threshold
    if not above.any():
        return 0.0
    last = int(np.max(np.nonzero(above)[0]))
    if last == traj.norm_e.shape[0] - 1:
        return None
    return float(traj.t[last + 1])
