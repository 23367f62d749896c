"""Right-hand sides, Euler integration and trajectory measurements."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from fxtdiff.dynamics import (
    DivergenceError,
    differentiator_rhs,
    error_rhs,
    integrate,
    integrate_batch,
    measure_convergence_time,
)
from fxtdiff.gains import GainLadder, ScalingParams, scale_gains
from fxtdiff.injection import DegreeConfig, InternalGains, compute_weights
from fxtdiff.signals import SignalSpec, eval_signal

PAPER = DegreeConfig(3, -1.0, 0.2)
PAPER_W = compute_weights(PAPER)
ONES = InternalGains.uniform(3)
PAPER_K = GainLadder.from_k([3.0, 1.5 * math.sqrt(3.0), 1.1])
PAPER_SIGNAL = SignalSpec(
    kind="sinusoid-mix",
    n=3,
    terms=((0.5, 0.5, 0.0), (0.5, 1.0, math.pi / 2)),
    Delta=0.625,
    horizon=60.0,
)


def paper_initial(e0):
    derivs = np.array([eval_signal(PAPER_SIGNAL, 0.0, k) for k in range(3)])
    return derivs + np.asarray(e0)


class TestRhs:
    def test_zero_error_equilibrium(self):
        t = 2.7
        x = np.array([eval_signal(PAPER_SIGNAL, t, k) for k in range(3)])
        f = eval_signal(PAPER_SIGNAL, t, 0)
        rhs = differentiator_rhs(x, f, PAPER_W, ONES, PAPER_K)
        expected = np.array([eval_signal(PAPER_SIGNAL, t, k) for k in (1, 2)] + [0.0])
        assert np.allclose(rhs, expected, atol=1e-12)

    def test_paper_first_row(self):
        rhs = differentiator_rhs(np.array([1.0, 0.0, 0.0]), 0.0, PAPER_W, ONES, PAPER_K)
        assert rhs[0] == pytest.approx(-6.0, rel=1e-13)

    def test_last_row_sign(self):
        for x1 in (0.3, 2.0, 50.0):
            rhs = differentiator_rhs(np.array([x1, 0.0, 0.0]), 0.0, PAPER_W, ONES, PAPER_K)
            assert rhs[-1] < 0.0

    def test_error_origin_equilibrium(self):
        rhs = error_rhs(np.zeros(3), 0.0, 0.0, PAPER_W, ONES, PAPER_K)
        assert np.all(rhs == 0.0)

    def test_linear_case_matrix(self):
        cfg = DegreeConfig(2, 0.0, 0.0)
        w = compute_weights(cfg)
        g = InternalGains.uniform(2)
        ladder = GainLadder.from_k([1.0, 0.5])
        kt = ladder.ktilde
        # phi_1(z) = 2z, phi_2(z) = 4z under composition with kappa = theta = 1
        A = np.array([[-2.0 * kt[0], kt[0]], [-4.0 * kt[1], 0.0]])
        for z in (np.array([1.0, -0.5]), np.array([-2.0, 3.0])):
            assert np.allclose(error_rhs(z, 0.0, 0.0, w, g, ladder), A @ z, rtol=1e-13)

    def test_euler_step_matches_rhs(self):
        # one kernel step equals explicit state + dt * rhs
        e0 = np.array([1.0, -5.0, 1.0])
        x0 = paper_initial(e0)
        dt = 1e-4
        traj = integrate(
            "full",
            x0,
            weights=PAPER_W,
            gains=ONES,
            ladder=PAPER_K,
            signal=PAPER_SIGNAL,
            dt=dt,
            t_final=dt,
            record_every=1,
        )
        manual = x0 + dt * differentiator_rhs(
            x0, eval_signal(PAPER_SIGNAL, 0.0, 0), PAPER_W, ONES, PAPER_K
        )
        assert np.allclose(traj.states[1], manual, rtol=1e-13, atol=1e-15)


class TestIntegrate:
    def test_zero_signal_zero_state(self):
        sig = SignalSpec(kind="polynomial", n=3, coefficients=(0.0,), horizon=5.0)
        traj = integrate(
            "full",
            np.zeros(3),
            weights=PAPER_W,
            gains=ONES,
            ladder=PAPER_K,
            signal=sig,
            dt=1e-3,
            t_final=1.0,
        )
        assert np.all(traj.states == 0.0)
        assert np.all(traj.norm_e == 0.0)

    def test_paper_example_converges(self):
        traj = integrate(
            "full",
            paper_initial([1.0, -5.0, 1.0]),
            weights=PAPER_W,
            gains=ONES,
            ladder=PAPER_K,
            signal=PAPER_SIGNAL,
            dt=1e-4,
            t_final=8.0,
            record_every=10,
        )
        T = measure_convergence_time(traj, 1e-3)
        assert T is not None and 0.0 < T < 8.0

    def test_divergence_guard(self):
        # far too large a step makes the explicit scheme blow up
        with pytest.raises(DivergenceError) as exc:
            integrate(
                "full",
                paper_initial([1e4, 0.0, 0.0]),
                weights=PAPER_W,
                gains=ONES,
                ladder=PAPER_K,
                signal=PAPER_SIGNAL,
                dt=0.5,
                t_final=50.0,
            )
        traj = exc.value.trajectory
        assert traj.status == 3
        assert np.all(np.isfinite(traj.states))

    def test_record_decimation_uniform(self):
        traj = integrate(
            "full",
            paper_initial([0.1, 0.0, 0.0]),
            weights=PAPER_W,
            gains=ONES,
            ladder=PAPER_K,
            signal=PAPER_SIGNAL,
            dt=1e-3,
            t_final=1.0,
            record_every=7,
        )
        gaps = np.diff(traj.t)
        assert np.allclose(gaps, 7e-3, rtol=1e-12)

    @staticmethod
    def _dual_path_dev(cfg, ladder, signal, e0, dt, tf):
        w = compute_weights(cfg)
        x0 = np.array([eval_signal(signal, 0.0, k) for k in range(cfg.n)]) + e0
        full = integrate(
            "full",
            x0,
            weights=w,
            gains=ONES,
            ladder=ladder,
            signal=signal,
            dt=dt,
            t_final=tf,
            record_every=100,
        )
        steps = int(round(tf / dt))
        t = np.arange(steps) * dt
        dbar = -eval_signal(signal, t, cfg.n) / ladder.k[-1]
        err = integrate(
            "error",
            e0 / ladder.k_prefix,
            weights=w,
            gains=ONES,
            ladder=ladder,
            dt=dt,
            t_final=tf,
            record_every=100,
            nu_series=np.zeros(steps),
            dbar_series=dbar,
        )
        scale = np.max(np.abs(full.e), axis=0)
        return np.max(np.abs(full.e - err.e), axis=0) / scale

    def test_full_vs_error_coordinates_continuous(self):
        # dual-path consistency over the full horizon (no sign chatter)
        cfg = DegreeConfig(3, -0.5, 0.2)
        sig = SignalSpec(kind="polynomial", n=3, coefficients=(0.3, 0.2), horizon=5.0)
        dev = self._dual_path_dev(cfg, PAPER_K, sig, np.array([1.0, -5.0, 1.0]), 1e-5, 1.0)
        assert np.all(dev <= 1e-8)

    def test_full_vs_error_coordinates_discontinuous(self):
        # d0 = -1 with a signal whose curvature vanishes: the two Euler
        # discretizations then coincide up to rounding.  (With f'' != 0 the
        # full form accumulates an O(dt) coordinate gap, checked below.)
        sig = SignalSpec(kind="polynomial", n=3, coefficients=(0.4, 0.2), horizon=5.0)
        dev = self._dual_path_dev(PAPER, PAPER_K, sig, np.array([1.0, -5.0, 1.0]), 1e-5, 1.0)
        assert np.all(dev <= 1e-8)

    def test_full_vs_error_gap_is_first_order_in_dt(self):
        e0 = np.array([1.0, -5.0, 1.0])
        dev1 = self._dual_path_dev(PAPER, PAPER_K, PAPER_SIGNAL, e0, 2e-5, 0.25)
        dev2 = self._dual_path_dev(PAPER, PAPER_K, PAPER_SIGNAL, e0, 1e-5, 0.25)
        ratio = np.max(dev1) / np.max(dev2)
        assert 1.5 < ratio < 2.5

    def test_step_refinement_continuous_degree(self):
        # d0 > -1: halving dt moves the measured convergence time < 1%
        cfg = DegreeConfig(3, -0.5, 0.2)
        w = compute_weights(cfg)
        sig = SignalSpec(kind="polynomial", n=3, coefficients=(0.3, 0.2), horizon=30.0)
        x0 = np.array([eval_signal(sig, 0.0, k) for k in range(3)]) + np.array([1.0, -5.0, 1.0])
        times = {}
        for dt in (1e-4, 5e-5):
            traj = integrate(
                "full",
                x0,
                weights=w,
                gains=ONES,
                ladder=PAPER_K,
                signal=sig,
                dt=dt,
                t_final=25.0,
                record_every=int(round(1e-3 / dt)),
            )
            times[dt] = measure_convergence_time(traj, 1e-3)
        assert times[1e-4] is not None and times[5e-5] is not None
        assert abs(times[1e-4] - times[5e-5]) / times[5e-5] < 0.01

    def test_sliding_floor_shrinks_with_dt(self):
        floors = {}
        for dt in (1e-3, 1e-4):
            traj = integrate(
                "full",
                paper_initial([1.0, -5.0, 1.0]),
                weights=PAPER_W,
                gains=ONES,
                ladder=PAPER_K,
                signal=PAPER_SIGNAL,
                dt=dt,
                t_final=10.0,
                record_every=1,
            )
            mask = traj.t >= 6.0
            floors[dt] = np.max(np.abs(traj.e[mask, 0]))
        assert floors[1e-4] < floors[1e-3]

    def test_scaling_equivalence_trajectory_level(self):
        # the scaled-gain system run from scaled-down errors, driven by the
        # time-compressed perturbation, reproduces the base trajectory
        L, alpha = 2.0, 1.5
        g2, k2 = scale_gains(PAPER, ONES, PAPER_K, ScalingParams(alpha, L))
        pw = L ** np.array([3.0, 2.0, 1.0]) / alpha
        e0 = np.array([1.0, -5.0, 1.0]) * pw
        dt, tf = 1e-5, 2.0
        steps = int(round(tf / dt))
        t = np.arange(steps) * dt
        base = integrate(
            "error",
            e0 / PAPER_K.k_prefix,
            weights=PAPER_W,
            gains=ONES,
            ladder=PAPER_K,
            dt=dt,
            t_final=tf,
            record_every=1,
            nu_series=np.zeros(steps),
            dbar_series=-eval_signal(PAPER_SIGNAL, t, 3) / PAPER_K.k[-1],
        )
        steps_s = int(round(tf / L / dt))
        ts = np.arange(steps_s) * dt
        scaled = integrate(
            "error",
            (e0 / pw) / k2.k_prefix,
            weights=PAPER_W,
            gains=g2,
            ladder=k2,
            dt=dt,
            t_final=tf / L,
            record_every=1,
            nu_series=np.zeros(steps_s),
            dbar_series=-alpha * eval_signal(PAPER_SIGNAL, L * ts, 3) / k2.k[-1],
        )
        predicted = base.e[:: int(L)] / pw
        dev = np.max(np.abs(scaled.e - predicted), axis=0) / np.max(np.abs(predicted), axis=0)
        assert np.all(dev <= 1e-3)

    def test_batch_matches_single(self):
        e0s = np.array([[0.5, 0.1, -0.2], [1.0, -5.0, 1.0]])
        x0s = np.array([paper_initial(e) for e in e0s])
        batch = integrate_batch(
            "full",
            x0s,
            weights=PAPER_W,
            gains=ONES,
            ladder=PAPER_K,
            signal=PAPER_SIGNAL,
            dt=1e-3,
            t_final=1.0,
        )
        for x0, btraj in zip(x0s, batch):
            single = integrate(
                "full",
                x0,
                weights=PAPER_W,
                gains=ONES,
                ladder=PAPER_K,
                signal=PAPER_SIGNAL,
                dt=1e-3,
                t_final=1.0,
            )
            assert np.array_equal(single.states, btraj.states)


class TestLinearReduction:
    def test_matches_matrix_exponential(self):
        cfg = DegreeConfig(2, 0.0, 0.0)
        w = compute_weights(cfg)
        g = InternalGains.uniform(2)
        ladder = GainLadder.from_k([0.1, 0.005])
        kt = ladder.ktilde
        A = np.array([[-2.0 * kt[0], kt[0]], [-4.0 * kt[1], 0.0]])
        z0 = np.array([1.0, -0.5])
        dt, tf = 1e-5, 1.0
        steps = int(round(tf / dt))
        traj = integrate(
            "error",
            z0,
            weights=w,
            gains=g,
            ladder=ladder,
            dt=dt,
            t_final=tf,
            record_every=1000,
            nu_series=np.zeros(steps),
            dbar_series=np.zeros(steps),
        )
        worst = max(
            float(np.max(np.abs(traj.states[i] - expm(A * t) @ z0)))
            for i, t in enumerate(traj.t)
        )
        assert worst <= 1e-6


class TestConvergenceTime:
    def _traj(self, norms, dt=0.1):
        n = len(norms)
        from fxtdiff.dynamics import Trajectory

        return Trajectory(
            t=np.arange(n) * dt,
            states=np.zeros((n, 1)),
            e=np.asarray(norms)[:, None],
            norm_e=np.asarray(norms, dtype=float),
            dt=dt,
            record_every=1,
            kind="error",
        )

    def test_identically_below(self):
        assert measure_convergence_time(self._traj([0.5, 0.4, 0.3]), 1.0) == 0.0

    def test_single_crossing(self):
        traj = self._traj([4.0, 2.0, 0.9, 0.5, 0.2])
        assert measure_convergence_time(traj, 1.0) == pytest.approx(0.2)

    def test_late_excursion_counts(self):
        traj = self._traj([4.0, 0.5, 2.0, 0.5, 0.2])
        assert measure_convergence_time(traj, 1.0) == pytest.approx(0.3)

    def test_never_converges(self):
        assert measure_convergence_time(self._traj([4.0, 2.0, 1.5]), 1.0) is None

    def test_threshold_positive(self):
        with pytest.raises(ValueError):
            measure_convergence_time(self._traj([1.0]), 0.0)
