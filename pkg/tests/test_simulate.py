"""Simulator semantics: reproducibility, sync reductions, guarantee checks."""

import numpy as np
import pytest

from asyncfp import SamplingDistribution, StepSizePolicy, fejer_safe_step, km_step
from asyncfp.core import block_step_delta
from asyncfp.data import gen_diag_dominant, gen_graph
from asyncfp.history import DelayPolicy
from asyncfp.operators import DecentralGradOp, JacobiOp, LocalSmooth, metropolis_weights
from asyncfp.simulate import (
    SimRun,
    fejer_bound_limit,
    run_simulation,
    verify_linear_rate,
    verify_lyapunov_descent,
)


def jacobi_cfg(n=12, tau=0, epochs=5, seed=0, eta=0.4, **kw):
    a, b, x_star = gen_diag_dominant(n, bandwidth=3, seed=seed)
    op = JacobiOp(a, b)
    delay = DelayPolicy.none() if tau == 0 else DelayPolicy.uniform_random(tau)
    return SimRun(
        operator=op,
        distribution=SamplingDistribution.uniform(n),
        step_policy=StepSizePolicy.constant(eta),
        delay_policy=kw.pop("delay_policy", delay),
        epochs=epochs,
        seed=seed,
        x_star=x_star,
        **kw,
    )


def test_identical_configs_identical_trajectories():
    runs = [run_simulation(jacobi_cfg(record_trajectory=True)) for _ in range(2)]
    assert len(runs[0].trajectory) == len(runs[1].trajectory)
    for a, b in zip(runs[0].trajectory, runs[1].trajectory):
        assert np.array_equal(a, b)


def test_zero_delay_equals_serial_randomized_km():
    """With tau = 0 the simulator is plain randomized block iteration."""
    cfg = jacobi_cfg(n=10, epochs=3, seed=5)
    metrics = run_simulation(cfg)

    op, dist = cfg.operator, cfg.distribution
    rng = np.random.default_rng([5, 2, 0])  # the simulator's sampling stream
    x = cfg.x0.copy()
    for _ in range(3 * 10):
        i = dist.sample(rng)
        s_i = op.s_block(i, op.view_of(x))
        x = x.copy()
        x[op.layout.slice_of(i)] += block_step_delta(s_i, 0.4, dist, i)
    assert np.array_equal(metrics.final_x, x)


def test_full_sweep_from_frozen_view_is_km_step():
    """Uniform sampling makes the probability prefactor collapse to eta."""
    cfg = jacobi_cfg(n=8)
    op, dist = cfg.operator, cfg.distribution
    rng = np.random.default_rng(3)
    x = rng.normal(size=8)
    view = op.view_of(x)
    swept = x.copy()
    for i in range(8):
        swept[op.layout.slice_of(i)] += block_step_delta(
            op.s_block(i, view), 0.7, dist, i
        )
    # blockwise and full-matrix BLAS paths may differ in the last ulp
    np.testing.assert_allclose(swept, km_step(x, 0.7, op), rtol=1e-14, atol=0)


def test_adversarial_delay_still_converges():
    n, tau = 30, 6
    eta = fejer_safe_step(n, 1.0 / n, tau, c=0.9)
    cfg = jacobi_cfg(
        n=n,
        epochs=200,
        eta=eta,
        delay_policy=DelayPolicy.adversarial_max(tau),
    )
    metrics = run_simulation(cfg)
    assert metrics.final_residual < 1e-10
    assert metrics.rows[-1].dist_sq_to_oracle < 1e-20
    assert metrics.summary["max_staleness"] == tau


def test_warns_when_step_exceeds_bound():
    n = 6
    bound = fejer_bound_limit(n, 1.0 / n, 4)
    cfg = jacobi_cfg(n=n, epochs=1, eta=2.0 * bound,
                     delay_policy=DelayPolicy.adversarial_max(4))
    with pytest.warns(UserWarning, match="exceeds the safe bound"):
        run_simulation(cfg)


def test_consistent_mode_rejects_per_coordinate():
    with pytest.raises(ValueError, match="consistent"):
        jacobi_cfg(
            n=4,
            delay_policy=DelayPolicy.per_coordinate([1, 1, 1, 1]),
            read_mode="consistent",
        )


def test_epoch_rows_shape():
    cfg = jacobi_cfg(epochs=4)
    metrics = run_simulation(cfg)
    assert metrics.column("epoch") == [0, 1, 2, 3, 4]
    assert all(r.xi is not None for r in metrics.rows)
    assert all(r.objective is not None for r in metrics.rows)
    assert all(r.wall_ms is not None for r in metrics.rows)
    assert metrics.config["oracle"] is True
    # xi starts at the plain squared distance: no updates yet
    assert metrics.rows[0].xi == pytest.approx(metrics.rows[0].dist_sq_to_oracle)


def test_own_block_fresh_operator_converges():
    """Decentralized gradient under stale neighbor reads."""
    rng = np.random.default_rng(1)
    graph = gen_graph("path", 3)
    mats, centers, locals_ = [], [], []
    for _ in range(3):
        root = rng.normal(size=(2, 2))
        a = root @ root.T + np.eye(2)
        c = rng.normal(size=2)
        mats.append(a)
        centers.append(c)
        locals_.append(LocalSmooth.quadratic(a, c))
    gamma = 0.8
    op = DecentralGradOp(graph, locals_, local_dim=2, gamma=gamma)

    # stationarity oracle: grad F(x) + (I - W) x / gamma = 0 is linear
    w = metropolis_weights(graph)
    penalty = np.kron(np.eye(3) - w, np.eye(2)) / gamma
    big_a = np.zeros((6, 6))
    rhs = np.zeros(6)
    for i in range(3):
        big_a[2 * i:2 * i + 2, 2 * i:2 * i + 2] = mats[i]
        rhs[2 * i:2 * i + 2] = mats[i] @ centers[i]
    x_star = np.linalg.solve(big_a + penalty, rhs)

    cfg = SimRun(
        operator=op,
        distribution=SamplingDistribution.uniform(3),
        step_policy=StepSizePolicy.fejer_safe(3, 1.0 / 3.0, 2, c=0.9),
        delay_policy=DelayPolicy.uniform_random(2),
        epochs=400,
        seed=3,
        x_star=x_star,
    )
    metrics = run_simulation(cfg)
    assert metrics.rows[-1].dist_sq_to_oracle < 1e-16
    assert metrics.final_residual < 1e-8


class TestDescentCheck:
    def test_zero_delay_passes_exactly(self):
        cfg = jacobi_cfg(n=10, epochs=2, eta=0.3)
        report = verify_lyapunov_descent(cfg, cfg.x_star)
        assert report.guaranteed
        assert report.violations == 0
        assert report.passed
        assert report.worst_margin <= 0.0

    def test_delayed_run_at_half_bound(self):
        n, tau = 20, 4
        eta = 0.5 * fejer_bound_limit(n, 1.0 / n, tau)
        cfg = jacobi_cfg(
            n=n, epochs=3, eta=eta,
            delay_policy=DelayPolicy.uniform_random(tau), seed=11,
        )
        report = verify_lyapunov_descent(cfg, cfg.x_star)
        assert report.guaranteed
        assert report.violations == 0

    def test_monte_carlo_estimator(self):
        cfg = jacobi_cfg(n=10, epochs=2, eta=0.3, seed=2)
        report = verify_lyapunov_descent(cfg, cfg.x_star, trials=64)
        assert report.trials == 64
        assert report.violations == 0

    def test_oversized_step_flagged_unguaranteed(self):
        n = 8
        bound = fejer_bound_limit(n, 1.0 / n, 4)
        cfg = jacobi_cfg(n=n, epochs=1, eta=10.0 * bound,
                         delay_policy=DelayPolicy.uniform_random(4))
        report = verify_lyapunov_descent(cfg, cfg.x_star)
        assert report.coefficient < 0
        assert not report.guaranteed
        assert not report.passed

    def test_trials_floor(self):
        cfg = jacobi_cfg(n=4, epochs=1)
        with pytest.raises(ValueError, match="trials"):
            verify_lyapunov_descent(cfg, cfg.x_star, trials=5)


class TestRateCheck:
    def _cfg(self, n=10, tau=0, epochs=8, seed=0):
        a, b, x_star = gen_diag_dominant(n, bandwidth=3, seed=seed)
        op = JacobiOp(a, b)
        mu = 1.0 - op.iter_matrix_norm
        policy = StepSizePolicy.linear_rate(n, 1.0 / n, tau, mu, beta=0.5)
        delay = DelayPolicy.none() if tau == 0 else DelayPolicy.uniform_random(tau)
        cfg = SimRun(
            operator=op,
            distribution=SamplingDistribution.uniform(n),
            step_policy=policy,
            delay_policy=delay,
            epochs=epochs,
            seed=seed,
            x_star=x_star,
            x0=np.ones(n),
        )
        return cfg, mu

    def test_mean_distance_under_envelope(self):
        cfg, mu = self._cfg()
        report = verify_linear_rate(cfg, mu, beta=0.5, num_seeds=60)
        assert report.passed, f"worst ratio {report.max_ratio}"
        assert report.max_ratio <= 1.05
        assert 0.0 < report.rate_base < 1.0

    def test_requires_oracle(self):
        cfg, mu = self._cfg()
        cfg.x_star = None
        with pytest.raises(ValueError, match="x_star"):
            verify_linear_rate(cfg, mu, beta=0.5, num_seeds=2)

    def test_rejects_vacuous_rate(self):
        cfg, _ = self._cfg()
        with pytest.raises(ValueError, match="factor"):
            verify_linear_rate(cfg, mu=0.0, beta=0.5, num_seeds=2)
