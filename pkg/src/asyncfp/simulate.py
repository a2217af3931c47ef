"""Deterministic single-threaded simulator of asynchronous execution.

The simulator runs the block update rule against explicitly modeled
stale reads: every step samples a block, asks the delay policy which
recent updates the reader missed, reconstructs that snapshot from the
iterate history, and commits one block step. Identical configs produce
identical trajectories bit for bit, which is what makes the
convergence-theory checks in this module meaningful rather than
anecdotal.

Two verification routines accompany the runner. One estimates the
conditional one-step descent of the delay-weighted energy

    xi_k = ||x_k - x*||^2 + sqrt(p_min) * sum_j weight_j ||x_{j+1} - x_j||^2

by resampling the block choice from a frozen state; the other compares
mean squared distances against the predicted geometric envelope across
many seeded runs.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from math import isnan, sqrt

import numpy as np

from .core import ProblemOperator, SamplingDistribution, block_step_delta
from .history import DelayPolicy, IterateHistory
from .metrics import EpochRow, RunMetrics
from .theory import StepSizePolicy, lyapunov_metric

READ_MODES = ("inconsistent", "consistent")

#: exact conditional expectations enumerate all blocks up to this count
EXACT_ENUMERATION_CAP = 1000


@dataclass
class SimRun:
    """Complete, reproducible description of one simulated run."""

    operator: ProblemOperator
    distribution: SamplingDistribution
    step_policy: StepSizePolicy
    delay_policy: DelayPolicy
    read_mode: str = "inconsistent"
    epochs: int = 100
    seed: int = 0
    x_star: np.ndarray | None = None
    x0: np.ndarray | None = None
    record_trajectory: bool = False

    def __post_init__(self):
        if self.read_mode not in READ_MODES:
            raise ValueError(f"read_mode must be one of {READ_MODES}")
        if self.epochs < 1:
            raise ValueError(f"need epochs >= 1, got {self.epochs}")
        m = self.operator.layout.m
        if self.distribution.p.size != m:
            raise ValueError(
                f"distribution has {self.distribution.p.size} blocks, "
                f"operator has {m}"
            )
        if self.read_mode == "consistent" and self.delay_policy.kind == "per_coordinate":
            raise ValueError(
                "per_coordinate delays cannot produce consistent reads"
            )
        dim = self.operator.layout.dim
        if self.x0 is None:
            self.x0 = np.zeros(dim)
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        if self.x0.shape != (dim,):
            raise ValueError(f"x0 has shape {self.x0.shape}, expected ({dim},)")
        if self.x_star is not None:
            self.x_star = np.asarray(self.x_star, dtype=np.float64)
            if self.x_star.shape != (dim,):
                raise ValueError("x_star does not match the problem dimension")

    def config_echo(self) -> dict:
        return {
            "problem": type(self.operator).__name__,
            "dim": self.operator.layout.dim,
            "blocks": self.operator.layout.m,
            "eta": self.step_policy.eta,
            "step_kind": self.step_policy.kind,
            "delay_kind": self.delay_policy.kind,
            "tau": self.delay_policy.tau,
            "read_mode": self.read_mode,
            "epochs": self.epochs,
            "seed": self.seed,
            "p_min": self.distribution.p_min,
            "oracle": self.x_star is not None,
        }


def fejer_bound_limit(m: int, p_min: float, tau: int) -> float:
    """Step-size ceiling m*p_min / (2*tau*sqrt(p_min) + 1) at c = 1."""
    return m * p_min / (2.0 * tau * sqrt(p_min) + 1.0)


def _warn_if_step_unsafe(cfg: SimRun) -> None:
    m = cfg.operator.layout.m
    bound = fejer_bound_limit(m, cfg.distribution.p_min, cfg.delay_policy.tau)
    if cfg.step_policy.eta > bound * (1.0 + 1e-12):
        warnings.warn(
            f"step size {cfg.step_policy.eta:.6g} exceeds the safe bound "
            f"{bound:.6g} for tau={cfg.delay_policy.tau}; proceeding anyway",
            UserWarning,
            stacklevel=3,
        )


def _sample_j(cfg: SimRun, history: IterateHistory, k: int, rng) -> tuple[int, ...]:
    if cfg.read_mode == "consistent":
        age = cfg.delay_policy.consistent_age(k, rng)
        return tuple(range(k - age, k))
    return cfg.delay_policy.sample(k, rng, block_at=history.block_of_step)


def run_simulation(cfg: SimRun) -> RunMetrics:
    """Execute epochs*m block updates and log one row per epoch.

    A step size above the safe bound only warns: divergence studies
    deliberately run there.
    """
    _warn_if_step_unsafe(cfg)
    op = cfg.operator
    layout = op.layout
    m = layout.m
    eta = cfg.step_policy.eta
    dist = cfg.distribution
    sample_rng = np.random.default_rng([cfg.seed, 2, 0])
    delay_rng = np.random.default_rng([cfg.seed, 3])

    history = IterateHistory(
        cfg.x0, cfg.delay_policy.tau, layout, caches=op.init_caches(cfg.x0)
    )
    trajectory = [history.current.copy()] if cfg.record_trajectory else None

    rows: list[EpochRow] = []
    max_staleness = 0
    started = time.perf_counter()

    def log_row(epoch: int) -> None:
        view = history.current_view()
        objective = op.objective(view)
        dist_sq = xi = None
        if cfg.x_star is not None:
            diff = history.current - cfg.x_star
            dist_sq = float(diff @ diff)
            xi = lyapunov_metric(history.metric_window(), cfg.x_star, dist.p_min)
        rows.append(
            EpochRow(
                epoch=epoch,
                fixed_point_residual=op.residual(view),
                objective=None if isnan(objective) else objective,
                dist_sq_to_oracle=dist_sq,
                xi=xi,
                eta=eta,
                wall_ms=(time.perf_counter() - started) * 1e3,
            )
        )

    log_row(0)
    for k in range(cfg.epochs * m):
        i = dist.sample(sample_rng)
        j_set = _sample_j(cfg, history, k, delay_rng)
        if j_set:
            max_staleness = max(max_staleness, k - min(j_set))
        view = history.reconstruct_read(j_set)
        if op.own_block_fresh:
            sl = layout.slice_of(i)
            view.vector()[sl] = history.current[sl]
        delta = block_step_delta(op.s_block(i, view), eta, dist, i)
        history.advance(i, delta, op.cache_deltas(i, view, delta))
        if trajectory is not None:
            trajectory.append(history.current.copy())
        if (k + 1) % m == 0:
            log_row((k + 1) // m)

    return RunMetrics(
        rows=rows,
        config=cfg.config_echo(),
        summary={
            "final_residual": rows[-1].fixed_point_residual,
            "total_wall_s": time.perf_counter() - started,
            "max_staleness": max_staleness,
            "steps": cfg.epochs * m,
        },
        final_x=history.current.copy(),
        trajectory=trajectory,
    )


@dataclass(frozen=True)
class DescentReport:
    """Outcome of the one-step conditional energy-descent check."""

    steps_checked: int
    violations: int
    worst_margin: float
    coefficient: float
    guaranteed: bool
    trials: int | None

    @property
    def passed(self) -> bool:
        return self.guaranteed and self.violations == 0


def verify_lyapunov_descent(
    cfg: SimRun,
    x_star: np.ndarray,
    trials: int | None = None,
) -> DescentReport:
    """Check one-step descent of the delay-weighted energy along a run.

    At every step the block choice is resampled from the frozen state:
    either exactly (``trials=None``, all blocks weighted by their
    probabilities) or by Monte Carlo with at least 30 draws. The checked
    inequality charges the candidate energy plus a step-size penalty
    proportional to the full (never committed) update against the
    current energy. A negative penalty coefficient means the step size
    sits outside the guaranteed regime; the report still counts
    violations but flags the run as unguaranteed.
    """
    op = cfg.operator
    layout = op.layout
    m = layout.m
    if trials is None:
        if m > EXACT_ENUMERATION_CAP:
            raise ValueError(
                f"exact enumeration capped at {EXACT_ENUMERATION_CAP} blocks; "
                f"pass trials >= 30 for Monte-Carlo estimation"
            )
    elif trials < 30:
        raise ValueError(f"need trials >= 30 for a usable error bar, got {trials}")

    x_star = np.asarray(x_star, dtype=np.float64)
    eta = cfg.step_policy.eta
    dist = cfg.distribution
    tau = cfg.delay_policy.tau
    p_min = dist.p_min
    coefficient = (1.0 / eta - 2.0 * tau / (m * sqrt(p_min)) - 1.0 / (m * p_min)) / m
    guaranteed = coefficient >= 0.0

    sample_rng = np.random.default_rng([cfg.seed, 2, 0])
    delay_rng = np.random.default_rng([cfg.seed, 3])
    resample_rng = np.random.default_rng([cfg.seed, 4])

    history = IterateHistory(
        cfg.x0, tau, layout, caches=op.init_caches(cfg.x0)
    )

    violations = 0
    worst_margin = -np.inf
    steps = cfg.epochs * m

    for k in range(steps):
        i_actual = dist.sample(sample_rng)
        j_set = _sample_j(cfg, history, k, delay_rng)
        base_view = history.reconstruct_read(j_set)

        def candidate_view(i: int):
            if not op.own_block_fresh:
                return base_view
            view = history.reconstruct_read(j_set)
            sl = layout.slice_of(i)
            view.vector()[sl] = history.current[sl]
            return view

        views = [candidate_view(i) for i in range(m)] if op.own_block_fresh else None
        s_blocks = [
            op.s_block(i, views[i] if views else base_view) for i in range(m)
        ]

        x = history.current
        diff = x - x_star
        dist_sq = float(diff @ diff)
        xi_k = lyapunov_metric(history.metric_window(), x_star, p_min)
        window_sum = sum(history.delta_sq_at(d) for d in range(k - tau, k))
        s_norm_sq = sum(float(s @ s) for s in s_blocks)
        penalty = coefficient * eta * eta * s_norm_sq

        def xi_next(i: int) -> float:
            sl = layout.slice_of(i)
            delta = block_step_delta(s_blocks[i], eta, dist, i)
            d_sq = float(delta @ delta)
            dist_next = dist_sq + 2.0 * float(delta @ diff[sl]) + d_sq
            return (
                dist_next
                + (xi_k - dist_sq)
                + sqrt(p_min) * (tau * d_sq - window_sum)
            )

        if trials is None:
            estimate = float(sum(dist.p[i] * xi_next(i) for i in range(m)))
            allowance = 1e-9 * (1.0 + abs(xi_k))
        else:
            draws = np.array(
                [xi_next(dist.sample(resample_rng)) for _ in range(trials)]
            )
            estimate = float(draws.mean())
            stderr = float(draws.std(ddof=1)) / sqrt(trials)
            allowance = 3.0 * stderr + 1e-9 * (1.0 + abs(xi_k))

        margin = estimate + penalty - xi_k
        worst_margin = max(worst_margin, margin - allowance)
        if margin > allowance:
            violations += 1

        delta = block_step_delta(s_blocks[i_actual], eta, dist, i_actual)
        commit_view = views[i_actual] if views else base_view
        history.advance(
            i_actual, delta, op.cache_deltas(i_actual, commit_view, delta)
        )

    return DescentReport(
        steps_checked=steps,
        violations=violations,
        worst_margin=float(worst_margin),
        coefficient=coefficient,
        guaranteed=guaranteed,
        trials=trials,
    )


@dataclass(frozen=True)
class RateReport:
    """Mean squared distance versus the geometric envelope."""

    num_seeds: int
    epochs: int
    rate_base: float
    max_ratio: float
    passed: bool
    ratios: tuple[float, ...] = field(repr=False, default=())


def verify_linear_rate(
    cfg: SimRun,
    mu: float,
    beta: float,
    num_seeds: int = 100,
    slack: float = 0.05,
) -> RateReport:
    """Average ||x_k - x*||^2 over seeds against (1 - beta*mu*eta/m)^k.

    Every run starts from the same x0; only the block-sampling and
    delay streams vary with the seed. The envelope is evaluated at
    epoch boundaries (k = epoch * m steps).
    """
    if cfg.x_star is None:
        raise ValueError("verify_linear_rate needs cfg.x_star")
    if num_seeds < 1:
        raise ValueError("need at least one seed")
    m = cfg.operator.layout.m
    eta = cfg.step_policy.eta
    rate_base = 1.0 - beta * mu * eta / m
    if not 0.0 < rate_base < 1.0:
        raise ValueError(
            f"predicted per-step factor {rate_base} is outside (0, 1); "
            f"check mu, beta, and the step size"
        )

    sums = np.zeros(cfg.epochs + 1)
    for s in range(num_seeds):
        metrics = run_simulation(replace(cfg, seed=cfg.seed + s))
        sums += np.array(metrics.column("dist_sq_to_oracle"))
    means = sums / num_seeds

    d0 = float(np.sum((cfg.x0 - cfg.x_star) ** 2))
    epochs = np.arange(cfg.epochs + 1)
    envelope = d0 * rate_base ** (epochs * m)
    ratios = means / envelope
    max_ratio = float(ratios.max())
    return RateReport(
        num_seeds=num_seeds,
        epochs=cfg.epochs,
        rate_base=rate_base,
        max_ratio=max_ratio,
        passed=bool(np.all(ratios <= 1.0 + slack)),
        ratios=tuple(float(r) for r in ratios),
    )
