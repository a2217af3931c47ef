"""Convergence-theory calculators: step-size bounds, the Lyapunov
metric used by the descent analysis, and sampling-based operator checks.

Everything here is a pure function of its arguments (plus an optional
caller-owned rng), safe to call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ProblemOperator

#: validation floor for any step size; schedules never decay below this.
ETA_MIN = 1e-8


def fejer_safe_step(m: int, p_min: float, tau: int, c: float = 0.99) -> float:
    """Largest step size with guaranteed stochastic Fejér descent.

    Returns c * m * p_min / (2 * tau * sqrt(p_min) + 1). With uniform
    sampling (p_min = 1/m) this reads c / (1 + 2*tau/sqrt(m)); delay on
    the order of sqrt(m) still allows an O(1) step.

    ``c`` must lie strictly inside (0, 1); the guarantee needs slack
    below the supremum. Monotone decreasing in tau, increasing in
    m * p_min.
    """
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    if not 0.0 < p_min <= 1.0 / m + 1e-15:
        raise ValueError(f"need 0 < p_min <= 1/m, got p_min={p_min}, m={m}")
    if tau < 0:
        raise ValueError(f"need tau >= 0, got {tau}")
    if not 0.0 < c < 1.0:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    return c * m * p_min / (2.0 * tau * math.sqrt(p_min) + 1.0)


@dataclass(frozen=True)
class LinearRateSteps:
    """Step-size pair for the linear-rate regime.

    eta1 caps the step so the delayed terms telescope; eta2 is the
    positive root of a*eta^2 + b*eta - (1 - beta) = 0. The usable step
    is min(eta1, eta2) and drives the per-step contraction
    rate_base = 1 - beta*mu*eta/m of the squared distance to x*.
    """

    eta1: float
    eta2: float
    rate_base: float

    @property
    def eta(self) -> float:
        return min(self.eta1, self.eta2)


def linear_rate_steps(
    m: int,
    p_min: float,
    tau: int,
    mu: float,
    beta: float,
    rho: float | None = None,
) -> LinearRateSteps:
    """Step-size bounds under quasi-strong monotonicity of S.

    Parameters
    ----------
    m, p_min, tau : block count, smallest selection probability, max delay.
    mu : quasi-strong monotonicity modulus of S (> 0).
    beta : averaging weight in (0, 1) splitting the descent budget.
    rho : delay-amplification ratio > 1; default (1 + 1/max(tau,1))**2.

    Notes
    -----
    With tau = 0 the quadratic coefficient a vanishes and eta2 is taken
    as the analytic limit (1-beta)/b = (1-beta)*m*p_min; eta1 similarly
    collapses to (1 - 1/rho)*m*sqrt(p_min)/8.
    """
    if mu <= 0.0:
        raise ValueError(f"need mu > 0, got {mu}")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"need beta in (0, 1), got {beta}")
    if tau < 0:
        raise ValueError(f"need tau >= 0, got {tau}")
    if rho is None:
        rho = (1.0 + 1.0 / max(tau, 1)) ** 2
    if rho <= 1.0:
        raise ValueError(f"need rho > 1, got {rho}")

    sqrt_p = math.sqrt(p_min)
    sqrt_rho = math.sqrt(rho)
    eta1 = (
        (1.0 - 1.0 / rho)
        * (m * sqrt_p / 8.0)
        * (sqrt_rho - 1.0)
        / (sqrt_rho ** (tau + 1) - 1.0)
    )

    geom = rho * (rho**tau - 1.0) / (rho - 1.0)  # rho + rho^2 + ... + rho^tau
    b = 1.0 / (m * p_min) + (2.0 / m) * math.sqrt(geom * tau / p_min)
    if tau == 0:
        eta2 = (1.0 - beta) / b
    else:
        a = (2.0 * beta * mu * tau / (m * m * p_min)) * geom
        eta2 = (-b + math.sqrt(b * b + 4.0 * (1.0 - beta) * a)) / (2.0 * a)

    eta = min(eta1, eta2)
    return LinearRateSteps(eta1=eta1, eta2=eta2, rate_base=1.0 - beta * mu * eta / m)


@dataclass(frozen=True)
class StepSizePolicy:
    """Constant step size together with how it was justified.

    kind records which bound produced eta (or "constant" for a raw
    user-chosen value); params keeps the inputs for config echo. The
    named constructors compute eta from the matching bound and the
    invariant eta <= bound is re-checked on construction.
    """

    kind: str
    eta: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("constant", "fejer_safe", "linear_rate"):
            raise ValueError(f"unknown step policy kind {self.kind!r}")
        if not self.eta >= ETA_MIN:
            raise ValueError(f"eta must be >= {ETA_MIN}, got {self.eta}")
        if self.kind == "fejer_safe":
            bound = fejer_safe_step(
                self.params["m"], self.params["p_min"],
                self.params["tau"], self.params["c"],
            )
            if self.eta > bound * (1.0 + 1e-12):
                raise ValueError(f"eta={self.eta} exceeds Fejér-safe bound {bound}")
        elif self.kind == "linear_rate":
            rates = linear_rate_steps(
                self.params["m"], self.params["p_min"], self.params["tau"],
                self.params["mu"], self.params["beta"], self.params.get("rho"),
            )
            if self.eta > rates.eta * (1.0 + 1e-12):
                raise ValueError(f"eta={self.eta} exceeds linear-rate bound {rates.eta}")

    @classmethod
    def constant(cls, eta: float) -> "StepSizePolicy":
        return cls(kind="constant", eta=float(eta))

    @classmethod
    def fejer_safe(cls, m: int, p_min: float, tau: int, c: float = 0.99) -> "StepSizePolicy":
        eta = fejer_safe_step(m, p_min, tau, c)
        return cls(kind="fejer_safe", eta=eta,
                   params={"m": m, "p_min": p_min, "tau": tau, "c": c})

    @classmethod
    def linear_rate(
        cls, m: int, p_min: float, tau: int, mu: float,
        beta: float = 0.5, rho: float | None = None,
    ) -> "StepSizePolicy":
        eta = linear_rate_steps(m, p_min, tau, mu, beta, rho).eta
        return cls(kind="linear_rate", eta=eta,
                   params={"m": m, "p_min": p_min, "tau": tau,
                           "mu": mu, "beta": beta, "rho": rho})


class FejerMetricSpec:
    """Tri-diagonal weight matrix of the delay-aware descent metric.

    The analysis measures progress of the stacked vector
    y = (x^k - x*, x^{k-1} - x*, ..., x^{k-tau} - x*) in the norm
    y' (M ⊗ I) y induced by a (tau+1) x (tau+1) tri-diagonal M with

        diag     sqrt(p_min) * [1/sqrt(p_min) + tau, 2*tau - 1, ..., 1]
        off-diag -sqrt(p_min) * [tau, tau - 1, ..., 1]

    which factors as ||y_0||^2 plus a positively weighted sum of squared
    consecutive differences, hence M is positive definite. Construction
    verifies positive definiteness by eigenvalue floor for tau <= 64
    (beyond that the explicit check is skipped; the factorization is the
    guarantee).
    """

    def __init__(self, tau: int, p_min: float):
        if tau < 0:
            raise ValueError(f"need tau >= 0, got {tau}")
        if not 0.0 < p_min <= 1.0:
            raise ValueError(f"need p_min in (0, 1], got {p_min}")
        self.tau = int(tau)
        self.p_min = float(p_min)
        sqrt_p = math.sqrt(p_min)

        n = self.tau + 1
        mat = np.zeros((n, n))
        diag = [1.0 / sqrt_p + self.tau]
        diag += [2.0 * (self.tau - j) + 1.0 for j in range(1, n)]
        mat[np.arange(n), np.arange(n)] = sqrt_p * np.asarray(diag)
        if self.tau > 0:
            off = -sqrt_p * np.arange(self.tau, 0, -1, dtype=np.float64)
            mat[np.arange(n - 1), np.arange(1, n)] = off
            mat[np.arange(1, n), np.arange(n - 1)] = off
        self.matrix = mat

        if self.tau <= 64:
            floor = float(np.linalg.eigvalsh(mat).min())
            if floor <= 0.0:
                raise ValueError(
                    f"metric matrix not positive definite (min eig {floor})"
                )

    def weighted_norm_sq(self, ys: Sequence[np.ndarray]) -> float:
        """y' (M ⊗ I) y for ys = [y_0, ..., y_tau], newest first."""
        if len(ys) != self.tau + 1:
            raise ValueError(f"need {self.tau + 1} vectors, got {len(ys)}")
        stacked = np.asarray(ys, dtype=np.float64)
        gram = stacked @ stacked.T
        return float(np.sum(self.matrix * gram))


def lyapunov_metric(history: Sequence[np.ndarray], x_star: np.ndarray, p_min: float) -> float:
    """Delay-aware Lyapunov value xi_k at the newest iterate.

    ``history`` holds the window [x^{k-tau}, ..., x^k] ordered oldest to
    newest (pad with copies of x^0 for k < tau); tau is its length minus
    one, so passing a single iterate gives plain ||x^k - x*||^2.

        xi_k = ||x^k - x*||^2
             + sqrt(p_min) * sum_{j=0}^{tau-1} (j+1) * ||x_{j+1} - x_j||^2

    where the sum runs over consecutive pairs of the window, oldest
    difference weighted 1, newest weighted tau. Always >= ||x^k - x*||^2
    and equal to it when the window is constant.
    """
    if len(history) < 1:
        raise ValueError("history must contain at least one iterate")
    window = [np.asarray(h, dtype=np.float64) for h in history]
    x_star = np.asarray(x_star, dtype=np.float64)
    newest = window[-1]
    value = float(np.dot(newest - x_star, newest - x_star))
    sqrt_p = math.sqrt(p_min)
    for j in range(len(window) - 1):
        diff = window[j + 1] - window[j]
        value += sqrt_p * (j + 1) * float(np.dot(diff, diff))
    return value


@dataclass(frozen=True)
class CocoercivityReport:
    """Outcome of a sampled cocoercivity check."""

    samples: int
    violations: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_cocoercivity(
    op: ProblemOperator | Callable[[np.ndarray], np.ndarray],
    samples: int = 10_000,
    rng: np.random.Generator | None = None,
    dim: int | None = None,
    scale: float = 1.0,
) -> CocoercivityReport:
    """Sample pairs (x, y) and test <x-y, Sx-Sy> >= 0.5*||Sx-Sy||^2.

    T = I - S is nonexpansive exactly when S passes this for all pairs;
    here we test random Gaussian pairs and report the worst signed
    margin. A pair counts as a violation when its margin drops below
    -1e-9 * (1 + ||x-y||^2), floating-point slack scaled to operand
    size. Violations are reported, never raised.

    ``op`` may be a ProblemOperator (S evaluated with fresh caches per
    point) or a bare callable x -> S(x), in which case ``dim`` is
    required.
    """
    if samples < 1:
        raise ValueError(f"need samples >= 1, got {samples}")
    if isinstance(op, ProblemOperator):
        s = lambda x: op.s_full(op.view_of(x))
        n = op.layout.dim
    else:
        if dim is None:
            raise ValueError("dim is required when op is a bare callable")
        s, n = op, int(dim)
    if rng is None:
        rng = np.random.default_rng(0)

    worst = math.inf
    violations = 0
    for _ in range(samples):
        x = scale * rng.standard_normal(n)
        y = scale * rng.standard_normal(n)
        ds = s(x) - s(y)
        gap = float(np.dot(x - y, ds)) - 0.5 * float(np.dot(ds, ds))
        tol = 1e-9 * (1.0 + float(np.dot(x - y, x - y)))
        if gap < -tol:
            violations += 1
        worst = min(worst, gap)
    return CocoercivityReport(samples=samples, violations=violations, worst_margin=worst)


def quasi_contraction_modulus(gamma: float, mu: float, L: float) -> float:
    """Contraction factor toward x* of a prox-gradient map.

    For gradient step gamma in (0, 2/L) on an L-smooth, mu-strongly
    convex smooth part (0 < mu <= L) composed with any prox,
    ||Tx - x*|| <= sqrt(1 - 2*gamma*mu + mu*gamma^2*L) * ||x - x*||.
    The modulus always lands in [0, 1).
    """
    if not 0.0 < gamma < 2.0 / L:
        raise ValueError(f"gamma must lie in (0, 2/L) = (0, {2.0 / L}), got {gamma}")
    if not 0.0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    return math.sqrt(1.0 - 2.0 * gamma * mu + mu * gamma * gamma * L)


def strong_monotonicity_from_lipschitz(c: float) -> float:
    """Strong-monotonicity modulus of I - T for a c-Lipschitz T, c < 1.

    <x - y, (I-T)x - (I-T)y> >= (1-c) * ||x-y||^2, so mu = 1 - c.
    """
    if not 0.0 <= c < 1.0:
        raise ValueError(f"need Lipschitz constant c in [0, 1), got {c}")
    return 1.0 - c


def spectral_norm(
    a,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    seed: int = 0,
) -> float:
    """Power-method estimate of the operator 2-norm of ``a``.

    Iterates v <- A'Av / ||A'Av|| and returns sqrt of the Rayleigh
    quotient once successive estimates agree to relative ``tol`` (or
    after ``max_iter`` iterations; pass tol=0 for a fixed iteration
    count). Works for dense arrays and scipy.sparse matrices alike.
    """
    rng = np.random.default_rng(seed)
    n = a.shape[1]
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = a @ v
        v_next = a.T @ w
        norm = float(np.linalg.norm(v_next))
        if norm == 0.0:
            return 0.0
        new_est = math.sqrt(float(np.dot(v, v_next)))
        v = v_next / norm
        if est > 0.0 and abs(new_est - est) <= tol * new_est:
            return new_est
        est = new_est
    return est
