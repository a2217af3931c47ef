"""Operator contracts and the block update rules built on them.

The solvers iterate on a fixed-point map T through its displacement
S = I - T. A problem plugs in by implementing :class:`ProblemOperator`:
it evaluates one block of S against a possibly stale view of the shared
vector, and optionally maintains auxiliary caches (a matrix-vector
product, a running average) that the update loop keeps in sync
incrementally.

The fundamental serial step is Krasnosel'skii-Mann damping,
``x <- x - alpha * S(x)``. The block variant touches one block per step
and rescales by the sampling probability so the update stays unbiased:

    x[block i] -= (eta / (m * p[i])) * S_i(x_hat)

where ``x_hat`` is whatever (possibly inconsistent) snapshot the caller
read. With uniform sampling the prefactor collapses to ``eta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .blocks import BlockLayout


@runtime_checkable
class StateView(Protocol):
    """Read access to a (possibly delayed) solver state.

    ``vector()`` returns the full iterate; ``cache(name)`` returns the
    matching auxiliary cache. Implementations may materialize these
    lazily; callers must not mutate the returned arrays.
    """

    def vector(self) -> np.ndarray: ...

    def cache(self, name: str) -> np.ndarray: ...


class ArrayView:
    """Adapter exposing plain arrays via the :class:`StateView` protocol."""

    __slots__ = ("_x", "_caches")

    def __init__(self, x: np.ndarray, caches: dict[str, np.ndarray] | None = None):
        self._x = x
        self._caches = caches or {}

    def vector(self) -> np.ndarray:
        return self._x

    def cache(self, name: str) -> np.ndarray:
        return self._caches[name]


class ProblemOperator:
    """Base class for block-splittable displacement operators S = I - T.

    Subclasses must set ``layout`` and implement :meth:`s_block`. The
    remaining hooks have working defaults: problems without caches leave
    ``cache_names`` empty, problems with no natural objective return NaN.

    Notes
    -----
    ``s_block`` must be a pure function of the view passed in. All
    randomness and all stale-read semantics live in the caller; the same
    view must always produce the same block, bit for bit, or the
    simulator and the threaded engine stop agreeing with each other.
    """

    layout: BlockLayout

    #: names of auxiliary caches this operator maintains (e.g. "Ax").
    cache_names: tuple[str, ...] = ()

    #: True when the update loop should overwrite the reader's own block
    #: with its fresh value before calling ``s_block`` (an agent always
    #: knows its own coordinates). Decentralized operators opt in.
    own_block_fresh: bool = False

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        """Evaluate block ``i`` of S at the state exposed by ``view``."""
        raise NotImplementedError

    def s_full(self, view: StateView) -> np.ndarray:
        """Full S(x); default stacks per-block evaluations."""
        return np.concatenate(
            [self.s_block(i, view) for i in range(self.layout.m)]
        )

    def init_caches(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Fresh caches consistent with iterate ``x``."""
        return {}

    def cache_deltas(
        self, i: int, view: StateView, x_delta: np.ndarray
    ) -> dict[str, np.ndarray]:
        """Cache increments caused by adding ``x_delta`` to block ``i``.

        Must be computed from ``view`` and ``x_delta`` alone so that
        replaying the increments against any copy of the caches gives
        the same bits.
        """
        return {}

    def view_of(self, x: np.ndarray) -> ArrayView:
        """Consistent view of ``x`` with freshly built caches."""
        return ArrayView(x, self.init_caches(x))

    def residual(self, view: StateView) -> float:
        """Fixed-point residual ||S(x)||_2 at the viewed state."""
        return float(np.linalg.norm(self.s_full(view)))

    def objective(self, view: StateView) -> float:
        """Problem objective when one exists, else NaN."""
        return float("nan")


@dataclass(frozen=True)
class SamplingDistribution:
    """Distribution over block indices with the update-rule prefactors.

    Stores p (strictly positive, sums to one within 1e-12) together with
    1 / (m * p_i) so the hot path never divides. ``sample`` uses exactly
    one uniform draw per call on both the fast uniform path and the
    general path, which keeps draw counts aligned between the simulator
    and the engine.
    """

    p: np.ndarray
    inv_mp: np.ndarray
    cdf: np.ndarray
    is_uniform: bool

    @classmethod
    def from_probabilities(cls, p: np.ndarray) -> "SamplingDistribution":
        p = np.asarray(p, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("p must be a nonempty 1-d array")
        if np.any(p <= 0.0):
            raise ValueError("all block probabilities must be positive")
        total = float(p.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total:.17g}, expected 1")
        m = p.size
        inv_mp = 1.0 / (m * p)
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        is_uniform = bool(np.all(p == p[0]))
        return cls(p=p, inv_mp=inv_mp, cdf=cdf, is_uniform=is_uniform)

    @classmethod
    def uniform(cls, m: int) -> "SamplingDistribution":
        return cls.from_probabilities(np.full(int(m), 1.0 / int(m)))

    @classmethod
    def from_rates(cls, rates: np.ndarray) -> "SamplingDistribution":
        """Selection probabilities of independent exponential clocks.

        Agent i with rate lambda_i fires first with probability
        lambda_i / sum(lambda), which is the sampling law this returns.
        """
        rates = np.asarray(rates, dtype=np.float64)
        if np.any(rates <= 0.0):
            raise ValueError("activation rates must be positive")
        return cls.from_probabilities(rates / rates.sum())

    @property
    def m(self) -> int:
        return self.p.size

    @property
    def p_min(self) -> float:
        return float(self.p.min())

    def sample(self, rng: np.random.Generator) -> int:
        u = rng.random()
        if self.is_uniform:
            i = int(u * self.m)
            return self.m - 1 if i >= self.m else i
        return int(np.searchsorted(self.cdf, u, side="right"))


def km_step(x: np.ndarray, alpha: float, op: ProblemOperator) -> np.ndarray:
    """One damped fixed-point step x - alpha * S(x).

    For nonexpansive T = I - S and alpha in (0, 1) this is the classical
    averaged iteration; the residual ||S(x)|| is nonincreasing along it.
    alpha = 1 is allowed and gives the undamped map T itself.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("km_step input contains non-finite entries")
    return x - alpha * op.s_full(op.view_of(x))


def block_step_delta(
    s_i: np.ndarray, eta: float, dist: SamplingDistribution, i: int
) -> np.ndarray:
    """Increment for block ``i``: -(eta / (m * p_i)) * S_i(x_hat).

    Shared by the simulator and the threaded engine so both commit the
    identical float64 bits for the same inputs.
    """
    return (-eta * dist.inv_mp[i]) * s_i


def async_block_update(
    op: ProblemOperator,
    x: np.ndarray,
    xhat_view: StateView,
    i: int,
    eta: float,
    dist: SamplingDistribution,
) -> np.ndarray:
    """Single asynchronous block step; returns the updated copy of ``x``.

    Evaluates S_i at ``xhat_view`` (a possibly stale snapshot; the rule
    is identical for consistent and inconsistent reads) and applies
    ``x_i -= (eta / (m * p_i)) * S_i(x_hat)``. Every other block of the
    result is bitwise equal to the input.
    """
    if not 0 <= i < op.layout.m:
        raise IndexError(f"block index {i} outside [0, {op.layout.m})")
    if eta <= 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    s_i = op.s_block(i, xhat_view)
    out = x.copy()
    out[op.layout.slice_of(i)] += block_step_delta(s_i, eta, dist, i)
    return out
