"""Iterate history and the delayed-read model driving the simulator.

An asynchronous agent computes against a snapshot assembled from stale
coordinates. With J(k) the set of recent steps whose effects the reader
missed, the snapshot is

    x_hat(k) = x(k) + sum_{d in J(k)} (x(d) - x(d+1))

i.e. the current iterate with the listed per-step deltas rolled back.
J(k) always sits inside the window {k-tau, ..., k-1}. A *consistent*
read is the special case J = {k-d, ..., k-1}, which telescopes to the
true past iterate x(k-d); general J produces vectors that may equal no
iterate that ever existed.

:class:`IterateHistory` keeps the last tau+1 full iterates plus the
per-step deltas (and cache deltas), which is exactly enough to build
any legal snapshot and the delay-weighted metric window. Steps before
the start of time count as copies of x(0).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .blocks import BlockLayout
from .core import ArrayView

DELAY_KINDS = ("none", "fixed", "uniform_random", "adversarial_max", "per_coordinate")


@dataclass(frozen=True)
class DelayPolicy:
    """How the simulator picks the missed-update set J(k).

    kind "none" reads fresh state; "fixed" always lags by exactly
    ``tau`` steps; "uniform_random" drops each window entry with
    probability 1/2 independently; "adversarial_max" misses the whole
    window every time; "per_coordinate" gives block b a fixed age
    ``schedule[b]`` so different coordinates are stale by different
    amounts (the canonical inconsistent read).
    """

    kind: str
    tau: int
    schedule: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in DELAY_KINDS:
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.tau < 0:
            raise ValueError(f"need tau >= 0, got {self.tau}")
        if self.kind == "per_coordinate" and not self.schedule:
            raise ValueError("per_coordinate policy needs a schedule")

    @classmethod
    def none(cls) -> "DelayPolicy":
        return cls("none", 0)

    @classmethod
    def fixed(cls, tau: int) -> "DelayPolicy":
        return cls("fixed", tau)

    @classmethod
    def uniform_random(cls, tau: int) -> "DelayPolicy":
        return cls("uniform_random", tau)

    @classmethod
    def adversarial_max(cls, tau: int) -> "DelayPolicy":
        return cls("adversarial_max", tau)

    @classmethod
    def per_coordinate(cls, schedule) -> "DelayPolicy":
        ages = tuple(int(a) for a in schedule)
        if any(a < 0 for a in ages):
            raise ValueError("per-coordinate ages must be >= 0")
        return cls("per_coordinate", max(ages), schedule=ages)

    def sample(
        self,
        k: int,
        rng: np.random.Generator,
        block_at: Callable[[int], int] | None = None,
    ) -> tuple[int, ...]:
        """Missed steps J(k), ascending, within {max(0, k-tau), ..., k-1}.

        ``block_at`` maps a step in the window to the block it updated;
        only the per_coordinate kind needs it.
        """
        lo = max(0, k - self.tau)
        window = range(lo, k)
        if self.kind == "none":
            return ()
        if self.kind == "fixed" or self.kind == "adversarial_max":
            return tuple(window)
        if self.kind == "uniform_random":
            return tuple(d for d in window if rng.random() < 0.5)
        if block_at is None:
            raise ValueError("per_coordinate sampling needs block_at")
        return tuple(d for d in window if k - d <= self.schedule[block_at(d)])

    def consistent_age(self, k: int, rng: np.random.Generator) -> int:
        """Age d of a whole-vector read x(k-d) under this policy."""
        if self.kind == "none":
            return 0
        if self.kind in ("fixed", "adversarial_max"):
            return self.tau
        if self.kind == "uniform_random":
            return int(rng.integers(0, self.tau + 1))
        raise ValueError(
            "per_coordinate delays have no single age; "
            "use inconsistent reads with this policy"
        )


@dataclass(frozen=True)
class StepRecord:
    """One committed update: which block moved at step k and by how much."""

    step: int
    block: int
    delta: np.ndarray
    cache_deltas: dict[str, np.ndarray]
    delta_sq: float


class IterateHistory:
    """Ring buffer of the last tau+1 iterates and their step records.

    The current iterate is ``current``; :meth:`advance` commits one
    block update and rolls the buffers. Caches (when the operator has
    any) are carried alongside and rolled back together with the vector
    during reconstruction, so a delayed view is internally consistent:
    its cache always equals what the cache *was* at that read.
    """

    def __init__(
        self,
        x0: np.ndarray,
        tau: int,
        layout: BlockLayout,
        caches: dict[str, np.ndarray] | None = None,
    ):
        if tau < 0:
            raise ValueError(f"need tau >= 0, got {tau}")
        self.tau = int(tau)
        self.layout = layout
        self.step = 0
        self._x0 = np.asarray(x0, dtype=np.float64).copy()
        self._iterates: deque[np.ndarray] = deque([self._x0.copy()], maxlen=tau + 1)
        self._records: deque[StepRecord] = deque(maxlen=tau)
        self._caches = {name: c.copy() for name, c in (caches or {}).items()}

    @property
    def current(self) -> np.ndarray:
        return self._iterates[-1]

    @property
    def caches(self) -> dict[str, np.ndarray]:
        return self._caches

    def current_view(self) -> ArrayView:
        return ArrayView(self.current, self._caches)

    def advance(
        self,
        block: int,
        delta: np.ndarray,
        cache_deltas: dict[str, np.ndarray] | None = None,
    ) -> None:
        """Commit ``x[block] += delta`` as the update of step ``step``."""
        sl = self.layout.slice_of(block)
        if delta.shape != (sl.stop - sl.start,):
            raise ValueError(
                f"delta shape {delta.shape} does not match block {block}"
            )
        new_x = self.current.copy()
        new_x[sl] += delta
        cache_deltas = cache_deltas or {}
        if self.tau > 0:
            self._records.append(
                StepRecord(
                    step=self.step,
                    block=block,
                    delta=delta.copy(),
                    cache_deltas={n: d.copy() for n, d in cache_deltas.items()},
                    delta_sq=float(delta @ delta),
                )
            )
        self._iterates.append(new_x)
        for name, d in cache_deltas.items():
            self._caches[name] = self._caches[name] + d
        self.step += 1

    def block_of_step(self, d: int) -> int:
        return self._record_at(d).block

    def _record_at(self, d: int) -> StepRecord:
        # records cover steps {step - len, ..., step - 1}
        idx = d - (self.step - len(self._records))
        if not 0 <= idx < len(self._records):
            raise IndexError(f"step {d} is outside the retained window")
        rec = self._records[idx]
        assert rec.step == d
        return rec

    def iterate_at(self, d: int) -> np.ndarray:
        """Past iterate x(d) for d in {step-tau, ..., step}; x(0) before time."""
        if d < 0:
            d = 0
        idx = d - (self.step - len(self._iterates) + 1)
        if not 0 <= idx < len(self._iterates):
            raise IndexError(f"iterate {d} is outside the retained window")
        return self._iterates[idx]

    def delta_sq_at(self, d: int) -> float:
        """||x(d+1) - x(d)||^2, zero for steps before the start."""
        if d < 0:
            return 0.0
        return self._record_at(d).delta_sq

    def metric_window(self) -> list[np.ndarray]:
        """Iterates [x(k-tau), ..., x(k)] oldest first, x(0)-padded."""
        k = self.step
        return [self.iterate_at(d) for d in range(k - self.tau, k + 1)]

    def reconstruct_read(self, j_set) -> ArrayView:
        """Delayed view with the updates of the steps in ``j_set`` undone."""
        k = self.step
        x_hat = self.current.copy()
        cache_hat = {name: c.copy() for name, c in self._caches.items()}
        for d in j_set:
            if d >= k or d < k - self.tau:
                raise ValueError(
                    f"step {d} lies outside the delay window "
                    f"[{k - self.tau}, {k - 1}]"
                )
            if d < 0:
                continue  # virtual x(0) steps carry no update
            rec = self._record_at(d)
            x_hat[self.layout.slice_of(rec.block)] -= rec.delta
            for name, cd in rec.cache_deltas.items():
                cache_hat[name] -= cd
        return ArrayView(x_hat, cache_hat)


def reconstruct_read(history: IterateHistory, k: int, j_set) -> np.ndarray:
    """Snapshot x_hat(k) = x(k) + sum_{d in J} (x(d) - x(d+1)).

    ``k`` must be the history's current step; it is explicit because
    delay policies hand (k, J) pairs around and mismatches should fail
    loudly rather than silently reconstruct at the wrong time.
    """
    if k != history.step:
        raise ValueError(
            f"history is at step {history.step}, cannot reconstruct at {k}"
        )
    return history.reconstruct_read(j_set).vector()
