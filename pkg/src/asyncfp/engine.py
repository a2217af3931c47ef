"""Lock-free multithreaded runtime for block fixed-point updates.

Worker agents loop independently: claim a step ticket, sample a block,
snapshot the shared vector without locks, evaluate the block
displacement, and commit the increment. Nobody waits for anybody, so
reads are stale by however many commits landed during the agent's own
read-compute-commit cycle; that staleness is measured per update and
reported, never enforced.

Atomicity model (CPython). Every mutation of shared float storage goes
through a single small ufunc call. CPython only releases the GIL around
numpy inner loops once the operation is large enough to be worth it;
empirically, in-place slice adds stay atomic well past 500 elements, so
commits are chunked at 128 to keep a wide margin. Aligned 8-byte loads
and stores are atomic at machine level on every platform we run on,
which rules out torn scalars even while a snapshot copy is in flight.
Python-level counters use ``itertools.count``, whose ``next`` is a
single C call.

Multi-scalar blocks additionally get either a per-block writer lock
(scheme ``per_block_lock``) or a two-buffer scheme (``dual_copy``):
writers fill the inactive buffer under a per-block mutex and flip an
active selector only once it is complete, and readers validate a
version stamp around their copy so every block read is some fully
committed block state. Scalar blocks default to plain chunked adds
(``atomic_scalar``).

Aggregate floating-point results for more than one agent are not
reproducible run to run: commit order is decided by the scheduler.
With one agent the engine is deterministic and reproduces the delay
simulator with no delays, bit for bit.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass
from math import ceil, isnan

import numpy as np

from .blocks import BlockLayout
from .core import ArrayView, ProblemOperator, SamplingDistribution, block_step_delta
from .metrics import BenchRow, EpochRow, RunMetrics
from .theory import StepSizePolicy

__all__ = [
    "BLOCK_SCHEMES",
    "DualCopyBlock",
    "EngineConfig",
    "SharedState",
    "measure_speedup",
    "run_engine",
]

BLOCK_SCHEMES = ("atomic_scalar", "dual_copy", "per_block_lock")

# Largest in-place add issued as one ufunc call. Keeps every commit far
# below the size where numpy starts releasing the GIL mid-operation.
ATOMIC_CHUNK = 128


def _chunked_add(dst: np.ndarray, start: int, delta: np.ndarray) -> None:
    """Add ``delta`` into ``dst[start:start+len(delta)]`` atomically.

    Each chunk is one GIL-holding ufunc call, so concurrent adds to the
    same scalars never lose increments.
    """
    n = delta.shape[0]
    if n <= ATOMIC_CHUNK:
        dst[start:start + n] += delta
        return
    for off in range(0, n, ATOMIC_CHUNK):
        stop = min(off + ATOMIC_CHUNK, n)
        dst[start + off:start + stop] += delta[off:stop]


class DualCopyBlock:
    """Two buffered copies of one block with an active-copy selector.

    Writers serialize on ``lock``, build the new state in the inactive
    buffer, then flip ``active``. Readers never lock: they copy the
    active buffer and retry if its version stamp moved (or was odd,
    meaning a writer was mid-fill after a quick double flip). Stamps are
    only ever mutated by the lock holder, so the parity protocol is
    race-free.
    """

    __slots__ = ("bufs", "stamps", "active", "lock")

    def __init__(self, values: np.ndarray):
        values = np.array(values, dtype=np.float64)
        self.bufs = [values, values.copy()]
        self.stamps = [0, 0]
        self.active = 0
        self.lock = threading.Lock()

    def read(self) -> np.ndarray:
        while True:
            a = self.active
            stamp = self.stamps[a]
            if stamp & 1:
                continue
            out = self.bufs[a].copy()
            if self.stamps[a] == stamp:
                return out

    def commit(self, delta: np.ndarray) -> None:
        with self.lock:
            target = 1 - self.active
            self.stamps[target] += 1
            np.add(self.bufs[self.active], delta, out=self.bufs[target])
            self.stamps[target] += 1
            self.active = target

    def value(self) -> np.ndarray:
        """Current state; only meaningful once writers have quiesced."""
        return self.bufs[self.active].copy()


class SharedState:
    """Shared solver state: the iterate, optional caches, block layout.

    All access goes through ``snapshot_view`` / ``commit`` /
    ``add_to_cache`` so the storage scheme stays swappable. Snapshots
    are lock-free and therefore inconsistent: scalars within one
    snapshot may stem from different moments. Scheme ``dual_copy``
    strengthens this to per-block consistency.
    """

    def __init__(
        self,
        x0: np.ndarray,
        layout: BlockLayout,
        scheme: str = "atomic_scalar",
        caches: dict[str, np.ndarray] | None = None,
    ):
        if scheme not in BLOCK_SCHEMES:
            raise ValueError(f"unknown block scheme {scheme!r}, expected one of {BLOCK_SCHEMES}")
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != (layout.dim,):
            raise ValueError(f"x0 has shape {x0.shape}, layout needs ({layout.dim},)")
        self.layout = layout
        self.scheme = scheme
        self._caches = {k: np.array(v, dtype=np.float64) for k, v in (caches or {}).items()}
        if scheme == "dual_copy":
            self._blocks = [DualCopyBlock(x0[layout.slice_of(i)]) for i in range(layout.m)]
            self._x = None
        else:
            self._x = x0.copy()
            self._blocks = None
        self._locks = (
            [threading.Lock() for _ in range(layout.m)]
            if scheme == "per_block_lock"
            else None
        )

    @property
    def cache_names(self) -> tuple[str, ...]:
        return tuple(self._caches)

    def read_block(self, i: int) -> np.ndarray:
        if self._blocks is not None:
            return self._blocks[i].read()
        return self._x[self.layout.slice_of(i)].copy()

    def snapshot_x(self) -> np.ndarray:
        """Lock-free copy of the full iterate (inconsistent by design)."""
        if self._blocks is not None:
            out = np.empty(self.layout.dim)
            for i, blk in enumerate(self._blocks):
                out[self.layout.slice_of(i)] = blk.read()
            return out
        return self._x.copy()

    def snapshot_view(self, fresh_block: int | None = None) -> ArrayView:
        x = self.snapshot_x()
        if fresh_block is not None:
            x[self.layout.slice_of(fresh_block)] = self.read_block(fresh_block)
        return ArrayView(x, {k: v.copy() for k, v in self._caches.items()})

    def commit(self, i: int, delta: np.ndarray) -> None:
        """Atomically add ``delta`` to block ``i``.

        Concurrent committers to the same block all land; concurrent
        readers see each scalar either before or after its increment.
        """
        delta = np.asarray(delta, dtype=np.float64)
        sl = self.layout.slice_of(i)
        if delta.shape != (sl.stop - sl.start,):
            raise ValueError(f"delta for block {i} has shape {delta.shape}, expected ({sl.stop - sl.start},)")
        if not np.all(np.isfinite(delta)):
            raise FloatingPointError(f"non-finite update for block {i}")
        if self.scheme == "dual_copy":
            self._blocks[i].commit(delta)
        elif self.scheme == "per_block_lock":
            with self._locks[i]:
                self._x[sl] += delta
        else:
            _chunked_add(self._x, sl.start, delta)

    def add_to_cache(self, name: str, delta: np.ndarray) -> None:
        cache = self._caches[name]
        delta = np.asarray(delta, dtype=np.float64)
        if delta.shape != cache.shape:
            raise ValueError(f"cache {name!r} delta has shape {delta.shape}, expected {cache.shape}")
        _chunked_add(cache, 0, delta)

    def current_x(self) -> np.ndarray:
        """Authoritative iterate; call only after writers have quiesced."""
        if self._blocks is not None:
            out = np.empty(self.layout.dim)
            for i, blk in enumerate(self._blocks):
                out[self.layout.slice_of(i)] = blk.value()
            return out
        return self._x.copy()

    def cache(self, name: str) -> np.ndarray:
        """Copy of a live cache; exact only after writers have quiesced."""
        return self._caches[name].copy()


def _default_scheme(layout: BlockLayout) -> str:
    return "atomic_scalar" if all(s == 1 for s in layout.sizes) else "dual_copy"


@dataclass
class EngineConfig:
    """Run parameters for the threaded engine.

    scheme None picks atomic_scalar when every block is a single
    scalar and dual_copy otherwise. Trajectory recording only makes
    sense for one agent, where commit order is well defined.
    """

    num_agents: int
    epochs: int
    distribution: SamplingDistribution
    step_policy: StepSizePolicy
    scheme: str | None = None
    seed: int = 0
    x0: np.ndarray | None = None
    x_star: np.ndarray | None = None
    record_trajectory: bool = False
    record_orders: bool = False

    def __post_init__(self):
        if self.num_agents < 1:
            raise ValueError(f"num_agents must be >= 1, got {self.num_agents}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.scheme is not None and self.scheme not in BLOCK_SCHEMES:
            raise ValueError(f"unknown block scheme {self.scheme!r}, expected one of {BLOCK_SCHEMES}")
        if self.record_trajectory and self.num_agents != 1:
            raise ValueError("trajectory recording requires num_agents=1")


def run_engine(cfg: EngineConfig, op: ProblemOperator) -> RunMetrics:
    """Run ``epochs * m`` asynchronous block commits across the agents.

    Agents claim step tickets from a shared counter and stop once the
    tickets run out, so the total number of commits is exact. A second
    counter ranks commits as they land; the gap between an agent's read
    and its own commit rank is recorded as that update's staleness.
    One row is logged per epoch (every m commits) by whichever agent
    commits the boundary update. Any agent fault aborts the run and is
    re-raised from the calling thread.
    """
    layout = op.layout
    m = layout.m
    if cfg.distribution.m != m:
        raise ValueError(f"distribution covers {cfg.distribution.m} blocks, operator has {m}")
    x0 = np.zeros(layout.dim) if cfg.x0 is None else np.asarray(cfg.x0, dtype=np.float64)
    scheme = cfg.scheme or _default_scheme(layout)
    state = SharedState(x0, layout, scheme, caches=op.init_caches(x0))

    total = cfg.epochs * m
    eta = cfg.step_policy.eta
    dist = cfg.distribution
    tickets = itertools.count()
    ranks = itertools.count()
    progress = np.zeros(1, dtype=np.int64)
    stop = threading.Event()
    faults: list[tuple[int, BaseException]] = []
    rows_by_epoch: dict[int, EpochRow] = {}
    counts = [0] * cfg.num_agents
    staleness: list[list[int]] = [[] for _ in range(cfg.num_agents)]
    sampled = np.full(total, -1, dtype=np.int64) if cfg.record_orders else None
    committed = np.full(total, -1, dtype=np.int64) if cfg.record_orders else None
    trajectory = [x0.copy()] if cfg.record_trajectory else None
    started = time.perf_counter()

    def log_epoch(epoch: int) -> None:
        view = state.snapshot_view()
        objective = op.objective(view)
        dist_sq = None
        if cfg.x_star is not None:
            diff = view.vector() - cfg.x_star
            dist_sq = float(diff @ diff)
        rows_by_epoch[epoch] = EpochRow(
            epoch=epoch,
            fixed_point_residual=op.residual(view),
            objective=None if isnan(objective) else objective,
            dist_sq_to_oracle=dist_sq,
            xi=None,
            eta=eta,
            wall_ms=(time.perf_counter() - started) * 1e3,
        )

    def agent(j: int) -> None:
        rng = np.random.default_rng([cfg.seed, 2, j])
        stale_log = staleness[j]
        try:
            while not stop.is_set():
                ticket = next(tickets)
                if ticket >= total:
                    break
                i = dist.sample(rng)
                if sampled is not None:
                    sampled[ticket] = i
                read_at = int(progress[0])
                view = state.snapshot_view(i if op.own_block_fresh else None)
                delta = block_step_delta(op.s_block(i, view), eta, dist, i)
                state.commit(i, delta)
                for name, d in op.cache_deltas(i, view, delta).items():
                    state.add_to_cache(name, d)
                rank = next(ranks)
                progress[0] = rank + 1
                if committed is not None:
                    committed[rank] = i
                stale_log.append(rank - read_at)
                counts[j] += 1
                if trajectory is not None:
                    trajectory.append(state.current_x())
                if (rank + 1) % m == 0:
                    log_epoch((rank + 1) // m)
        except BaseException as exc:
            faults.append((j, exc))
            stop.set()

    log_epoch(0)
    threads = [
        threading.Thread(target=agent, args=(j,), name=f"agent-{j}", daemon=True)
        for j in range(cfg.num_agents)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if faults:
        j, exc = faults[0]
        raise RuntimeError(f"agent {j} faulted; engine aborted") from exc

    final_x = state.current_x()
    all_stale = [s for per_agent in staleness for s in per_agent]
    hist = np.bincount(all_stale) if all_stale else np.zeros(1, dtype=np.int64)
    summary = {
        "final_residual": rows_by_epoch[cfg.epochs].fixed_point_residual,
        "total_wall_s": time.perf_counter() - started,
        "steps": total,
        "max_staleness": int(max(all_stale)) if all_stale else 0,
        "staleness_hist": {s: int(c) for s, c in enumerate(hist) if c},
        "agent_update_counts": counts,
    }
    if op.cache_names:
        fresh = op.init_caches(final_x)
        drift = {}
        for name in op.cache_names:
            gap = float(np.linalg.norm(state.cache(name) - fresh[name]))
            scale = float(np.linalg.norm(fresh[name])) or 1.0
            drift[name] = gap / scale
        summary["cache_drift"] = drift
    if cfg.record_orders:
        summary["sampled_blocks"] = sampled.tolist()
        summary["committed_blocks"] = committed.tolist()
    config = {
        "problem": type(op).__name__,
        "dim": layout.dim,
        "blocks": m,
        "eta": eta,
        "step_kind": cfg.step_policy.kind,
        "num_agents": cfg.num_agents,
        "scheme": scheme,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "p_min": dist.p_min,
        "oracle": cfg.x_star is not None,
    }
    return RunMetrics(
        rows=[rows_by_epoch[e] for e in sorted(rows_by_epoch)],
        config=config,
        summary=summary,
        final_x=final_x,
        trajectory=trajectory,
    )


def _run_sync_parallel(
    op: ProblemOperator,
    dist: SamplingDistribution,
    step_policy: StepSizePolicy,
    num_agents: int,
    epochs: int,
    seed: int,
    scheme: str | None,
) -> float:
    """Barrier-synchronous baseline: rounds of one update per agent.

    Same sampling, same commit path, but every agent waits at a barrier
    before each round, so stragglers stall the whole team. Returns wall
    seconds; the iterate itself is discarded.
    """
    layout = op.layout
    x0 = np.zeros(layout.dim)
    state = SharedState(x0, layout, scheme or _default_scheme(layout), caches=op.init_caches(x0))
    rounds = ceil(epochs * layout.m / num_agents)
    barrier = threading.Barrier(num_agents)
    eta = step_policy.eta
    faults: list[BaseException] = []

    def agent(j: int) -> None:
        rng = np.random.default_rng([seed, 2, j])
        try:
            for _ in range(rounds):
                barrier.wait()
                i = dist.sample(rng)
                view = state.snapshot_view(i if op.own_block_fresh else None)
                delta = block_step_delta(op.s_block(i, view), eta, dist, i)
                state.commit(i, delta)
                for name, d in op.cache_deltas(i, view, delta).items():
                    state.add_to_cache(name, d)
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:
            faults.append(exc)
            barrier.abort()

    started = time.perf_counter()
    threads = [threading.Thread(target=agent, args=(j,), daemon=True) for j in range(num_agents)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if faults:
        raise RuntimeError("sync baseline agent faulted") from faults[0]
    return time.perf_counter() - started


def measure_speedup(
    op: ProblemOperator,
    dist: SamplingDistribution,
    step_policy: StepSizePolicy,
    epochs: int,
    agents: tuple[int, ...] = (1, 2, 4),
    seed: int = 0,
    problem: str = "problem",
    scheme: str | None = None,
) -> list[BenchRow]:
    """Wall-time grid over agent counts, async against a sync baseline.

    Speedups are relative to the one-agent asynchronous run, which is
    re-used as its own row (speedup exactly 1.0). Numbers are
    machine-dependent and these are measurements, never guarantees; on
    a single hardware core threading buys nothing and the table shows
    that honestly.
    """
    if any(p < 1 for p in agents):
        raise ValueError(f"agent counts must be >= 1, got {agents}")

    def async_wall(p: int) -> float:
        cfg = EngineConfig(
            num_agents=p,
            epochs=epochs,
            distribution=dist,
            step_policy=step_policy,
            scheme=scheme,
            seed=seed,
        )
        return run_engine(cfg, op).summary["total_wall_s"]

    baseline = async_wall(1)
    rows = []
    for p in agents:
        wall = baseline if p == 1 else async_wall(p)
        rows.append(BenchRow(problem, p, "async", wall, baseline / wall))
    for p in agents:
        wall = _run_sync_parallel(op, dist, step_policy, p, epochs, seed, scheme)
        rows.append(BenchRow(problem, p, "sync", wall, baseline / wall))
    return rows
