"""Dual splitting operators: two-function ADMM, consensus, decentralized.

All three families iterate on dual variables z and share one skeleton,
the reflected two-sided proximal sweep

    y, w_g = dual-prox of g at z
    x, w_f = dual-prox of f at 2*w_g - z
    z      += eta * (w_f - w_g)        (one block per activation)

whose displacement S(z) = w_g - w_f is the block our update rule
consumes. The dual-prox of a side with data (fn, M, c) maps w to

    primal = argmin fn(x) - <w, Mx - c> + (gamma/2) ||Mx - c||^2
    w_out  = w - gamma * (M @ primal - c)

Consensus and decentralized variants specialize the same sweep to
per-agent or per-edge dual coordinates with closed-form reductions.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..blocks import BlockLayout
from ..core import ProblemOperator, StateView
from ..data.synth import GraphSpec
from .local import LocalFunction, QuadraticForm, ZeroFn


class AdmmSide:
    """One side of the splitting: a function plus its constraint column.

    ``mat`` may be a dense matrix (then ``fn`` must be quadratic or zero
    so the subproblem stays a linear solve) or a scalar s standing for
    M = s*I, which keeps every :class:`LocalFunction` usable through
    ``solve_shifted`` since M'M collapses to s^2 * I.
    """

    def __init__(
        self,
        fn: LocalFunction,
        mat: np.ndarray | float = 1.0,
        offset: np.ndarray | float = 0.0,
    ):
        self.fn = fn
        if np.isscalar(mat):
            self.scale: float | None = float(mat)
            self.mat = None
            if self.scale == 0.0:
                raise ValueError("constraint scale must be nonzero")
        else:
            self.scale = None
            self.mat = np.asarray(mat, dtype=np.float64)
            if not isinstance(fn, (QuadraticForm, ZeroFn)):
                raise TypeError(
                    "a general constraint matrix needs a quadratic or zero "
                    "function; separable pieces require M = s*I"
                )
        self.offset = offset

    def prox_dual(self, w: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
        """(primal minimizer, updated dual w - gamma*(M primal - offset))."""
        c = self.offset
        if self.scale is not None:
            s = self.scale
            primal = self.fn.solve_shifted(s * (w + gamma * np.asarray(c)), gamma * s * s)
            return primal, w - gamma * (s * primal - c)
        m_mat = self.mat
        if isinstance(self.fn, QuadraticForm):
            p_mat, q = self.fn.p_mat, self.fn.q
        else:
            n = m_mat.shape[1]
            p_mat, q = np.zeros((n, n)), np.zeros(n)
        rhs = q + m_mat.T @ (w + gamma * np.asarray(c))
        primal = np.linalg.solve(p_mat + gamma * (m_mat.T @ m_mat), rhs)
        return primal, w - gamma * (m_mat @ primal - c)


class AdmmDualOp(ProblemOperator):
    """Asynchronous dual updates for min f(x) + g(y) s.t. Ax + By = b.

    State is the dual vector z (one scalar per constraint row by
    default). Each activation recomputes the full two-sided sweep at the
    read snapshot and commits one block of the resulting displacement.
    """

    def __init__(
        self,
        f_side: AdmmSide,
        g_side: AdmmSide,
        dual_dim: int,
        gamma: float,
        layout: BlockLayout | None = None,
    ):
        if gamma <= 0:
            raise ValueError(f"need gamma > 0, got {gamma}")
        self.f_side = f_side
        self.g_side = g_side
        self.gamma = float(gamma)
        self.layout = layout if layout is not None else BlockLayout.scalar(dual_dim)
        if self.layout.dim != dual_dim:
            raise ValueError("layout does not cover the dual dimension")

    def _sweep(self, z: np.ndarray):
        y, w_g = self.g_side.prox_dual(z, self.gamma)
        x, w_f = self.f_side.prox_dual(2.0 * w_g - z, self.gamma)
        return x, y, w_f, w_g

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        _, _, w_f, w_g = self._sweep(view.vector())
        return (w_g - w_f)[self.layout.slice_of(i)]

    def s_full(self, view: StateView) -> np.ndarray:
        _, _, w_f, w_g = self._sweep(view.vector())
        return w_g - w_f

    def recover(self, view: StateView) -> tuple[np.ndarray, np.ndarray]:
        """Primal pair (x, y) implied by the current duals."""
        x, y, _, _ = self._sweep(view.vector())
        return x, y

    def objective(self, view: StateView) -> float:
        x, y = self.recover(view)
        return self.f_side.fn.value(x) + self.g_side.fn.value(y)


class ConsensusAdmmOp(ProblemOperator):
    """Consensus minimization of sum_i f_i(x) over m agents.

    Each agent i owns a dual block z_i in R^d; the shared primal
    aggregate y = -(1/(gamma*m)) sum_i z_i is kept as a cache and
    updated incrementally with every dual commit. Activating agent i
    runs the sweep restricted to its block:

        w_g = z_i + gamma * y
        x_i = argmin f_i(x) - <2*w_g - z_i, x> + (gamma/2)||x||^2
        w_f = 2*w_g - z_i - gamma * x_i
        S_i = w_g - w_f
    """

    cache_names = ("y",)

    def __init__(self, locals_: Sequence[LocalFunction], dim: int, gamma: float):
        if len(locals_) < 1:
            raise ValueError("need at least one agent")
        if gamma <= 0:
            raise ValueError(f"need gamma > 0, got {gamma}")
        self.locals = tuple(locals_)
        self.dim = int(dim)
        self.gamma = float(gamma)
        self.layout = BlockLayout(sizes=(self.dim,) * len(locals_))

    @property
    def num_agents(self) -> int:
        return len(self.locals)

    def init_caches(self, z: np.ndarray) -> dict[str, np.ndarray]:
        stacked = z.reshape(self.num_agents, self.dim)
        return {"y": -stacked.sum(axis=0) / (self.gamma * self.num_agents)}

    def cache_deltas(self, i, view, z_delta) -> dict[str, np.ndarray]:
        return {"y": -z_delta / (self.gamma * self.num_agents)}

    def _agent_sweep(self, i: int, z_i: np.ndarray, y: np.ndarray):
        w_g = z_i + self.gamma * y
        x_i = self.locals[i].solve_shifted(2.0 * w_g - z_i, self.gamma)
        w_f = 2.0 * w_g - z_i - self.gamma * x_i
        return x_i, w_f, w_g

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        z_i = view.vector()[self.layout.slice_of(i)]
        _, w_f, w_g = self._agent_sweep(i, z_i, view.cache("y"))
        return w_g - w_f

    def recover(self, view: StateView) -> np.ndarray:
        """Per-agent primal estimates, stacked (num_agents, dim)."""
        y = view.cache("y")
        out = np.empty((self.num_agents, self.dim))
        for i in range(self.num_agents):
            z_i = view.vector()[self.layout.slice_of(i)]
            out[i], _, _ = self._agent_sweep(i, z_i, y)
        return out

    def objective(self, view: StateView) -> float:
        xs = self.recover(view)
        return sum(f.value(xs[i]) for i, f in enumerate(self.locals))


class DecentralAdmmOp(ProblemOperator):
    """Edge-coupled consensus over a connected graph, dual domain.

    Every edge e = (i, j) carries two dual slots z_{e,i}, z_{e,j} of
    dimension d. Two activation granularities share the state layout:

    * mode "agent": a block gathers all slots owned by one agent
      (ordered by edge index). Activating agent i solves its local
      subproblem against the *neighbor* copies of the incident duals
      and moves every own slot.
    * mode "edge": a block is one edge's slot pair. Activating edge
      (i, j) solves both endpoint subproblems from their own dual sums,
      reconciles through the shared edge variable, and moves the pair.

    Both read stale non-block slots while the activated block stays
    fresh.
    """

    own_block_fresh = True

    def __init__(
        self,
        graph: GraphSpec,
        locals_: Sequence[LocalFunction],
        local_dim: int,
        gamma: float,
        mode: str = "agent",
    ):
        if len(locals_) != graph.m:
            raise ValueError("need exactly one local function per agent")
        if gamma <= 0:
            raise ValueError(f"need gamma > 0, got {gamma}")
        if mode not in ("agent", "edge"):
            raise ValueError(f"mode must be 'agent' or 'edge', got {mode!r}")
        if min(graph.degree(u) for u in range(graph.m)) == 0:
            raise ValueError("graph has a degree-0 node")  # GraphSpec guards too
        self.graph = graph
        self.locals = tuple(locals_)
        self.d = int(local_dim)
        self.gamma = float(gamma)
        self.mode = mode

        self.incident: list[list[int]] = [[] for _ in range(graph.m)]
        for e, (i, j) in enumerate(graph.edges):
            self.incident[i].append(e)
            self.incident[j].append(e)

        # slot order defines the flat layout; offsets in units of d
        self._slot_of: dict[tuple[int, int], int] = {}
        if mode == "agent":
            sizes = []
            pos = 0
            for u in range(graph.m):
                for e in self.incident[u]:
                    self._slot_of[(e, u)] = pos
                    pos += 1
                sizes.append(len(self.incident[u]) * self.d)
        else:
            sizes = []
            pos = 0
            for e, (i, j) in enumerate(graph.edges):
                self._slot_of[(e, i)] = pos
                self._slot_of[(e, j)] = pos + 1
                pos += 2
                sizes.append(2 * self.d)
        self.layout = BlockLayout(sizes=tuple(sizes))

    def _slot(self, x: np.ndarray, e: int, u: int) -> np.ndarray:
        off = self._slot_of[(e, u)] * self.d
        return x[off:off + self.d]

    def _other(self, e: int, u: int) -> int:
        i, j = self.graph.edges[e]
        return j if u == i else i

    def _solve_agent(self, u: int, shift: np.ndarray) -> np.ndarray:
        return self.locals[u].solve_shifted(shift, self.gamma * self.graph.degree(u))

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        x = view.vector()
        if self.mode == "agent":
            u = i
            neighbor_sum = np.zeros(self.d)
            for e in self.incident[u]:
                neighbor_sum += self._slot(x, e, self._other(e, u))
            x_u = self._solve_agent(u, -neighbor_sum)
            out = np.empty(len(self.incident[u]) * self.d)
            for k, e in enumerate(self.incident[u]):
                pair_mean = 0.5 * (
                    self._slot(x, e, u) + self._slot(x, e, self._other(e, u))
                )
                out[k * self.d:(k + 1) * self.d] = pair_mean + self.gamma * x_u
            return out

        e = i
        i_node, j_node = self.graph.edges[e]
        primal = {}
        v = {}
        for u in (i_node, j_node):
            own_sum = np.zeros(self.d)
            for e2 in self.incident[u]:
                own_sum += self._slot(x, e2, u)
            primal[u] = self._solve_agent(u, own_sum)
            w_f = self._slot(x, e, u) - self.gamma * primal[u]
            v[u] = 2.0 * w_f - self._slot(x, e, u)
        y_edge = -(v[i_node] + v[j_node]) / (2.0 * self.gamma)
        out = np.empty(2 * self.d)
        out[:self.d] = self.gamma * (primal[i_node] - y_edge)
        out[self.d:] = self.gamma * (primal[j_node] - y_edge)
        return out

    def recover(self, view: StateView) -> np.ndarray:
        """Per-agent primal estimates, stacked (m, d)."""
        x = view.vector()
        out = np.empty((self.graph.m, self.d))
        for u in range(self.graph.m):
            if self.mode == "agent":
                shift = np.zeros(self.d)
                for e in self.incident[u]:
                    shift -= self._slot(x, e, self._other(e, u))
            else:
                shift = np.zeros(self.d)
                for e in self.incident[u]:
                    shift += self._slot(x, e, u)
            out[u] = self._solve_agent(u, shift)
        return out

    def objective(self, view: StateView) -> float:
        xs = self.recover(view)
        return sum(f.value(xs[u]) for u, f in enumerate(self.locals))
