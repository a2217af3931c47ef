"""Gradient-descent displacements: centralized and decentralized.

For an L-smooth convex objective the map T = I - (2/L) grad(f) is
nonexpansive, so S = (2/L) grad(f). The decentralized variant penalizes
disagreement across a mixing matrix W and evaluates against possibly
stale neighbor values while an agent's own coordinates stay fresh.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..blocks import BlockLayout
from ..core import ProblemOperator, StateView
from ..data.sparse import SparseMatrixCSR
from ..data.synth import GraphSpec
from ..theory import spectral_norm


@dataclass(frozen=True)
class SparseTerm:
    """One summand f_j of a sparsely supported objective.

    ``value`` and ``grad`` receive x restricted to ``support`` (global
    coordinate indices) and grad returns an array of the same length.
    """

    support: tuple[int, ...]
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


class GradOp(ProblemOperator):
    """S = (2/L) grad(f) for a quadratic or a sum of sparse terms.

    Quadratic mode: f(x) = 0.5 x'Qx - b'x with symmetric PSD Q, so
    grad = Qx - b and L defaults to a power-method estimate of ||Q||_2,
    inflated by 1e-6 relative since the iteration converges from below
    and cocoercivity needs an upper bound.

    Term mode (:meth:`from_terms`): f = sum of SparseTerm; a block
    evaluation visits only the terms whose support meets the block, and
    the caller must supply L.
    """

    def __init__(
        self,
        q: SparseMatrixCSR,
        b: np.ndarray,
        L: float | None = None,
        layout: BlockLayout | None = None,
    ):
        if q.rows != q.cols:
            raise ValueError(f"Q must be square, got {q.shape}")
        self.q = q
        self.b = np.asarray(b, dtype=np.float64)
        self.layout = layout if layout is not None else BlockLayout.scalar(q.rows)
        if self.layout.dim != q.rows:
            raise ValueError("layout does not cover the problem dimension")
        if L is None:
            L = spectral_norm(q.to_scipy()) * (1.0 + 1e-6)
        if L <= 0:
            raise ValueError(f"need L > 0, got {L}")
        self.L = float(L)
        self.terms: tuple[SparseTerm, ...] | None = None
        self._rows = [q.row(r) for r in range(q.rows)]

    @classmethod
    def from_terms(
        cls,
        terms: Sequence[SparseTerm],
        dim: int,
        L: float,
        layout: BlockLayout | None = None,
    ) -> "GradOp":
        op = cls.__new__(cls)
        op.q = None
        op.b = None
        op.layout = layout if layout is not None else BlockLayout.scalar(dim)
        if op.layout.dim != dim:
            raise ValueError("layout does not cover the problem dimension")
        if L <= 0:
            raise ValueError(f"need L > 0, got {L}")
        op.L = float(L)
        op.terms = tuple(terms)
        for t in op.terms:
            if any(not 0 <= j < dim for j in t.support):
                raise ValueError(f"term support {t.support} outside [0, {dim})")
        # block -> indices of terms whose support intersects it
        blocks_of_term = [
            {op.layout.block_of(j) for j in t.support} for t in op.terms
        ]
        op._block_terms = tuple(
            tuple(ti for ti, bs in enumerate(blocks_of_term) if i in bs)
            for i in range(op.layout.m)
        )
        return op

    def _grad_block_terms(self, i: int, x: np.ndarray) -> np.ndarray:
        sl = self.layout.slice_of(i)
        out = np.zeros(sl.stop - sl.start)
        for ti in self._block_terms[i]:
            term = self.terms[ti]
            sup = np.asarray(term.support)
            g = term.grad(x[sup])
            for local, j in enumerate(sup):
                if sl.start <= j < sl.stop:
                    out[j - sl.start] += g[local]
        return out

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        x = view.vector()
        if self.terms is not None:
            return (2.0 / self.L) * self._grad_block_terms(i, x)
        sl = self.layout.slice_of(i)
        out = np.empty(sl.stop - sl.start)
        for k, r in enumerate(range(sl.start, sl.stop)):
            cols, vals = self._rows[r]
            out[k] = vals @ x[cols] - self.b[r]
        return (2.0 / self.L) * out

    def s_full(self, view: StateView) -> np.ndarray:
        x = view.vector()
        if self.terms is not None:
            return np.concatenate(
                [self.s_block(i, view) for i in range(self.layout.m)]
            )
        return (2.0 / self.L) * (self.q.to_scipy() @ x - self.b)

    def objective(self, view: StateView) -> float:
        x = view.vector()
        if self.terms is not None:
            return sum(
                t.value(x[np.asarray(t.support)]) for t in self.terms
            )
        return 0.5 * float(x @ (self.q.to_scipy() @ x)) - float(self.b @ x)


def metropolis_weights(graph: GraphSpec) -> np.ndarray:
    """Symmetric doubly stochastic mixing matrix from node degrees.

    w_ij = 1 / (1 + max(deg i, deg j)) on edges, diagonal absorbs the
    remainder. Always symmetric with rows summing to one.
    """
    w = np.zeros((graph.m, graph.m))
    for i, j in graph.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(graph.degree(i), graph.degree(j)))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


@dataclass(frozen=True)
class LocalSmooth:
    """Per-agent smooth objective: value, gradient, Lipschitz constant."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz: float

    @classmethod
    def quadratic(cls, a: np.ndarray, c: np.ndarray) -> "LocalSmooth":
        """f(x) = 0.5 (x-c)'A(x-c) for symmetric PSD A."""
        a = np.asarray(a, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64)
        lip = float(np.linalg.eigvalsh(a).max())
        return cls(
            value=lambda x: 0.5 * float((x - c) @ a @ (x - c)),
            grad=lambda x: a @ (x - c),
            lipschitz=lip,
        )


class DecentralGradOp(ProblemOperator):
    """Consensus-penalized gradient displacement over a mixing matrix.

    Each of m agents holds a block x_i of size d; the network objective
    min sum_i f_i(x_i) + (1/(2*gamma)) * x'(I - W)x has displacement

        S(x) = (2/L) (grad F(x) + (1/gamma) (I - W) x)

    with L = max_i L_i + (1 - lambda_min(W)) / gamma. An agent reads
    neighbors possibly stale but always uses its own block fresh.
    """

    own_block_fresh = True

    def __init__(
        self,
        graph: GraphSpec,
        locals_: Sequence[LocalSmooth],
        local_dim: int,
        gamma: float,
        weights: np.ndarray | None = None,
    ):
        if len(locals_) != graph.m:
            raise ValueError("need exactly one local function per agent")
        if gamma <= 0:
            raise ValueError(f"need gamma > 0, got {gamma}")
        self.graph = graph
        self.locals = tuple(locals_)
        self.local_dim = int(local_dim)
        self.gamma = float(gamma)
        self.w = metropolis_weights(graph) if weights is None else np.asarray(weights)
        if not np.allclose(self.w, self.w.T):
            raise ValueError("mixing matrix must be symmetric")
        if not np.allclose(self.w.sum(axis=1), 1.0):
            raise ValueError("mixing matrix rows must sum to 1")
        lam_min = float(np.linalg.eigvalsh(self.w).min())
        self.L = max(f.lipschitz for f in self.locals) + (1.0 - lam_min) / self.gamma
        self.layout = BlockLayout(sizes=(self.local_dim,) * graph.m)

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        x = view.vector()
        xi = x[self.layout.slice_of(i)]
        mix = np.zeros(self.local_dim)
        for j in range(self.graph.m):
            wij = self.w[i, j]
            if wij != 0.0:
                mix += wij * x[self.layout.slice_of(j)]
        return (2.0 / self.L) * (self.locals[i].grad(xi) + (xi - mix) / self.gamma)

    def objective(self, view: StateView) -> float:
        x = view.vector()
        return sum(
            f.value(x[self.layout.slice_of(i)]) for i, f in enumerate(self.locals)
        )


def decentral_grad_step(
    op: DecentralGradOp, i: int, view: StateView, eta: float
) -> np.ndarray:
    """Agent-level update x_i - (eta/L)(grad f_i(x_i) + (x_i - sum w_ij x_j)/gamma).

    Convenience form of the block rule as an agent would program it;
    equal to an async_block_update with uniform sampling and step eta/2
    (because S carries the 2/L prefactor).
    """
    xi = view.vector()[op.layout.slice_of(i)]
    return xi - (eta / 2.0) * op.s_block(i, view)
