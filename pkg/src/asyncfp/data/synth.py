"""Reproducible synthetic fixtures: linear systems, graphs, datasets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .sparse import LabeledDataset, SparseMatrixCSR


def gen_diag_dominant(
    n: int,
    bandwidth: int = 5,
    seed: int = 0,
    ratio: float = 0.5,
) -> tuple[SparseMatrixCSR, np.ndarray, np.ndarray]:
    """Symmetric banded system A x* = b with a dominance guarantee.

    Off-diagonal entries are Gaussian within ``bandwidth`` of the
    diagonal; the (constant) diagonal is set to the largest absolute
    off-diagonal row sum divided by ``ratio``. The split A = D + R then
    satisfies ||D^{-1} R||_2 <= ||D^{-1} R||_inf <= ratio < 1 (the
    scaled matrix is symmetric), so Jacobi-style iterations contract.

    Returns (A, b, x_star) with b = A @ x_star computed by the same CSR
    matvec consumers use, hence b - A @ x_star is exactly zero.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"need ratio in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)

    upper = sp.dok_matrix((n, n))
    for off in range(1, min(bandwidth, n - 1) + 1):
        vals = rng.standard_normal(n - off)
        upper.setdiag(vals, k=off)
    r_part = (upper + upper.T).tocsr()

    row_abs = np.asarray(np.abs(r_part).sum(axis=1)).ravel()
    diag = float(row_abs.max()) / ratio if row_abs.max() > 0 else 1.0
    a_mat = (r_part + sp.identity(n, format="csr") * diag).tocsr()

    a = SparseMatrixCSR.from_scipy(a_mat)
    x_star = rng.standard_normal(n)
    b = a.to_scipy() @ x_star
    return a, b, x_star


@dataclass(frozen=True)
class GraphSpec:
    """Connected undirected graph on nodes 0..m-1.

    Edges are stored as (i, j) with i < j, sorted, no duplicates or
    self-loops. ``rates`` optionally assigns each node an activation
    rate for nonuniform sampling.
    """

    m: int
    edges: tuple[tuple[int, int], ...]
    rates: np.ndarray | None = None
    neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"need at least 2 nodes, got {self.m}")
        seen = set()
        canon = []
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ValueError(f"edge ({i},{j}) outside node range")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            canon.append(key)
        canon.sort()
        object.__setattr__(self, "edges", tuple(canon))

        if self.rates is not None:
            rates = np.asarray(self.rates, dtype=np.float64)
            if rates.shape != (self.m,) or np.any(rates <= 0):
                raise ValueError("rates must be m positive reals")
            object.__setattr__(self, "rates", rates)

        adj: list[list[int]] = [[] for _ in range(self.m)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        object.__setattr__(self, "neighbors", tuple(tuple(sorted(a)) for a in adj))

        if min(len(a) for a in adj) == 0:
            raise ValueError("graph has an isolated node")
        n_comp, _ = connected_components(self.adjacency(), directed=False)
        if n_comp != 1:
            raise ValueError(f"graph is disconnected ({n_comp} components)")

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> sp.csr_matrix:
        """0/1 adjacency matrix."""
        if not self.edges:
            return sp.csr_matrix((self.m, self.m))
        ii, jj = zip(*self.edges)
        ones = np.ones(len(self.edges))
        mat = sp.coo_matrix((ones, (ii, jj)), shape=(self.m, self.m))
        return (mat + mat.T).tocsr()


def gen_graph(kind: str, m: int, seed: int = 0, p: float = 0.3) -> GraphSpec:
    """Deterministic graph fixtures: path, star, ring, erdos_renyi.

    Erdős–Rényi draws are resampled (fresh substream per attempt, same
    seed) until connected, so the result is reproducible.
    """
    if m < 2:
        raise ValueError(f"need m >= 2, got {m}")
    if kind == "path":
        return GraphSpec(m, tuple((i, i + 1) for i in range(m - 1)))
    if kind == "star":
        return GraphSpec(m, tuple((0, i) for i in range(1, m)))
    if kind == "ring":
        if m == 2:
            return GraphSpec(2, ((0, 1),))
        return GraphSpec(m, tuple((i, (i + 1) % m) for i in range(m)))
    if kind == "erdos_renyi":
        if not 0.0 < p <= 1.0:
            raise ValueError(f"need edge probability in (0, 1], got {p}")
        for attempt in range(10_000):
            rng = np.random.default_rng([seed, attempt])
            edges = tuple(
                (i, j)
                for i in range(m)
                for j in range(i + 1, m)
                if rng.random() < p
            )
            try:
                return GraphSpec(m, edges)
            except ValueError:
                continue
        raise RuntimeError(f"no connected draw in 10000 attempts (m={m}, p={p})")
    raise ValueError(f"unknown graph kind {kind!r}")


def gen_logistic(
    num_samples: int,
    num_features: int,
    density: float = 0.1,
    seed: int = 0,
) -> LabeledDataset:
    """Sparse binary classification data for logistic-loss fixtures.

    Features are standard Gaussian on a Bernoulli(density) support; a
    sparse ground-truth weight vector plus light label noise produces
    linearly-separable-ish labels in {-1, +1}.
    """
    if num_samples < 1 or num_features < 1:
        raise ValueError("need positive sample and feature counts")
    if not 0.0 < density <= 1.0:
        raise ValueError(f"need density in (0, 1], got {density}")
    rng = np.random.default_rng(seed)

    mask = rng.random((num_samples, num_features)) < density
    # every sample keeps at least one feature so no row is empty
    empty = ~mask.any(axis=1)
    mask[empty, rng.integers(0, num_features, size=int(empty.sum()))] = True
    dense = np.where(mask, rng.standard_normal((num_samples, num_features)), 0.0)

    w_true = np.where(
        rng.random(num_features) < 0.3, rng.standard_normal(num_features), 0.0
    )
    margin = dense @ w_true + 0.1 * rng.standard_normal(num_samples)
    labels = np.where(margin >= 0.0, 1.0, -1.0)
    return LabeledDataset(samples=SparseMatrixCSR.from_dense(dense), labels=labels)


def gen_imbalanced_quadratic(
    n: int,
    heavy_block: int = 0,
    block_size: int = 8,
    weight: float = 50.0,
    seed: int = 0,
) -> tuple[SparseMatrixCSR, np.ndarray, np.ndarray]:
    """Diagonally dominant system where one block is far denser.

    The heavy block's rows carry ``weight`` times more off-diagonal
    entries than the rest, giving deliberately unbalanced per-block
    update costs for scheduling comparisons.
    """
    a, b, x_star = gen_diag_dominant(n, bandwidth=1, seed=seed)
    dense_a = a.to_dense()
    rng = np.random.default_rng([seed, 1])
    lo = heavy_block * block_size
    hi = min(lo + block_size, n)
    extra = int(min(weight, n - 1))
    for r in range(lo, hi):
        cols = rng.choice(n, size=extra, replace=False)
        for c in cols:
            if c != r:
                bump = 0.01 * rng.standard_normal()
                dense_a[r, c] += bump
                dense_a[c, r] += bump  # keep A symmetric for the norm bound
    off_sum = np.abs(dense_a).sum(axis=1) - np.abs(np.diag(dense_a))
    np.fill_diagonal(dense_a, 2.0 * off_sum.max())
    a2 = SparseMatrixCSR.from_dense(dense_a)
    b2 = a2.to_scipy() @ x_star
    return a2, b2, x_star
