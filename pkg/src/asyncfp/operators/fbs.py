"""Forward-backward displacements for l1-regularized minimization.

The map is T(x) = prox_{gamma*f}(x - gamma*grad g(x)) with f = lam*||.||_1,
so each block of S(x) = x - T(x) is a soft-thresholded gradient step on
that block alone. T is nonexpansive for gamma in (0, 2/L) with L the
smoothness constant of g.

The logistic variant keeps the product Ax as a shared cache: a block
update of x costs one sparse column-block multiply to refresh it, and
gradient evaluations never touch A row by row.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..blocks import BlockLayout, partition_blocks
from ..core import ProblemOperator, StateView
from ..data.sparse import LabeledDataset, SparseMatrixCSR
from ..theory import spectral_norm
from .local import soft_threshold


class FbsL1LogisticOp(ProblemOperator):
    """l1-regularized logistic regression via forward-backward splitting.

    Objective: (1/N) sum_j log(1 + exp(-b_j a_j'x)) + lam * ||x||_1.

    The smoothness constant defaults to ||A||_2^2 / (4N) with the norm
    estimated by 50 power iterations; gamma defaults to 1.9 / L and must
    land in (0, 2/L).
    """

    cache_names = ("Ax",)

    def __init__(
        self,
        dataset: LabeledDataset,
        lam: float,
        gamma: float | None = None,
        layout: BlockLayout | None = None,
    ):
        if lam < 0:
            raise ValueError(f"need lam >= 0, got {lam}")
        self.lam = float(lam)
        self.labels = dataset.labels
        self.num_samples = dataset.num_samples
        n = dataset.num_features
        self.layout = layout if layout is not None else partition_blocks(n, 50)
        if self.layout.dim != n:
            raise ValueError("layout does not cover the feature count")

        self._csr = dataset.samples.to_scipy()
        csc = self._csr.tocsc()
        # per-block column submatrices, sliced once: the hot path does a
        # small sparse multiply per step and must not re-slice each call
        self._col_blocks = [
            csc[:, self.layout.slice_of(i)] for i in range(self.layout.m)
        ]
        norm_est = spectral_norm(self._csr, tol=0.0, max_iter=50)
        self.L = norm_est * norm_est / (4.0 * self.num_samples)
        self.gamma = 1.9 / self.L if gamma is None else float(gamma)
        if not 0.0 < self.gamma < 2.0 / self.L:
            raise ValueError(
                f"gamma must lie in (0, 2/L) = (0, {2.0 / self.L:.6g}), "
                f"got {self.gamma}"
            )

    def init_caches(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {"Ax": self._csr @ x}

    def cache_deltas(self, i, view, x_delta) -> dict[str, np.ndarray]:
        return {"Ax": self._col_blocks[i] @ x_delta}

    def _grad_block(self, i: int, theta: np.ndarray) -> np.ndarray:
        """Block of grad g at the point with margins theta = A x."""
        weights = self.labels * expit(-self.labels * theta)
        return -(self._col_blocks[i].T @ weights) / self.num_samples

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        sl = self.layout.slice_of(i)
        x_i = view.vector()[sl]
        grad_i = self._grad_block(i, view.cache("Ax"))
        return x_i - soft_threshold(x_i - self.gamma * grad_i, self.gamma * self.lam)

    def objective(self, view: StateView) -> float:
        theta = view.cache("Ax")
        loss = float(np.logaddexp(0.0, -self.labels * theta).sum()) / self.num_samples
        return loss + self.lam * float(np.abs(view.vector()).sum())


class FbsL1QuadraticOp(ProblemOperator):
    """Forward-backward for 0.5 x'Qx - b'x + lam*||x||_1, Q positive definite.

    Strong convexity of the smooth part makes T a quasi-contraction
    toward the unique minimizer; curvature bounds mu and L are taken
    from the spectrum of Q at construction.
    """

    def __init__(
        self,
        q: SparseMatrixCSR,
        b: np.ndarray,
        lam: float,
        gamma: float,
        layout: BlockLayout | None = None,
    ):
        if q.rows != q.cols:
            raise ValueError(f"Q must be square, got {q.shape}")
        self.q = q
        self.b = np.asarray(b, dtype=np.float64)
        if lam < 0:
            raise ValueError(f"need lam >= 0, got {lam}")
        self.lam = float(lam)
        self.layout = layout if layout is not None else BlockLayout.scalar(q.rows)
        if self.layout.dim != q.rows:
            raise ValueError("layout does not cover the problem dimension")

        eigs = np.linalg.eigvalsh(q.to_dense())
        self.mu = float(eigs.min())
        self.L = float(eigs.max())
        if self.mu <= 0:
            raise ValueError(f"Q must be positive definite (min eig {self.mu})")
        self.gamma = float(gamma)
        if not 0.0 < self.gamma < 2.0 / self.L:
            raise ValueError(
                f"gamma must lie in (0, 2/L) = (0, {2.0 / self.L:.6g}), got {gamma}"
            )
        self._rows = [q.row(r) for r in range(q.rows)]

    def _grad_rows(self, x: np.ndarray, start: int, stop: int) -> np.ndarray:
        out = np.empty(stop - start)
        for k, r in enumerate(range(start, stop)):
            cols, vals = self._rows[r]
            out[k] = vals @ x[cols] - self.b[r]
        return out

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        sl = self.layout.slice_of(i)
        x_i = view.vector()[sl]
        grad_i = self._grad_rows(view.vector(), sl.start, sl.stop)
        return x_i - soft_threshold(x_i - self.gamma * grad_i, self.gamma * self.lam)

    def apply_t(self, x: np.ndarray) -> np.ndarray:
        """Full map T(x) = prox(x - gamma * grad g(x)) in one shot."""
        grad = self.q.to_scipy() @ x - self.b
        return soft_threshold(x - self.gamma * grad, self.gamma * self.lam)

    def objective(self, view: StateView) -> float:
        x = view.vector()
        smooth = 0.5 * float(x @ (self.q.to_scipy() @ x)) - float(self.b @ x)
        return smooth + self.lam * float(np.abs(x).sum())

    def solve(self, tol: float = 1e-14, max_iter: int = 100_000) -> np.ndarray:
        """Serial proximal-gradient oracle run to stagnation."""
        x = np.zeros(self.q.rows)
        for _ in range(max_iter):
            x_next = self.apply_t(x)
            if np.linalg.norm(x_next - x) <= tol * (1.0 + np.linalg.norm(x)):
                return x_next
            x = x_next
        return x
