"""Block Jacobi displacement for linear systems A x = b.

With A = D + R (diagonal and remainder), the Jacobi map is
T(x) = D^{-1}(b - Rx); its displacement works out per coordinate to

    (S x)_i = (1/a_ii) ((A x)_i - b_i)

so a block evaluation touches only the matrix rows it owns. T is
nonexpansive when ||M||_2 <= 1 for M = -D^{-1}R, and contracts when the
norm is strictly below one.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp

from ..blocks import BlockLayout
from ..core import ProblemOperator, StateView
from ..data.sparse import SparseMatrixCSR
from ..theory import spectral_norm


class JacobiOp(ProblemOperator):
    """Jacobi fixed-point operator for a square system with nonzero diagonal.

    Parameters
    ----------
    a : SparseMatrixCSR
        Square system matrix; every diagonal entry must be nonzero.
    b : array
        Right-hand side.
    layout : BlockLayout, optional
        Defaults to one scalar coordinate per block.

    Attributes
    ----------
    iter_matrix_norm : float
        Power-method estimate of ||D^{-1} R||_2, computed at
        construction. A value above 1 only warns: the estimate is
        approximate and the operator stays usable for divergence
        studies.
    """

    def __init__(self, a: SparseMatrixCSR, b: np.ndarray, layout: BlockLayout | None = None):
        if a.rows != a.cols:
            raise ValueError(f"A must be square, got {a.shape}")
        self.a = a
        self.b = np.asarray(b, dtype=np.float64)
        if self.b.shape != (a.rows,):
            raise ValueError(f"rhs has shape {self.b.shape}, expected ({a.rows},)")
        self.layout = layout if layout is not None else BlockLayout.scalar(a.rows)
        if self.layout.dim != a.rows:
            raise ValueError("layout does not cover the system dimension")

        csr = a.to_scipy()
        diag = csr.diagonal()
        if np.any(diag == 0.0):
            raise ValueError("Jacobi needs a nonzero diagonal")
        self.diag = diag
        self._csr = csr

        remainder = csr - sp.diags(diag)
        iter_mat = sp.diags(1.0 / diag) @ remainder
        self.iter_matrix_norm = spectral_norm(iter_mat)
        if self.iter_matrix_norm > 1.0:
            warnings.warn(
                f"estimated ||D^-1 R||_2 = {self.iter_matrix_norm:.4f} > 1; "
                "the Jacobi map may be expansive",
                stacklevel=2,
            )
        # zero-copy per-row index/value views for the block hot path
        self._rows = [a.row(r) for r in range(a.rows)]

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        sl = self.layout.slice_of(i)
        x = view.vector()
        out = np.empty(sl.stop - sl.start)
        for k, r in enumerate(range(sl.start, sl.stop)):
            cols, vals = self._rows[r]
            out[k] = (vals @ x[cols] - self.b[r]) / self.diag[r]
        return out

    def s_full(self, view: StateView) -> np.ndarray:
        x = view.vector()
        return (self._csr @ x - self.b) / self.diag

    def objective(self, view: StateView) -> float:
        """Linear residual ||A x - b||_2 (not the scaled fixed-point one)."""
        return float(np.linalg.norm(self._csr @ view.vector() - self.b))

    def solve(self) -> np.ndarray:
        """Direct solution, the oracle the iterative runs are checked against."""
        import scipy.sparse.linalg as spla

        return spla.spsolve(self._csr.tocsc(), self.b)
