"""Peaceman-Rachford splitting specialized to set-intersection feasibility.

Find x in the intersection of closed convex sets C_1..C_m. Each set gets
its own copy z_i of the variable; with zbar the running mean of the
copies, activating set i performs

    y_i = Proj_{C_i}(2*zbar - z_i)
    z_i += 2*eta*(y_i - zbar)

so the displacement is S_i(z) = -2*(y_i - zbar). The mean is maintained
incrementally (delta/m per update) rather than recomputed. At a fixed
point all copies agree and zbar lies in every set; the solution is read
off as zbar.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..blocks import BlockLayout
from ..core import ProblemOperator, StateView


class HalfspaceProj:
    """Projection onto {x : a'x <= b}."""

    def __init__(self, a: np.ndarray, b: float):
        self.a = np.asarray(a, dtype=np.float64)
        norm_sq = float(self.a @ self.a)
        if norm_sq == 0.0:
            raise ValueError("halfspace normal must be nonzero")
        self._norm_sq = norm_sq
        self.b = float(b)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        excess = float(self.a @ v) - self.b
        if excess <= 0.0:
            return v.copy()
        return v - (excess / self._norm_sq) * self.a

    def violation(self, v: np.ndarray) -> float:
        return max(0.0, float(self.a @ v) - self.b)


class BoxProj:
    """Projection onto the box [lo, hi]."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if np.any(self.lo > self.hi):
            raise ValueError("box is empty (lo > hi)")

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lo, self.hi)

    def violation(self, v: np.ndarray) -> float:
        return float(
            np.maximum(0.0, np.maximum(self.lo - v, v - self.hi)).max()
        )


class PrsFeasibilityOp(ProblemOperator):
    """Parallel projection splitting over m convex sets of dimension d.

    State is the stacked copies z in R^{m*d}; the cache "zbar" holds
    their mean. Projectors are callables v -> Proj(v); those that also
    expose ``violation(v)`` feed :meth:`max_violation`.
    """

    cache_names = ("zbar",)

    def __init__(self, projectors: Sequence[Callable[[np.ndarray], np.ndarray]], dim: int):
        if len(projectors) < 1:
            raise ValueError("need at least one set")
        self.projectors = tuple(projectors)
        self.dim = int(dim)
        self.layout = BlockLayout(sizes=(self.dim,) * len(projectors))

    @property
    def num_sets(self) -> int:
        return len(self.projectors)

    def init_caches(self, z: np.ndarray) -> dict[str, np.ndarray]:
        stacked = z.reshape(self.num_sets, self.dim)
        return {"zbar": stacked.mean(axis=0)}

    def cache_deltas(self, i, view, z_delta) -> dict[str, np.ndarray]:
        return {"zbar": z_delta / self.num_sets}

    def s_block(self, i: int, view: StateView) -> np.ndarray:
        z_i = view.vector()[self.layout.slice_of(i)]
        zbar = view.cache("zbar")
        y_i = self.projectors[i](2.0 * zbar - z_i)
        return -2.0 * (y_i - zbar)

    def recover(self, view: StateView) -> np.ndarray:
        """Feasibility candidate: the (cached) mean of the copies."""
        return view.cache("zbar").copy()

    def max_violation(self, x: np.ndarray) -> float:
        """Worst constraint violation of x across all sets."""
        worst = 0.0
        for proj in self.projectors:
            if hasattr(proj, "violation"):
                worst = max(worst, proj.violation(x))
            else:
                worst = max(worst, float(np.linalg.norm(x - proj(x))))
        return worst

    def objective(self, view: StateView) -> float:
        return self.max_violation(self.recover(view))
