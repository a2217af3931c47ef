"""Local convex pieces and their shifted proximal minimizations.

Every splitting subproblem in this package reduces to

    argmin_x  f(x) - <w, x> + (rho/2) ||x||^2          (rho > 0)

which is prox_{f/rho}(w/rho). Each :class:`LocalFunction` knows its own
closed form where one exists; smooth pieces without one fall back to a
damped Newton micro-solver with residual tolerance 1e-10.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Elementwise shrinkage sign(v) * max(|v| - t, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


class LocalFunction:
    """A convex function f with value and shifted-prox evaluations."""

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def solve_shifted(self, w: np.ndarray, rho: float) -> np.ndarray:
        """argmin_x f(x) - <w, x> + (rho/2)||x||^2."""
        raise NotImplementedError


class ZeroFn(LocalFunction):
    """f = 0; the shifted minimizer is w / rho."""

    def value(self, x):
        return 0.0

    def solve_shifted(self, w, rho):
        return w / rho


class IsoQuadratic(LocalFunction):
    """f(x) = (a/2) ||x - center||^2 with a > 0."""

    def __init__(self, a: float, center: np.ndarray):
        if a <= 0:
            raise ValueError(f"need curvature a > 0, got {a}")
        self.a = float(a)
        self.center = np.asarray(center, dtype=np.float64)

    def value(self, x):
        d = x - self.center
        return 0.5 * self.a * float(d @ d)

    def solve_shifted(self, w, rho):
        return (self.a * self.center + w) / (self.a + rho)


class QuadraticForm(LocalFunction):
    """f(x) = 0.5 x'Px - q'x for symmetric positive semidefinite P."""

    def __init__(self, p_mat: np.ndarray, q: np.ndarray):
        self.p_mat = np.asarray(p_mat, dtype=np.float64)
        self.q = np.asarray(q, dtype=np.float64)
        if self.p_mat.shape != (self.q.size, self.q.size):
            raise ValueError("P must be square and match q")
        if not np.allclose(self.p_mat, self.p_mat.T):
            raise ValueError("P must be symmetric")

    def value(self, x):
        return 0.5 * float(x @ self.p_mat @ x) - float(self.q @ x)

    def solve_shifted(self, w, rho):
        n = self.q.size
        return np.linalg.solve(self.p_mat + rho * np.eye(n), self.q + w)


class L1Norm(LocalFunction):
    """f(x) = lam * ||x||_1; shifted minimizer is a soft threshold."""

    def __init__(self, lam: float):
        if lam < 0:
            raise ValueError(f"need lam >= 0, got {lam}")
        self.lam = float(lam)

    def value(self, x):
        return self.lam * float(np.abs(x).sum())

    def solve_shifted(self, w, rho):
        return soft_threshold(w / rho, self.lam / rho)


class BoxIndicator(LocalFunction):
    """Indicator of the box [lo, hi]; shifted minimizer clips w / rho."""

    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi
        if np.any(np.asarray(lo) > np.asarray(hi)):
            raise ValueError("box is empty (lo > hi)")

    def value(self, x):
        inside = np.all(x >= np.asarray(self.lo) - 1e-12) and np.all(
            x <= np.asarray(self.hi) + 1e-12
        )
        return 0.0 if inside else float("inf")

    def solve_shifted(self, w, rho):
        return np.clip(w / rho, self.lo, self.hi)


class SmoothFn(LocalFunction):
    """Smooth convex f given by callables, solved by damped Newton.

    ``grad`` is required; ``hess`` defaults to a forward-difference
    approximation of ``grad`` (fine for the small local dimensions these
    subproblems have). The stationarity residual is driven below
    1e-10 * (1 + ||w||); failure to converge raises with the residual.
    """

    def __init__(
        self,
        dim: int,
        value_fn: Callable[[np.ndarray], float],
        grad_fn: Callable[[np.ndarray], np.ndarray],
        hess_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        self.dim = int(dim)
        self._value = value_fn
        self._grad = grad_fn
        self._hess = hess_fn

    def value(self, x):
        return float(self._value(x))

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        if self._hess is not None:
            return np.asarray(self._hess(x), dtype=np.float64)
        eps = 1e-7
        base = self._grad(x)
        cols = []
        for j in range(self.dim):
            step = x.copy()
            step[j] += eps
            cols.append((self._grad(step) - base) / eps)
        h = np.column_stack(cols)
        return 0.5 * (h + h.T)

    def solve_shifted(self, w, rho):
        w = np.asarray(w, dtype=np.float64)
        tol = 1e-10 * (1.0 + float(np.linalg.norm(w)))
        x = w / rho  # the f = 0 solution as a warm start
        residual = self._grad(x) - w + rho * x
        for _ in range(200):
            r_norm = float(np.linalg.norm(residual))
            if r_norm <= tol:
                return x
            jac = self._hessian(x) + rho * np.eye(self.dim)
            dx = np.linalg.solve(jac, -residual)
            t = 1.0
            while t > 1e-10:
                cand = x + t * dx
                cand_res = self._grad(cand) - w + rho * cand
                if float(np.linalg.norm(cand_res)) <= (1.0 - 0.5 * t) * r_norm:
                    x, residual = cand, cand_res
                    break
                t *= 0.5
            else:
                break
        r_norm = float(np.linalg.norm(residual))
        if r_norm <= tol:
            return x
        raise RuntimeError(
            f"shifted-prox Newton stalled at residual {r_norm:.3e} (tol {tol:.3e})"
        )
