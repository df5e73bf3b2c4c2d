"""LPV system data model: dynamics, jump map, parameter set, rate set.

A system is   xdot = A(p) x + B(p) u  between jumps and  x+ = J(p) x  at
jumps, with p constrained to a compact set described by box bounds plus
optional inequality generators g_i(p) >= 0 and equalities h_i(p) = 0.
The admissible parameter rate is either a per-parameter interval box or
an explicit list of vertices whose components may depend on p (used when
the parameter lives on a curved set such as the unit circle).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..polyalg import Polynomial, PolyMatrix, VarEnv

__all__ = ["RateBox", "RateVertices", "LpvSystem"]


@dataclass(frozen=True)
class RateBox:
    """Per-parameter derivative interval [lo_i, hi_i]."""

    bounds: tuple[tuple[float, float], ...]

    @classmethod
    def symmetric(cls, nus: Sequence[float]) -> "RateBox":
        return cls(tuple((-float(v), float(v)) for v in nus))


@dataclass(frozen=True)
class RateVertices:
    """Explicit rate vertices; each component is a polynomial in the parameters."""

    vertices: tuple[tuple[Polynomial, ...], ...]


class LpvSystem:
    """Jump-LPV dynamics plus parameter-set description."""

    def __init__(
        self,
        a: PolyMatrix,
        bounds: Sequence[tuple[float, float]],
        b: PolyMatrix | None = None,
        jump: PolyMatrix | None = None,
        ineq: Sequence[Polynomial] | None = None,
        eq: Sequence[Polynomial] = (),
        rate: RateBox | RateVertices | None = None,
        name: str = "",
        param_sampler: Callable[[int], np.ndarray] | None = None,
    ):
        self.env: VarEnv = a.env
        self.n = a.rows
        self.N = len(self.env.params)
        if a.rows != a.cols:
            raise ValueError("A must be square")
        if len(bounds) != self.N:
            raise ValueError(f"expected {self.N} parameter bounds, got {len(bounds)}")
        self.a = a
        self.b = b
        self.m = 0 if b is None else b.cols
        if b is not None and b.rows != self.n:
            raise ValueError("B must have the state dimension as row count")
        self.jump = jump if jump is not None else PolyMatrix.identity(self.env, self.n)
        if self.jump.shape != (self.n, self.n):
            raise ValueError("J must be square of the state dimension")
        self.bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        for lo, hi in self.bounds:
            if lo > hi:
                raise ValueError("parameter bounds must satisfy lo <= hi")
        self._ineq = None if ineq is None else list(ineq)
        self.eq = list(eq)
        for h in list(self._ineq or []) + self.eq:
            if h.degree() == 0:
                raise ValueError("set generators must be nonconstant polynomials")
        self.rate = rate
        self.name = name
        self.param_sampler = param_sampler

        # clock must not appear in the data matrices
        t = self.env.clock
        for mat in [self.a, self.jump] + ([self.b] if self.b is not None else []):
            for row in mat.entries:
                for p in row:
                    if p.degree_in(t) > 0:
                        raise ValueError("system matrices may depend on parameters only")

    # -- parameter-set description -------------------------------------------

    def generators(self) -> list[Polynomial]:
        """Inequality generators g_i >= 0; defaults to the box polynomials."""
        if self._ineq is not None:
            return list(self._ineq)
        out = []
        for var, (lo, hi) in zip(self.env.params, self.bounds):
            p = Polynomial.variable(self.env, var)
            out.append((p - lo) * (hi - p))
        return out

    def has_explicit_generators(self) -> bool:
        return self._ineq is not None

    def rate_vertices(self) -> list[tuple[Polynomial, ...]]:
        """Vertex list of the rate set, as polynomial vectors in the parameters."""
        if self.rate is None:
            raise ValueError("this analysis mode needs a parameter-rate set")
        if isinstance(self.rate, RateVertices):
            verts = [tuple(v) for v in self.rate.vertices]
        else:
            if len(self.rate.bounds) != self.N:
                raise ValueError("rate box arity does not match the parameter count")
            verts = [()]
            for lo, hi in self.rate.bounds:
                ends = [lo] if lo == hi else [lo, hi]
                verts = [v + (e,) for v in verts for e in ends]
            verts = [
                tuple(Polynomial.constant(self.env, c) for c in v) for v in verts
            ]
        # drop duplicates (e.g. a zero-rate box collapses to one vertex)
        seen = []
        for v in verts:
            if not any(all(a == b for a, b in zip(v, w)) for w in seen):
                seen.append(v)
        return seen

    # -- grids -----------------------------------------------------------------

    def param_grid(self, k: int) -> np.ndarray:
        """About k**min(N,2) points covering the parameter set, shape (P, N).

        Boxes are gridded directly.  A set carved by one equality in two
        parameters is sampled by locating sign changes of h on the box grid
        edges and bisecting each crossing onto the curve.
        """
        if self.param_sampler is not None:
            pts = np.asarray(self.param_sampler(k), dtype=float)
            if pts.ndim != 2 or pts.shape[1] != self.N:
                raise ValueError("param_sampler must return an array of shape (P, N)")
            return pts
        if self.N == 0:
            return np.zeros((1, 0))
        if not self.eq:
            axes = [np.linspace(lo, hi, k) for lo, hi in self.bounds]
            if self.N == 1:
                pts = axes[0][:, None]
            else:
                mesh = np.meshgrid(*axes, indexing="ij")
                pts = np.stack([m.ravel() for m in mesh], axis=1)
            return self._filter_ineq(pts)
        if self.N == 2 and len(self.eq) == 1:
            return self._filter_ineq(self._level_curve_points(self.eq[0], k))
        raise ValueError(
            "gridding a parameter set with equalities is only built in for "
            "two parameters and one equality; attach a param_sampler"
        )

    def _filter_ineq(self, pts: np.ndarray) -> np.ndarray:
        if not self.has_explicit_generators() or not self._ineq:
            return pts
        keep = np.ones(len(pts), dtype=bool)
        full = np.zeros((len(pts), self.env.nvars))
        for i, var in enumerate(self.env.params):
            full[:, var] = pts[:, i]
        for g in self._ineq:
            vals = PolyMatrix(self.env, [[g]]).eval_many(full)[:, 0, 0]
            keep &= vals >= -1e-9
        out = pts[keep]
        if len(out) == 0:
            raise ValueError("no grid points satisfy the inequality generators")
        return out

    def _level_curve_points(self, h: Polynomial, k: int) -> np.ndarray:
        (l1, u1), (l2, u2) = self.bounds
        res = max(4 * k, 80)
        xs = np.linspace(l1, u1, res)
        ys = np.linspace(l2, u2, res)
        p1, p2 = self.env.params

        def hval(x, y):
            pt = [0.0] * self.env.nvars
            pt[p1], pt[p2] = x, y
            return h.eval(pt)

        grid = np.zeros((res, res))
        full = np.zeros((res * res, self.env.nvars))
        mesh = np.meshgrid(xs, ys, indexing="ij")
        full[:, p1] = mesh[0].ravel()
        full[:, p2] = mesh[1].ravel()
        grid = PolyMatrix(self.env, [[h]]).eval_many(full)[:, 0, 0].reshape(res, res)

        pts: list[tuple[float, float]] = []

        def bisect(x0, y0, x1, y1, f0, f1):
            for _ in range(60):
                xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
                fm = hval(xm, ym)
                if fm == 0.0:
                    return xm, ym
                if (f0 < 0) != (fm < 0):
                    x1, y1, f1 = xm, ym, fm
                else:
                    x0, y0, f0 = xm, ym, fm
            return 0.5 * (x0 + x1), 0.5 * (y0 + y1)

        for i in range(res):
            for j in range(res):
                f0 = grid[i, j]
                if f0 == 0.0:
                    pts.append((xs[i], ys[j]))
                    continue
                if i + 1 < res:
                    f1 = grid[i + 1, j]
                    if (f0 < 0) != (f1 < 0):
                        pts.append(bisect(xs[i], ys[j], xs[i + 1], ys[j], f0, f1))
                if j + 1 < res:
                    f1 = grid[i, j + 1]
                    if (f0 < 0) != (f1 < 0):
                        pts.append(bisect(xs[i], ys[j], xs[i], ys[j + 1], f0, f1))
        if not pts:
            raise ValueError("could not locate the equality level set inside the box")
        arr = np.array(sorted(set(pts)))
        if len(arr) > k:
            idx = np.linspace(0, len(arr) - 1, k).round().astype(int)
            arr = arr[idx]
        return arr

    def full_points(
        self,
        theta: np.ndarray,
        tau: float | np.ndarray | None = None,
        eta: np.ndarray | None = None,
    ) -> np.ndarray:
        """Assemble (P, nvars) evaluation points from parameter samples."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        pts = np.zeros((len(theta), self.env.nvars))
        for i, var in enumerate(self.env.params):
            pts[:, var] = theta[:, i]
        if tau is not None:
            pts[:, self.env.clock] = tau
        if eta is not None:
            eta = np.atleast_2d(np.asarray(eta, dtype=float))
            for i, var in enumerate(self.env.copies):
                pts[:, var] = eta[:, i]
        return pts
