"""Dense primal-dual interior-point solver for block SDPs.

The solver handles   max <C, X> + q.z  s.t.  A(X) + F z = b, X >= 0 blocks,
z free.  Feasibility problems (no objective) are solved in margin mode:
every block is substituted X_b = Xhat_b + lambda*I with Xhat_b >= 0 and
lambda (free, capped) is maximized; the sign of lambda* decides
feasibility robustly because the shifted problem always has interior
points.

Search direction: Nesterov-Todd scaling with a Mehrotra
predictor-corrector.  The Schur complement is formed densely per block
(two large GEMMs plus a sparse product) and factorized by Cholesky with a
diagonal-perturbation fallback; free variables are folded in through a
small secondary Schur complement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .presolve import PresolvedSdp, StructuralInfeasibility, presolve
from .problem import SdpObjective, SdpProblem, SdpRow, SdpSolution

__all__ = ["SolveOptions", "solve"]

_CHUNK_DOUBLES = 4_000_000  # working-set size for the batched W*A*W products


@dataclass
class SolveOptions:
    tol: float = 1e-8
    max_iter: int = 200
    margin_threshold: float = 1e-7
    margin_cap: float = 1.0
    step_frac: float = 0.98
    do_presolve: bool = True
    verbose: bool = False


def solve(problem: SdpProblem, opts: SolveOptions | None = None, **kw) -> SdpSolution:
    """Solve an SDP; feasibility problems run in margin-maximization mode."""
    if opts is None:
        opts = SolveOptions(**kw)
    elif kw:
        raise TypeError("pass either opts or keyword options, not both")

    feasibility = problem.objective is None
    work = _margin_form(problem, opts.margin_cap) if feasibility else problem

    lam_id = problem.n_free if feasibility else None
    exclude = {lam_id} if feasibility else set()
    try:
        pre = presolve(work, exclude=exclude, eliminate=opts.do_presolve)
    except StructuralInfeasibility as exc:
        return SdpSolution(
            status="infeasible",
            margin=None,
            obj_value=None,
            blocks=[np.zeros((d, d)) for d in problem.block_dims],
            free=np.zeros(problem.n_free),
            y=np.zeros(problem.n_rows),
            dual_blocks=[np.zeros((d, d)) for d in problem.block_dims],
            residuals={},
            iterations=0,
            message=str(exc),
        )

    ipm = _Ipm(pre.problem, opts, feasibility=feasibility)
    ipm.run()

    qfree_work = np.zeros(work.n_free)
    if work.objective is not None:
        for k, v in work.objective.free.items():
            qfree_work[k] = v
    free_full = pre.recover_free(ipm.z, ipm.X)
    y_full = pre.recover_duals(ipm.y_unscaled(), qfree_work)

    n_orig_blocks = len(problem.block_dims)
    if feasibility:
        margin = float(free_full[lam_id])
        blocks = [ipm.X[b] + margin * np.eye(problem.block_dims[b]) for b in range(n_orig_blocks)]
        free = free_full[: problem.n_free]
        y = y_full[: problem.n_rows]
        # classify against the larger of the configured threshold and what
        # the achieved residuals can actually resolve
        res = ipm.final_residuals
        achieved = max(res.get("primal", 0.0), res.get("dual", 0.0), res.get("free_dual", 0.0))
        thr = max(opts.margin_threshold, 50.0 * achieved * (1.0 + abs(margin)))
        if not ipm.converged:
            status = "numerical-failure"
        elif margin > thr:
            status = "feasible"
        elif margin < -thr:
            status = "infeasible"
        else:
            status = "marginal"
        obj_value = margin
    else:
        margin = None
        blocks = [ipm.X[b] for b in range(n_orig_blocks)]
        free = free_full
        y = y_full
        status = "feasible" if ipm.converged else "numerical-failure"
        obj_value = ipm.pobj + (problem.objective.offset if problem.objective else 0.0)

    return SdpSolution(
        status=status,
        margin=margin,
        obj_value=float(obj_value),
        blocks=blocks,
        free=free,
        y=y,
        dual_blocks=[ipm.S[b] for b in range(n_orig_blocks)],
        residuals=ipm.final_residuals,
        iterations=ipm.iterations,
        trace=ipm.trace,
        message=ipm.message,
    )


def _margin_form(problem: SdpProblem, cap: float) -> SdpProblem:
    """Shift every block by a common free margin variable lambda.

    Two slack rows keep the optimal set compact: lambda itself is capped
    (homogeneous feasible programs would otherwise push it to infinity)
    and the total trace of the shifted blocks is bounded (the optimal
    face would otherwise be an unbounded ray along the scaling of the
    solution).  Neither affects the sign of the optimal margin.
    """
    lam = problem.n_free
    rows = []
    for r in problem.rows:
        free = dict(r.free)
        t = r.trace_coefficient()
        if t != 0.0:
            free[lam] = free.get(lam, 0.0) + t
        rows.append(SdpRow({b: list(t2) for b, t2 in r.blocks.items()}, free, r.rhs))
    cap_block = len(problem.block_dims)
    trace_block = cap_block + 1
    rows.append(SdpRow({cap_block: [(0, 0, 1.0)]}, {lam: 1.0}, cap))
    total_dim = sum(problem.block_dims)
    trace_row_blocks: dict[int, list[tuple[int, int, float]]] = {
        b: [(i, i, 1.0) for i in range(d)] for b, d in enumerate(problem.block_dims)
    }
    trace_row_blocks[trace_block] = [(0, 0, 1.0)]
    rows.append(SdpRow(trace_row_blocks, {}, 10.0 * max(total_dim, 1)))
    return SdpProblem(
        list(problem.block_dims) + [1, 1],
        problem.n_free + 1,
        rows,
        SdpObjective({}, {lam: 1.0}, 0.0),
    )


class _Ipm:
    """One-shot interior-point run on a (reduced) problem."""

    def __init__(self, problem: SdpProblem, opts: SolveOptions, feasibility: bool = False):
        self.opts = opts
        self.feasibility = feasibility
        self.dims = list(problem.block_dims)
        self.m = problem.n_rows
        self.f = problem.n_free
        self.trace: list[dict] = []
        self.converged = False
        self.message = ""
        self.iterations = 0
        self.final_residuals: dict = {}
        self.best = None
        self.best_score = np.inf
        self.last_score = np.inf

        # assemble internal arrays (rows renormalized once more, fill-in aware)
        self.row_scale = np.ones(self.m)
        dense_rows: list[dict] = []
        for k, r in enumerate(problem.rows):
            norm = r.inf_norm()
            if norm > 0:
                self.row_scale[k] = 1.0 / norm
        self.b = np.array([r.rhs * self.row_scale[k] for k, r in enumerate(problem.rows)])

        self.K: list[sp.csr_matrix] = []
        for bidx, dim in enumerate(self.dims):
            data, ri, ci = [], [], []
            for k, r in enumerate(problem.rows):
                trip = r.blocks.get(bidx)
                if not trip:
                    continue
                s = self.row_scale[k]
                for i, j, v in trip:
                    ri.append(k)
                    ci.append(i * dim + j)
                    data.append(v * s)
                    if i != j:
                        ri.append(k)
                        ci.append(j * dim + i)
                        data.append(v * s)
            self.K.append(
                sp.csr_matrix(
                    (np.array(data), (np.array(ri, dtype=np.int64), np.array(ci, dtype=np.int64))),
                    shape=(self.m, dim * dim),
                )
            )
        # row-major reshape (m*d, d) per block, kept sparse for the GEMM path
        self.K_rs = [
            K.reshape(self.m * d, d).tocsr() if K.nnz else None
            for K, d in zip(self.K, self.dims)
        ]

        self.F = np.zeros((self.m, self.f))
        for k, r in enumerate(problem.rows):
            for u, v in r.free.items():
                self.F[k, u] = v * self.row_scale[k]

        # the loop below minimizes; user objectives maximize, so negate here
        self.C = [np.zeros((d, d)) for d in self.dims]
        self.q = np.zeros(self.f)
        if problem.objective is not None:
            for bidx, trip in problem.objective.blocks.items():
                for i, j, v in trip:
                    self.C[bidx][i, j] -= v
                    if i != j:
                        self.C[bidx][j, i] -= v
            for u, v in problem.objective.free.items():
                self.q[u] = -v
        self.norm_b = float(np.linalg.norm(self.b))
        self.row_denom = 1.0 + np.abs(self.b)
        self.norm_c = float(np.sqrt(sum(np.linalg.norm(c) ** 2 for c in self.C)))
        self.norm_q = float(np.linalg.norm(self.q))

        self.sum_dim = sum(self.dims)
        self.pobj = 0.0
        self.dobj = 0.0

    # -- operators -----------------------------------------------------------

    def a_of(self, X: list[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.m)
        for K, x in zip(self.K, X):
            out += K @ x.ravel()
        return out

    def at_of(self, y: np.ndarray) -> list[np.ndarray]:
        out = []
        for K, d in zip(self.K, self.dims):
            m = (K.T @ y).reshape(d, d)
            out.append(0.5 * (m + m.T))
        return out

    # -- main loop -------------------------------------------------------------

    def run(self):
        old = np.seterr(over="ignore", invalid="ignore")
        try:
            self._run()
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            if not self.message:
                self.message = f"linear algebra failure: {exc}"
        finally:
            np.seterr(**old)
        b = self.best
        if b is not None and self.best_score < self.last_score:
            self.X, self.S, self.y, self.z = b["X"], b["S"], b["y"], b["z"]
            self.final_residuals = b["res"]
            self.pobj, self.dobj = b["pobj"], b["dobj"]
        if not self.converged and self.feasibility and b is not None:
            # judge the best iterate by the same reduced-tolerance rule
            res = b["res"]
            worst = max(res.get("primal", 1.0), res.get("dual", 1.0), res.get("free_dual", 1.0))
            if (
                b["drift"] <= 1e-5 * (1.0 + abs(b["pobj"]))
                and worst <= 1e-4
                and b["mu"] <= 1e-9 * (1.0 + abs(b["pobj"]))
            ):
                self.converged = True
                self.message = "converged at reduced tolerance (degenerate optimum)"

    def _run(self):
        opts = self.opts
        if self.m == 0:
            self.X = [np.eye(d) for d in self.dims]
            self.S = [np.zeros((d, d)) for d in self.dims]
            self.y = np.zeros(0)
            self.z = np.zeros(self.f)
            self.converged = True
            self.final_residuals = {"primal": 0.0, "dual": 0.0, "gap": 0.0}
            return

        scale_p = max(10.0, float(np.max(1.0 + np.abs(self.b))))
        scale_d = max(10.0, float(np.sqrt(max(self.dims))), self.norm_c)
        self.X = [scale_p * np.eye(d) for d in self.dims]
        self.S = [scale_d * np.eye(d) for d in self.dims]
        self.y = np.zeros(self.m)
        self.z = np.zeros(self.f)

        slow_steps = 0
        for it in range(opts.max_iter):
            self.iterations = it + 1
            big = max(max(float(np.max(np.abs(x))) for x in self.X),
                      max(float(np.max(np.abs(s))) for s in self.S))
            if not np.isfinite(big) or big > 1e12:
                self.message = "iterates diverged"
                return
            rp = self.b - self.a_of(self.X) - self.F @ self.z
            aty = self.at_of(self.y)
            rd = [c - s - a for c, s, a in zip(self.C, self.S, aty)]
            rq = self.q - self.F.T @ self.y
            gap = sum(float(np.tensordot(x, s)) for x, s in zip(self.X, self.S))
            mu = gap / self.sum_dim
            pobj_min = sum(
                float(np.tensordot(c, x)) for c, x in zip(self.C, self.X)
            ) + float(self.q @ self.z)
            dobj_min = float(self.b @ self.y)
            # user convention maximizes: flip back for reporting
            self.pobj = -pobj_min
            self.dobj = -dobj_min

            # per-row relative residual: slack rows with large rhs must not
            # loosen the coefficient-matching rows
            relp = float(np.max(np.abs(rp) / self.row_denom)) if self.m else 0.0
            reld = float(np.sqrt(sum(np.linalg.norm(r) ** 2 for r in rd))) / (1.0 + self.norm_c)
            relq = float(np.linalg.norm(rq)) / (1.0 + self.norm_q)
            relgap = abs(self.pobj - self.dobj) / (1.0 + abs(self.pobj) + abs(self.dobj))
            self.trace.append(
                {
                    "iter": it,
                    "mu": mu,
                    "gap": gap,
                    "pobj": self.pobj,
                    "dobj": self.dobj,
                    "relp": relp,
                    "reld": reld,
                    "relq": relq,
                    "relgap": relgap,
                }
            )
            if opts.verbose:
                print(
                    f"  it {it:3d}  mu {mu:9.2e}  rp {relp:8.1e}  rd {reld:8.1e}"
                    f"  gap {relgap:8.1e}  pobj {self.pobj: .6e}"
                )
            self.final_residuals = {
                "primal": relp,
                "dual": reld,
                "free_dual": relq,
                "relgap": relgap,
                "gap": gap,
            }
            self.last_score = max(relp, reld, relq, min(relgap, mu / (1.0 + abs(self.pobj))))
            if self.last_score < self.best_score:
                self.best_score = self.last_score
                lam_prev = self.trace[-2]["pobj"] if len(self.trace) >= 2 else np.inf
                self.best = {
                    "X": [x.copy() for x in self.X],
                    "S": [s.copy() for s in self.S],
                    "y": self.y.copy(),
                    "z": self.z.copy(),
                    "res": dict(self.final_residuals),
                    "pobj": self.pobj,
                    "dobj": self.dobj,
                    "mu": mu,
                    "drift": abs(self.pobj - lam_prev),
                }
            gap_ok = relgap <= opts.tol
            if self.feasibility and not gap_ok:
                # margin endgame: the gap floor tracks |rp|*|y|; accept once
                # complementarity is essentially exact
                gap_ok = mu <= 1e-2 * opts.tol * (1.0 + abs(self.pobj))
            if max(relp, reld, relq) <= opts.tol and gap_ok:
                self.converged = True
                return
            if self.feasibility and it >= 6:
                # degenerate optima can floor the feasibility residuals above
                # tol while the margin itself is fully resolved; accept once
                # the margin estimate is stable and complementarity is exact.
                # the caller widens its decision threshold with the achieved
                # residuals, so this cannot upgrade a blurry sign decision.
                lam_prev = self.trace[-2]["pobj"] if len(self.trace) >= 2 else np.inf
                stable = abs(self.pobj - lam_prev) <= 1e-5 * (1.0 + abs(self.pobj))
                if (
                    stable
                    and max(relp, reld, relq) <= 1e-4
                    and mu <= 1e-9 * (1.0 + abs(self.pobj))
                ):
                    self.converged = True
                    self.message = "converged at reduced tolerance (degenerate optimum)"
                    return

            # NT scaling per block
            try:
                scal = [self._nt(self.X[b], self.S[b]) for b in range(len(self.dims))]
            except np.linalg.LinAlgError:
                self.message = "NT scaling failed (iterate left the cone)"
                return
            W = [g @ g.T for g, _, _ in scal]

            M = self._schur(W)
            factor = self._factor(M)
            if factor is None:
                self.message = "Schur complement factorization failed"
                return

            wrdw = [w @ r @ w for w, r in zip(W, rd)]

            # predictor
            rhs1 = rp - self.a_of([-x - wr for x, wr in zip(self.X, wrdw)])
            dy_a, dz_a = self._solve_kkt(factor, rhs1, rq)
            ds_a = [r - a for r, a in zip(rd, self.at_of(dy_a))]
            dx_a = [-x - w @ ds @ w for x, w, ds in zip(self.X, W, ds_a)]
            dx_a = [0.5 * (d + d.T) for d in dx_a]
            ap = self._max_step(self.X, dx_a)
            ad = self._max_step(self.S, ds_a)
            gap_aff = sum(
                float(np.tensordot(x + ap * dx, s + ad * ds))
                for x, dx, s, ds in zip(self.X, dx_a, self.S, ds_a)
            )
            mu_aff = max(gap_aff, 0.0) / self.sum_dim
            sigma = min(1.0, max((mu_aff / mu) ** 3, 1e-10)) if mu > 0 else 0.1

            # corrector
            rmat = []
            for bidx, (g, ginv, lam) in enumerate(scal):
                dxh = ginv @ dx_a[bidx] @ ginv.T
                dsh = g.T @ ds_a[bidx] @ g
                h = dxh @ dsh
                h = 0.5 * (h + h.T)
                # sigma*mu*I - Lam^2 - H, then invert the Lyapunov operator of Lam
                target = -h
                np.fill_diagonal(target, sigma * mu - lam * lam - np.diag(h))
                denom = 0.5 * (lam[:, None] + lam[None, :])
                e = target / denom
                rmat.append(g @ e @ g.T)
            rhs1 = rp - self.a_of([r - wr for r, wr in zip(rmat, wrdw)])
            dy, dz = self._solve_kkt(factor, rhs1, rq)
            ds = [r - a for r, a in zip(rd, self.at_of(dy))]
            dx = [r - w @ d @ w for r, w, d in zip(rmat, W, ds)]
            dx = [0.5 * (d + d.T) for d in dx]

            ap = min(1.0, opts.step_frac * self._max_step(self.X, dx))
            ad = min(1.0, opts.step_frac * self._max_step(self.S, ds))
            self.X = [x + ap * d for x, d in zip(self.X, dx)]
            self.z = self.z + ap * dz
            self.S = [s + ad * d for s, d in zip(self.S, ds)]
            self.y = self.y + ad * dy
            self.trace[-1]["sigma"] = sigma
            self.trace[-1]["alpha_p"] = ap
            self.trace[-1]["alpha_d"] = ad

            if max(ap, ad) < 1e-5:
                slow_steps += 1
                if slow_steps >= 3:
                    self.message = "step sizes collapsed"
                    return
            else:
                slow_steps = 0
        self.message = "iteration limit reached"

    def y_unscaled(self) -> np.ndarray:
        # internal y is for the minimization form; users see the max form
        return -self.y * self.row_scale

    # -- linear algebra pieces --------------------------------------------------

    @staticmethod
    def _nt(X: np.ndarray, S: np.ndarray):
        """Nesterov-Todd scaling point: returns (G, Ginv, lam) with
        G^-1 X G^-T = G^T S G = diag(lam)."""
        lx = np.linalg.cholesky(X)
        ls = np.linalg.cholesky(S)
        u, sv, vt = np.linalg.svd(ls.T @ lx)
        sv = np.maximum(sv, 1e-300)
        root = np.sqrt(sv)
        g = lx @ vt.T / root
        ginv = (u / root).T @ ls.T
        return g, ginv, sv

    def _schur(self, W: list[np.ndarray]) -> np.ndarray:
        M = np.zeros((self.m, self.m))
        for K, K_rs, w, d in zip(self.K, self.K_rs, W, self.dims):
            if K.nnz == 0:
                continue
            chunk = max(1, _CHUNK_DOUBLES // (d * d))
            for start in range(0, self.m, chunk):
                stop = min(self.m, start + chunk)
                kc = K_rs[start * d : stop * d]
                if kc.nnz == 0:
                    continue
                c = stop - start
                t = (kc @ w).reshape(c, d, d)
                u = (
                    (t.transpose(0, 2, 1).reshape(c * d, d) @ w)
                    .reshape(c, d, d)
                    .transpose(0, 2, 1)
                )
                M[:, start:stop] += K @ u.reshape(c, d * d).T
        return 0.5 * (M + M.T)

    def _factor(self, M: np.ndarray):
        if not np.all(np.isfinite(M)):
            return None
        diag_scale = max(float(np.max(np.diag(M))), 1.0)
        delta = 1e-14 * diag_scale
        for _ in range(6):
            try:
                cho = sla.cho_factor(M + delta * np.eye(self.m), lower=True)
            except (np.linalg.LinAlgError, ValueError):
                delta *= 1000.0
                continue
            if self.f == 0:
                return (cho, None, None, M)
            minv_f = sla.cho_solve(cho, self.F)
            g = self.F.T @ minv_f
            g_scale = max(float(np.max(np.diag(g))), 1e-300)
            gdelta = 1e-14 * g_scale
            for _ in range(6):
                try:
                    gcho = sla.cho_factor(g + gdelta * np.eye(self.f), lower=True)
                    return (cho, gcho, minv_f, M)
                except (np.linalg.LinAlgError, ValueError):
                    gdelta *= 1000.0
            delta *= 1000.0
        return None

    def _kkt_base(self, factor, h1: np.ndarray, h2: np.ndarray):
        cho, gcho, minv_f, _ = factor
        if self.f == 0:
            return sla.cho_solve(cho, h1), np.zeros(0)
        t = sla.cho_solve(cho, h1)
        dz = sla.cho_solve(gcho, self.F.T @ t - h2)
        dy = t - minv_f @ dz
        return dy, dz

    def _solve_kkt(self, factor, h1: np.ndarray, h2: np.ndarray):
        """Solve the (regularized) KKT system with iterative refinement
        against the unregularized matrix."""
        M = factor[3]
        dy, dz = self._kkt_base(factor, h1, h2)
        scale = 1.0 + float(np.max(np.abs(h1))) if len(h1) else 1.0
        for _ in range(2):
            r1 = h1 - (M @ dy + (self.F @ dz if self.f else 0.0))
            r2 = h2 - self.F.T @ dy if self.f else np.zeros(0)
            err = max(
                float(np.max(np.abs(r1))) if len(r1) else 0.0,
                float(np.max(np.abs(r2))) if len(r2) else 0.0,
            )
            if not np.isfinite(err) or err <= 1e-13 * scale:
                break
            e1, e2 = self._kkt_base(factor, r1, r2)
            dy = dy + e1
            dz = dz + e2
        return dy, dz

    @staticmethod
    def _max_step(mats: list[np.ndarray], dirs: list[np.ndarray]) -> float:
        alpha = 1.0
        for x, d in zip(mats, dirs):
            if x.size == 0:
                continue
            lx = np.linalg.cholesky(x)
            t = sla.solve_triangular(lx, d, lower=True)
            t = sla.solve_triangular(lx, t.T, lower=True)
            lam_min = float(np.linalg.eigvalsh(0.5 * (t + t.T))[0])
            if lam_min < -1e-14:
                alpha = min(alpha, -1.0 / lam_min)
        return alpha
