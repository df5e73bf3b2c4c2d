"""Solve the compiled programs, search dwell times, recover gains, grid-check.

The grid checker re-evaluates the source matrix inequalities (without
their strictness terms) pointwise on dense grids and reports the worst
eigenvalue per condition; a certificate passes when every inequality
holds up to the grid tolerance and the Lyapunov matrix stays positive
definite.  For synthesis certificates the closed loop is formed with the
recovered gain and the analysis conditions are re-checked with S = R^-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..polyalg import PolyMatrix
from ..sdpcore import SdpSolution, SolveOptions, solve
from .builders import (
    BuildInfo,
    MinDwell,
    Quadratic,
    RangeDwell,
    Robust,
    SynthCt,
    SynthSd,
    augmented_matrices,
    build_program,
    mode_name,
)
from .system import LpvSystem

__all__ = [
    "Certificate",
    "ControllerGain",
    "CertifyResult",
    "BisectionResult",
    "GridSpec",
    "CheckReport",
    "certify",
    "bisect_dwell_time",
    "recover_gain",
    "check_certificate",
]


@dataclass
class Certificate:
    mode: str
    degree: int
    epsilon: float
    dwell: float | tuple[float, float] | None
    n: int
    m: int
    S: PolyMatrix | None = None
    R: PolyMatrix | None = None
    U: PolyMatrix | None = None


@dataclass
class CertifyResult:
    status: str
    certificate: Certificate | None
    solution: SdpSolution
    info: BuildInfo
    problem_size: tuple[int, int, list[int]]  # rows, free vars, block dims


def _dwell_of(mode) -> float | tuple[float, float] | None:
    if isinstance(mode, (MinDwell, SynthCt)):
        return float(mode.tbar)
    if isinstance(mode, (RangeDwell, SynthSd)):
        return (float(mode.tmin), float(mode.tmax))
    return None


def certify(
    sys: LpvSystem,
    mode,
    degree: int,
    epsilon: float = 0.01,
    uniform_margin: bool = True,
    solve_options: SolveOptions | None = None,
) -> CertifyResult:
    """Build, compile and solve the SOS program for one mode."""
    info = build_program(sys, mode, degree, epsilon, uniform_margin)
    problem, cmap = info.program.compile()
    sol = solve(problem, solve_options or SolveOptions())
    cert = None
    if sol.status == "feasible":
        cert = Certificate(
            mode=mode_name(mode),
            degree=degree,
            epsilon=epsilon,
            dwell=_dwell_of(mode),
            n=info.dims[0],
            m=info.dims[1],
        )
        lyap = info.unscale(cmap.extract(sol, info.lyapunov))
        if isinstance(mode, (SynthCt, SynthSd)):
            cert.R = lyap
            cert.U = info.unscale(cmap.extract(sol, info.gain))
        else:
            cert.S = lyap
    return CertifyResult(
        sol.status, cert, sol, info, (problem.n_rows, problem.n_free, problem.block_dims)
    )


@dataclass
class BisectionResult:
    dwell: float | None
    status: str  # "ok" | "no-certificate-in-range"
    trace: list[tuple[float, str]] = field(default_factory=list)
    monotone: bool = True
    certificate: Certificate | None = None
    warnings: list[str] = field(default_factory=list)


def bisect_dwell_time(
    sys: LpvSystem,
    kind: str,
    degree: int,
    lo: float,
    hi: float,
    tol: float,
    epsilon: float = 0.01,
    uniform_margin: bool = True,
    solve_options: SolveOptions | None = None,
    verbose: bool = False,
) -> BisectionResult:
    """Smallest dwell time in [lo, hi] with a feasible certificate.

    The search assumes feasibility is monotone in the dwell time; every
    probe is kept in the trace and a non-monotone pattern is surfaced as
    a warning rather than hidden.  The returned value is the smallest
    feasible probe, bisected to a gap of at most tol.
    """
    if kind not in ("min-dwell", "synth-ct"):
        raise ValueError("bisection applies to the min-dwell and synth-ct modes")
    if not (0 < lo < hi):
        raise ValueError("need 0 < lo < hi")
    make = (lambda tb: MinDwell(tb)) if kind == "min-dwell" else (lambda tb: SynthCt(tb))
    result = BisectionResult(None, "ok")

    def probe(tb: float) -> CertifyResult:
        r = certify(sys, make(tb), degree, epsilon, uniform_margin, solve_options)
        result.trace.append((tb, r.status))
        if verbose:
            print(f"  dwell {tb:.6g}: {r.status}")
        return r

    top = probe(hi)
    if top.status != "feasible":
        result.status = "no-certificate-in-range"
        result.monotone = _trace_monotone(result.trace)
        return result
    best = top

    bottom = probe(lo)
    if bottom.status == "feasible":
        result.dwell = lo
        result.certificate = bottom.certificate
        result.monotone = _trace_monotone(result.trace)
        return result

    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        r = probe(mid)
        if r.status == "feasible":
            b, best = mid, r
        else:
            a = mid
    result.dwell = b
    result.certificate = best.certificate
    result.monotone = _trace_monotone(result.trace)
    if not result.monotone:
        result.warnings.append(
            "feasibility was not monotone across probes; the result is the "
            "smallest feasible probe, not a certified infimum"
        )
    return result


def _trace_monotone(trace: list[tuple[float, str]]) -> bool:
    feas = sorted(t for t, s in trace if s == "feasible")
    infeas = sorted(t for t, s in trace if s != "feasible")
    if not feas or not infeas:
        return True
    return max(infeas) <= min(feas)


class ControllerGain:
    """Gain stored as the (U, R) pair; inverses are taken numerically."""

    def __init__(self, kind: str, u: PolyMatrix, r: PolyMatrix, n: int, m: int,
                 tbar: float | None = None):
        self.kind = kind  # "continuous" | "sampled-data"
        self.u = u
        self.r = r
        self.n = n
        self.m = m
        self.tbar = tbar
        self.env = u.env

    def _point(self, tau: float | None, theta) -> np.ndarray:
        pt = np.zeros(self.env.nvars)
        if tau is not None:
            pt[self.env.clock] = tau
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        for i, var in enumerate(self.env.params):
            pt[var] = theta[i]
        return pt

    def _solve_gain(self, pt: np.ndarray) -> np.ndarray:
        rv = self.r.eval(pt)
        uv = self.u.eval(pt)
        eigs = np.linalg.eigvalsh(rv)
        if eigs[0] <= 0.0:
            raise ValueError(
                f"R is not positive definite at {pt.tolist()} (min eig {eigs[0]:g})"
            )
        return np.linalg.solve(rv, uv.T).T

    def at(self, tau: float, theta) -> np.ndarray:
        """Continuous gain K(tau, p) = U R^-1 with the clock clamped to [0, Tbar]."""
        if self.kind != "continuous":
            raise ValueError("at(tau, theta) applies to continuous gains")
        tau = min(max(float(tau), 0.0), self.tbar)
        return self._solve_gain(self._point(tau, theta))

    def k1k2(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Sampled-data update pair (K1, K2) from K~ = U(p) R(0,p)^-1."""
        if self.kind != "sampled-data":
            raise ValueError("k1k2(theta) applies to sampled-data gains")
        k = self._solve_gain(self._point(0.0, theta))
        return k[:, : self.n], k[:, self.n :]


def recover_gain(cert: Certificate) -> ControllerGain:
    if cert.mode == "synth-ct":
        return ControllerGain("continuous", cert.U, cert.R, cert.n, cert.m,
                              tbar=float(cert.dwell))
    if cert.mode == "synth-sd":
        return ControllerGain("sampled-data", cert.U, cert.R, cert.n, cert.m)
    raise ValueError(f"certificate mode {cert.mode!r} carries no controller gain")


# ---------------------------------------------------------------------------
# grid checking


@dataclass
class GridSpec:
    points: int = 50
    sigma_points: int = 20
    tol: float = 1e-6


@dataclass
class ConditionCheck:
    name: str
    kind: str  # "lmi-max" (<= tol) or "pd-min" (>= tol)
    value: float
    worst: dict
    ok: bool


@dataclass
class CheckReport:
    passed: bool
    conditions: list[ConditionCheck]

    def condition(self, name: str) -> ConditionCheck:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = []
        for c in self.conditions:
            rel = "<=" if c.kind == "lmi-max" else ">="
            lines.append(
                f"{'ok ' if c.ok else 'BAD'} {c.name}: "
                f"{'max' if c.kind == 'lmi-max' else 'min'} eig {c.value:.3e} "
                f"(want {rel} {'tol' if c.kind == 'lmi-max' else 'tol'}) at {c.worst}"
            )
        return "\n".join(lines)


class _GridChecker:
    def __init__(self, sys: LpvSystem, cert: Certificate, grid: GridSpec):
        self.sys = sys
        self.cert = cert
        self.grid = grid
        self.env = sys.env
        self.t = sys.env.clock
        self.thetas = sys.param_grid(grid.points)
        self.conditions: list[ConditionCheck] = []

    def lmi(self, name: str, values: np.ndarray, labels) -> None:
        """values: stacked symmetric matrices; record max eigenvalue."""
        eigs = np.linalg.eigvalsh(values)
        worst = int(np.argmax(eigs[:, -1]))
        val = float(eigs[worst, -1])
        self.conditions.append(
            ConditionCheck(name, "lmi-max", val, labels(worst), val <= self.grid.tol)
        )

    def pd(self, name: str, values: np.ndarray, labels) -> None:
        eigs = np.linalg.eigvalsh(values)
        worst = int(np.argmin(eigs[:, 0]))
        val = float(eigs[worst, 0])
        self.conditions.append(
            ConditionCheck(name, "pd-min", val, labels(worst), val >= self.grid.tol)
        )

    def tau_theta(self, taus: np.ndarray):
        reps = len(taus)
        P = len(self.thetas)
        tau_col = np.repeat(taus, P)
        theta_rep = np.tile(self.thetas, (reps, 1))
        pts = self.sys.full_points(theta_rep, tau=tau_col)
        def labels(idx):
            return {"tau": float(tau_col[idx]), "theta": theta_rep[idx].tolist()}
        return pts, tau_col, theta_rep, labels

    def theta_only(self):
        pts = self.sys.full_points(self.thetas)
        def labels(idx):
            return {"theta": self.thetas[idx].tolist()}
        return pts, labels

    def vertex_values(self, theta_pts: np.ndarray) -> list[np.ndarray]:
        """Rate-vertex values mu(theta): list over vertices of (P, N) arrays."""
        out = []
        for vert in self.sys.rate_vertices():
            cols = []
            for mu in vert:
                cols.append(PolyMatrix(self.env, [[mu]]).eval_many(theta_pts)[:, 0, 0])
            out.append(np.stack(cols, axis=1) if cols else np.zeros((len(theta_pts), 0)))
        return out


def check_certificate(sys: LpvSystem, cert: Certificate, grid: GridSpec | None = None) -> CheckReport:
    grid = grid or GridSpec()
    if grid.points < 1:
        raise ValueError("grid must have at least one point per axis")
    c = _GridChecker(sys, cert, grid)
    mode = cert.mode
    if mode == "min-dwell":
        _check_min_dwell(c)
    elif mode == "quadratic":
        _check_quadratic(c)
    elif mode == "robust":
        _check_robust(c)
    elif mode == "range-dwell":
        _check_range_dwell(c)
    elif mode == "synth-ct":
        _check_synth_ct(c)
    elif mode == "synth-sd":
        _check_synth_sd(c)
    else:
        raise ValueError(f"unknown certificate mode {mode!r}")
    return CheckReport(all(cc.ok for cc in c.conditions), c.conditions)


def _he(a: np.ndarray) -> np.ndarray:
    return a + np.swapaxes(a, -1, -2)


def _check_min_dwell(c: _GridChecker):
    sys, cert, grid = c.sys, c.cert, c.grid
    tbar = float(cert.dwell)
    s = cert.S
    taus = np.linspace(0.0, tbar, grid.points)
    pts, tau_col, theta_rep, labels = c.tau_theta(taus)

    sv = s.eval_many(pts)
    c.pd("lyapunov", sv, labels)

    av = sys.a.eval_many(pts)
    ds_t = s.diff(c.t).eval_many(pts)
    ds_p = [s.diff(v).eval_many(pts) for v in c.env.params]
    mus = c.vertex_values(pts)
    for vi, mu in enumerate(mus):
        drift = ds_t.copy()
        for i in range(sys.N):
            drift += ds_p[i] * mu[:, i, None, None]
        lmi = drift + _he(sv @ av)
        c.lmi(f"flow[{vi}]", lmi, labels)

    # boundary flow at tau = Tbar
    bpts, blabels = c.theta_only()
    bpts[:, c.t] = tbar
    av_b = sys.a.eval_many(bpts)
    sv_b = s.eval_many(bpts)
    ds_pb = [s.diff(v).eval_many(bpts) for v in c.env.params]
    mus_b = c.vertex_values(bpts)
    for vi, mu in enumerate(mus_b):
        drift = np.zeros_like(sv_b)
        for i in range(sys.N):
            drift += ds_pb[i] * mu[:, i, None, None]
        c.lmi(f"edge[{vi}]", drift + _he(sv_b @ av_b), blabels)

    # jump over parameter pairs
    th = c.thetas
    k = min(len(th), grid.points)
    idx = np.linspace(0, len(th) - 1, k).round().astype(int)
    th = th[idx]
    P = len(th)
    theta = np.repeat(th, P, axis=0)
    eta = np.tile(th, (P, 1))
    pts0 = sys.full_points(theta, tau=0.0)
    ptsT = sys.full_points(eta, tau=tbar)
    s0 = s.eval_many(pts0)
    sT = s.eval_many(ptsT)
    jv = sys.jump.eval_many(sys.full_points(eta))
    lmi = np.swapaxes(jv, 1, 2) @ s0 @ jv - sT
    def jlabels(i):
        return {"theta": theta[i].tolist(), "eta": eta[i].tolist()}
    c.lmi("jump", lmi, jlabels)


def _check_quadratic(c: _GridChecker):
    pts, labels = c.theta_only()
    p = c.cert.S
    pv = p.eval_many(pts[:1])
    c.pd("lyapunov", pv, lambda i: {})
    av = c.sys.a.eval_many(pts)
    c.lmi("flow", _he(np.broadcast_to(pv[0], av.shape) @ av), labels)


def _check_robust(c: _GridChecker):
    pts, labels = c.theta_only()
    p = c.cert.S
    pv = p.eval_many(pts)
    c.pd("lyapunov", pv, labels)
    av = c.sys.a.eval_many(pts)
    dp = [p.diff(v).eval_many(pts) for v in c.env.params]
    for vi, mu in enumerate(c.vertex_values(pts)):
        drift = np.zeros_like(pv)
        for i in range(c.sys.N):
            drift += dp[i] * mu[:, i, None, None]
        c.lmi(f"flow[{vi}]", drift + _he(pv @ av), labels)


def _check_range_dwell(c: _GridChecker):
    sys, cert, grid = c.sys, c.cert, c.grid
    tmin, tmax = cert.dwell
    s = cert.S
    taus = np.linspace(0.0, tmax, grid.points)
    pts, tau_col, theta_rep, labels = c.tau_theta(taus)
    sv = s.eval_many(pts)
    c.pd("lyapunov", sv, labels)

    av = sys.a.eval_many(pts)
    ds_t = s.diff(c.t).eval_many(pts)
    ds_p = [s.diff(v).eval_many(pts) for v in c.env.params]
    for vi, mu in enumerate(c.vertex_values(pts)):
        drift = -ds_t.copy()
        for i in range(sys.N):
            drift += ds_p[i] * mu[:, i, None, None]
        c.lmi(f"flow[{vi}]", drift + _he(sv @ av), labels)

    sigmas = np.linspace(tmin, tmax, grid.sigma_points)
    P = len(c.thetas)
    sig_col = np.repeat(sigmas, P)
    theta_rep2 = np.tile(c.thetas, (len(sigmas), 1))
    pts_s = sys.full_points(theta_rep2, tau=sig_col)
    pts_0 = sys.full_points(theta_rep2, tau=0.0)
    ssig = s.eval_many(pts_s)
    s0 = s.eval_many(pts_0)
    jv = sys.jump.eval_many(sys.full_points(theta_rep2))
    lmi = np.swapaxes(jv, 1, 2) @ ssig @ jv - s0
    def jlabels(i):
        return {"sigma": float(sig_col[i]), "theta": theta_rep2[i].tolist()}
    c.lmi("jump", lmi, jlabels)


def _check_synth_ct(c: _GridChecker):
    """Closed-loop re-check of the analysis conditions with S = R^-1."""
    sys, cert, grid = c.sys, c.cert, c.grid
    tbar = float(cert.dwell)
    r, u = cert.R, cert.U
    taus = np.linspace(0.0, tbar, grid.points)
    pts, tau_col, theta_rep, labels = c.tau_theta(taus)

    rv = r.eval_many(pts)
    c.pd("lyapunov", rv, labels)
    sv = np.linalg.inv(rv)
    uv = u.eval_many(pts)
    kv = uv @ sv  # K = U R^-1
    av = sys.a.eval_many(pts)
    bv = sys.b.eval_many(pts)
    acl = av + bv @ kv

    dr_t = r.diff(c.t).eval_many(pts)
    dr_p = [r.diff(v).eval_many(pts) for v in c.env.params]
    ds_t = -sv @ dr_t @ sv
    ds_p = [-sv @ d @ sv for d in dr_p]
    for vi, mu in enumerate(c.vertex_values(pts)):
        drift = ds_t.copy()
        for i in range(sys.N):
            drift += ds_p[i] * mu[:, i, None, None]
        c.lmi(f"flow[{vi}]", drift + _he(sv @ acl), labels)
        edge = np.isclose(tau_col, tbar)
        drift_e = np.zeros_like(drift[edge])
        for i in range(sys.N):
            drift_e += ds_p[i][edge] * mu[edge, i, None, None]
        def elabels(idx, edge=edge):
            w = np.flatnonzero(edge)[idx]
            return labels(w)
        c.lmi(f"edge[{vi}]", drift_e + _he(sv[edge] @ acl[edge]), elabels)

    th = c.thetas
    k = min(len(th), grid.points)
    idx = np.linspace(0, len(th) - 1, k).round().astype(int)
    th = th[idx]
    P = len(th)
    theta = np.repeat(th, P, axis=0)
    eta = np.tile(th, (P, 1))
    s0 = np.linalg.inv(r.eval_many(sys.full_points(theta, tau=0.0)))
    sT = np.linalg.inv(r.eval_many(sys.full_points(eta, tau=tbar)))
    jv = sys.jump.eval_many(sys.full_points(eta))
    lmi = np.swapaxes(jv, 1, 2) @ s0 @ jv - sT
    def jlabels(i):
        return {"theta": theta[i].tolist(), "eta": eta[i].tolist()}
    c.lmi("jump", lmi, jlabels)


def _check_synth_sd(c: _GridChecker):
    sys, cert, grid = c.sys, c.cert, c.grid
    tmin, tmax = cert.dwell
    r, u = cert.R, cert.U
    a_aug, j_aug, b_aug = augmented_matrices(sys)

    taus = np.linspace(0.0, tmax, grid.points)
    pts, tau_col, theta_rep, labels = c.tau_theta(taus)
    rv = r.eval_many(pts)
    c.pd("lyapunov", rv, labels)
    sv = np.linalg.inv(rv)
    av = a_aug.eval_many(pts)
    dr_t = r.diff(c.t).eval_many(pts)
    dr_p = [r.diff(v).eval_many(pts) for v in c.env.params]
    ds_t = -sv @ dr_t @ sv
    ds_p = [-sv @ d @ sv for d in dr_p]
    for vi, mu in enumerate(c.vertex_values(pts)):
        drift = -ds_t.copy()
        for i in range(sys.N):
            drift += ds_p[i] * mu[:, i, None, None]
        c.lmi(f"flow[{vi}]", drift + _he(sv @ av), labels)

    sigmas = np.linspace(tmin, tmax, grid.sigma_points)
    P = len(c.thetas)
    sig_col = np.repeat(sigmas, P)
    theta_rep2 = np.tile(c.thetas, (len(sigmas), 1))
    pts_s = sys.full_points(theta_rep2, tau=sig_col)
    pts_0 = sys.full_points(theta_rep2, tau=0.0)
    ssig = np.linalg.inv(r.eval_many(pts_s))
    r0 = r.eval_many(pts_0)
    s0 = np.linalg.inv(r0)
    uv = u.eval_many(pts_0)
    kt = uv @ s0  # K~ = U R(0)^-1
    jv = j_aug.eval_many(pts_0)
    bv = b_aug.eval_many(pts_0)
    jcl = jv + bv @ kt
    lmi = np.swapaxes(jcl, 1, 2) @ ssig @ jcl - s0
    def jlabels(i):
        return {"sigma": float(sig_col[i]), "theta": theta_rep2[i].tolist()}
    c.lmi("jump", lmi, jlabels)
