"""Translate a jump-LPV system plus an analysis/synthesis mode into an SOS program.

Modes
-----
min-dwell(Tbar)      clock-dependent S(tau, p) certifying stability when
                     consecutive jumps are at least Tbar apart and the
                     parameter may jump anywhere in its set.
quadratic            constant P (arbitrarily fast parameter variation,
                     identity jump map).
robust               parameter-dependent P(p) for differentiable
                     trajectories with bounded rate (identity jump map).
range-dwell(T-,T+)   reversed-clock S for jumps spaced within [T-, T+] and
                     continuous parameters.
synth-ct(Tbar)       state feedback u = K(tau,p)x via the congruence
                     variables (R, U), K = U R^-1.
synth-sd(T-,T+)      sampled-data feedback u+ = K1 x + K2 u on the
                     augmented state z = (x, u), gain U(p) R(0,p)^-1.

Every inequality constraint is localized to its domain with one SOS
multiplier per generator (plus a clock-interval multiplier) and one
symmetric multiplier per equality generator.  With uniform_margin the
strictness term eps*I is applied to every constraint; otherwise it is
placed exactly where the source conditions put it.

Programs are compiled in normalized variables (clock mapped to [0, 1],
each parameter to [-1, 1]) so the semidefinite data is well scaled; the
affine change of variables is inverted exactly when certificates are
extracted, so callers only ever see original-variable polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..polyalg import Polynomial, PolyMatrix
from ..soscomp import AMatrix, DecisionPolyMatrix, SosProgram
from .system import LpvSystem

__all__ = [
    "MinDwell",
    "Quadratic",
    "Robust",
    "RangeDwell",
    "SynthCt",
    "SynthSd",
    "BuildInfo",
    "build_analysis_program",
    "build_synthesis_program",
    "build_program",
    "mode_name",
]


@dataclass(frozen=True)
class MinDwell:
    tbar: float


@dataclass(frozen=True)
class Quadratic:
    pass


@dataclass(frozen=True)
class Robust:
    pass


@dataclass(frozen=True)
class RangeDwell:
    tmin: float
    tmax: float


@dataclass(frozen=True)
class SynthCt:
    tbar: float


@dataclass(frozen=True)
class SynthSd:
    tmin: float
    tmax: float


def mode_name(mode) -> str:
    return {
        MinDwell: "min-dwell",
        Quadratic: "quadratic",
        Robust: "robust",
        RangeDwell: "range-dwell",
        SynthCt: "synth-ct",
        SynthSd: "synth-sd",
    }[type(mode)]


@dataclass
class BuildInfo:
    mode: object
    program: SosProgram
    lyapunov: DecisionPolyMatrix  # S, P or R (in scaled variables)
    gain: DecisionPolyMatrix | None  # U for synthesis modes
    degree: int
    epsilon: float
    vertices: list
    dims: tuple[int, int]  # state and input dimension of the built program
    unscale: Callable[[PolyMatrix], PolyMatrix] = lambda m: m


class _Builder:
    """Shared scaffolding: variable normalization and multiplier families."""

    def __init__(self, sys: LpvSystem, degree: int, eps: float, uniform: bool,
                 tscale: float = 1.0):
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        self.sys = sys
        self.env = sys.env
        self.deg = degree
        self.eps = eps
        self.uniform = uniform
        self.prog = SosProgram(sys.env)
        self.t = sys.env.clock
        self.pvars = list(sys.env.params)
        self.qvars = list(sys.env.copies)
        self.p2q = dict(zip(self.pvars, self.qvars))
        self.counter = 0

        # affine normalization p_i = c_i + r_i * phat_i, tau = tscale * that
        self.tscale = float(tscale)
        self.centers = [(lo + hi) / 2 for lo, hi in sys.bounds]
        self.halfw = [max((hi - lo) / 2, 0.0) or 1.0 for lo, hi in sys.bounds]
        self._to_orig = {
            v: Polynomial.constant(self.env, c) + Polynomial.variable(self.env, v) * r
            for v, c, r in zip(self.pvars, self.centers, self.halfw)
        }

    # -- scaling helpers -------------------------------------------------------

    def hat_poly(self, p: Polynomial) -> Polynomial:
        """Rewrite a polynomial in the original parameters in scaled ones."""
        return p.subs(self._to_orig)

    def hat_matrix(self, m: PolyMatrix) -> PolyMatrix:
        return m.subs(self._to_orig)

    def unscale_matrix(self, m: PolyMatrix) -> PolyMatrix:
        """Map a scaled-variable matrix back to original variables (exact)."""
        sub: dict[int, Polynomial] = {}
        if self.tscale != 1.0:
            sub[self.t] = Polynomial.variable(self.env, self.t) * (1.0 / self.tscale)
        for v, c, r in zip(self.pvars, self.centers, self.halfw):
            sub[v] = (Polynomial.variable(self.env, v) - c) * (1.0 / r)
        for pv, qv in self.p2q.items():
            c = self.centers[self.pvars.index(pv)]
            r = self.halfw[self.pvars.index(pv)]
            sub[qv] = (Polynomial.variable(self.env, qv) - c) * (1.0 / r)
        return m.subs(sub)

    def hat_generators(self) -> list[Polynomial]:
        if self.sys.has_explicit_generators():
            return [self.hat_poly(g) for g in self.sys.generators()]
        out = []
        for v in self.pvars:
            p = Polynomial.variable(self.env, v)
            out.append((p + 1.0) * (1.0 - p))
        return out

    def hat_equalities(self) -> list[Polynomial]:
        return [self.hat_poly(h) for h in self.sys.eq]

    def hat_vertices(self) -> list[tuple[Polynomial, ...]]:
        """Rate vertices rewritten in scaled parameters, divided by r_i."""
        out = []
        for vert in self.sys.rate_vertices():
            out.append(
                tuple(
                    self.hat_poly(mu) * (1.0 / r) for mu, r in zip(vert, self.halfw)
                )
            )
        return out

    # -- program assembly --------------------------------------------------------

    @property
    def sos_deg(self) -> int:
        # SOS multipliers need an even degree to be nontrivial
        return self.deg + (self.deg % 2)

    def margin(self, in_source: bool) -> float:
        return self.eps if (self.uniform or in_source) else 0.0

    def fresh(self, size: int, vars_, degree: int, tag: str) -> DecisionPolyMatrix:
        self.counter += 1
        return self.prog.declare_decision(size, True, vars_, degree, f"{tag}{self.counter}")

    def localized(
        self,
        expr: AMatrix,
        vars_,
        tag: str,
        margin: float,
        interval: Polynomial | None = None,
        copies: bool = False,
        plain: bool = False,
    ) -> None:
        """Add an SOS constraint with the standard multiplier family."""
        if plain:
            self.prog.add_sos_constraint(expr, margin=margin, name=tag)
            return
        n = expr.rows
        domain = []
        equalities = []
        for g in self.hat_generators():
            domain.append((g, self.fresh(n, vars_, self.sos_deg, f"{tag}g")))
        for h in self.hat_equalities():
            equalities.append((h, self.fresh(n, vars_, self.deg, f"{tag}h")))
        if copies:
            for g in self.hat_generators():
                domain.append(
                    (g.rename(self.p2q), self.fresh(n, vars_, self.sos_deg, f"{tag}gq"))
                )
            for h in self.hat_equalities():
                equalities.append(
                    (h.rename(self.p2q), self.fresh(n, vars_, self.deg, f"{tag}hq"))
                )
        if interval is not None:
            domain.append((interval, self.fresh(n, vars_, self.sos_deg, f"{tag}c")))
        self.prog.add_sos_constraint(expr, domain, equalities, margin, name=tag)

    def clock_interval(self, lo: float, hi: float) -> Polynomial:
        t = Polynomial.variable(self.env, self.t)
        return (t - lo) * (hi - t)

    def rate_term(self, mat: AMatrix, vertex) -> AMatrix:
        """sum_i d(mat)/dphat_i * muhat_i for one scaled rate vertex."""
        acc = None
        for var, mu in zip(self.pvars, vertex):
            if mu.is_zero:
                continue
            term = mat.diff(var).mul_poly(mu)
            acc = term if acc is None else acc + term
        if acc is None:
            acc = AMatrix.zeros(self.env, mat.rows, mat.cols)
        return acc

    def clock_term(self, mat: AMatrix) -> AMatrix:
        """d(mat)/dtau in original time units: (1/tscale) d/dthat."""
        return mat.diff(self.t).scale(1.0 / self.tscale)


def build_analysis_program(
    sys: LpvSystem,
    mode,
    degree: int,
    epsilon: float = 0.01,
    uniform_margin: bool = True,
) -> BuildInfo:
    """SOS program for one of the stability-analysis modes."""
    if isinstance(mode, MinDwell):
        if mode.tbar <= 0:
            raise ValueError("min-dwell analysis needs Tbar > 0")
        return _min_dwell(sys, mode, degree, epsilon, uniform_margin)
    if isinstance(mode, Quadratic):
        _require_identity_jump(sys, "quadratic")
        return _quadratic(sys, mode, degree, epsilon, uniform_margin)
    if isinstance(mode, Robust):
        _require_identity_jump(sys, "robust")
        return _robust(sys, mode, degree, epsilon, uniform_margin)
    if isinstance(mode, RangeDwell):
        _check_range(mode.tmin, mode.tmax)
        return _range_dwell(sys, mode, degree, epsilon, uniform_margin)
    raise TypeError(f"not an analysis mode: {mode!r}")


def build_synthesis_program(
    sys: LpvSystem,
    mode,
    degree: int,
    epsilon: float = 0.01,
    uniform_margin: bool = True,
) -> BuildInfo:
    """SOS program for continuous-time or sampled-data feedback synthesis."""
    if sys.m < 1 or sys.b is None:
        raise ValueError("synthesis needs an input matrix B with m >= 1")
    if all(p.is_zero for row in sys.b.entries for p in row):
        raise ValueError("B is identically zero; nothing to synthesize")
    if isinstance(mode, SynthCt):
        if mode.tbar <= 0:
            raise ValueError("continuous-time synthesis needs Tbar > 0")
        return _synth_ct(sys, mode, degree, epsilon, uniform_margin)
    if isinstance(mode, SynthSd):
        _check_range(mode.tmin, mode.tmax)
        return _synth_sd(sys, mode, degree, epsilon, uniform_margin)
    raise TypeError(f"not a synthesis mode: {mode!r}")


def build_program(sys, mode, degree, epsilon=0.01, uniform_margin=True) -> BuildInfo:
    if isinstance(mode, (SynthCt, SynthSd)):
        return build_synthesis_program(sys, mode, degree, epsilon, uniform_margin)
    return build_analysis_program(sys, mode, degree, epsilon, uniform_margin)


def _require_identity_jump(sys: LpvSystem, what: str):
    if not sys.jump.is_identity():
        raise ValueError(f"{what} stability requires the identity jump map J = I")


def _check_range(tmin: float, tmax: float):
    if not (0 < tmin <= tmax):
        raise ValueError("range dwell-time needs 0 < Tmin <= Tmax")


def _min_dwell(sys, mode, degree, eps, uniform) -> BuildInfo:
    b = _Builder(sys, degree, eps, uniform, tscale=float(mode.tbar))
    env, t = b.env, b.t
    verts = b.hat_vertices()
    a = b.hat_matrix(sys.a)

    s_dec = b.prog.declare_decision(sys.n, True, [t] + b.pvars, degree, "S")
    s = s_dec.as_matrix(env)
    interval = b.clock_interval(0.0, 1.0)

    # positivity of S on [0,Tbar] x P
    b.localized(s, [t] + b.pvars, "pos", b.margin(True), interval)

    # flow inequality for each rate vertex
    ds_t = b.clock_term(s)
    sa_he = s.rmul(a).he()
    for v, mu in enumerate(verts):
        expr = -(ds_t + b.rate_term(s, mu) + sa_he)
        b.localized(expr, [t] + b.pvars, f"flow{v}", b.margin(False), interval)

    # jump inequality over (p, q):  S(Tbar,q) - J(q)^T S(0,p) J(q)
    s_t_eta = s.subs_const({t: 1.0}).rename(b.p2q)
    s_0 = s.subs_const({t: 0.0})
    j_eta = b.hat_matrix(sys.jump).rename(b.p2q)
    expr = s_t_eta - s_0.lmul(j_eta.transpose()).rmul(j_eta)
    b.localized(expr, b.pvars + b.qvars, "jump", b.margin(True), copies=True)

    # boundary flow at tau = Tbar
    sa_he_tbar = sa_he.subs_const({t: 1.0})
    for v, mu in enumerate(verts):
        drho = b.rate_term(s, mu).subs_const({t: 1.0})
        expr = -(drho + sa_he_tbar)
        b.localized(expr, b.pvars, f"edge{v}", b.margin(True))

    return BuildInfo(mode, b.prog, s_dec, None, degree, eps,
                     sys.rate_vertices(), (sys.n, sys.m), b.unscale_matrix)


def _quadratic(sys, mode, degree, eps, uniform) -> BuildInfo:
    b = _Builder(sys, degree, eps, uniform)
    p_dec = b.prog.declare_decision(sys.n, True, [], 0, "P")
    p = p_dec.as_matrix(b.env)
    b.localized(p, [], "pos", b.margin(True), plain=True)
    expr = -p.rmul(b.hat_matrix(sys.a)).he()
    b.localized(expr, b.pvars, "flow", b.margin(True))
    return BuildInfo(mode, b.prog, p_dec, None, degree, eps, [], (sys.n, sys.m),
                     b.unscale_matrix)


def _robust(sys, mode, degree, eps, uniform) -> BuildInfo:
    b = _Builder(sys, degree, eps, uniform)
    verts = b.hat_vertices()
    p_dec = b.prog.declare_decision(sys.n, True, b.pvars, degree, "P")
    p = p_dec.as_matrix(b.env)
    b.localized(p, b.pvars, "pos", b.margin(True))
    pa_he = p.rmul(b.hat_matrix(sys.a)).he()
    for v, mu in enumerate(verts):
        expr = -(b.rate_term(p, mu) + pa_he)
        b.localized(expr, b.pvars, f"flow{v}", b.margin(True))
    return BuildInfo(mode, b.prog, p_dec, None, degree, eps,
                     sys.rate_vertices(), (sys.n, sys.m), b.unscale_matrix)


def _range_dwell(sys, mode, degree, eps, uniform) -> BuildInfo:
    tmin, tmax = float(mode.tmin), float(mode.tmax)
    b = _Builder(sys, degree, eps, uniform, tscale=tmax)
    env, t = b.env, b.t
    verts = b.hat_vertices()
    a = b.hat_matrix(sys.a)
    jmat = b.hat_matrix(sys.jump)

    s_dec = b.prog.declare_decision(sys.n, True, [t] + b.pvars, degree, "S")
    s = s_dec.as_matrix(env)
    flow_iv = b.clock_interval(0.0, 1.0)
    jump_iv = b.clock_interval(tmin / tmax, 1.0)

    b.localized(s, [t] + b.pvars, "pos", b.margin(True), flow_iv)

    # reversed clock: -dS/dtau + sum dS/dp mu + He[S A] <= 0 on [0, Tmax]
    ds_t = b.clock_term(s)
    sa_he = s.rmul(a).he()
    for v, mu in enumerate(verts):
        expr = ds_t - b.rate_term(s, mu) - sa_he
        b.localized(expr, [t] + b.pvars, f"flow{v}", b.margin(False), flow_iv)

    # jump with continuous parameter: S(0,p) - J(p)^T S(sigma,p) J(p)
    s0 = s.subs_const({t: 0.0})
    expr = s0 - s.lmul(jmat.transpose()).rmul(jmat)
    b.localized(expr, [t] + b.pvars, "jump", b.margin(True), jump_iv)

    return BuildInfo(mode, b.prog, s_dec, None, degree, eps,
                     sys.rate_vertices(), (sys.n, sys.m), b.unscale_matrix)


def _synth_ct(sys, mode, degree, eps, uniform) -> BuildInfo:
    b = _Builder(sys, degree, eps, uniform, tscale=float(mode.tbar))
    env, t = b.env, b.t
    verts = b.hat_vertices()
    a = b.hat_matrix(sys.a)
    bmat = b.hat_matrix(sys.b)

    r_dec = b.prog.declare_decision(sys.n, True, [t] + b.pvars, degree, "R")
    u_dec = b.prog.declare_decision((sys.m, sys.n), False, [t] + b.pvars, degree, "U")
    r = r_dec.as_matrix(env)
    u = u_dec.as_matrix(env)
    interval = b.clock_interval(0.0, 1.0)

    b.localized(r, [t] + b.pvars, "pos", b.margin(True), interval)

    # Phi = A R + B U; flow: dR/dtau + sum dR/dp mu - He[Phi] >= eps I
    phi_he = (r.lmul(a) + u.lmul(bmat)).he()
    dr_t = b.clock_term(r)
    for v, mu in enumerate(verts):
        expr = dr_t + b.rate_term(r, mu) - phi_he
        b.localized(expr, [t] + b.pvars, f"flow{v}", b.margin(True), interval)

    # boundary at tau = Tbar (no clock derivative)
    for v, mu in enumerate(verts):
        expr = b.rate_term(r, mu).subs_const({t: 1.0}) - phi_he.subs_const({t: 1.0})
        b.localized(expr, b.pvars, f"edge{v}", b.margin(True))

    # jump: R(0,p) - J(q) R(Tbar,q) J(q)^T >= 0 over (p, q)
    r_t_eta = r.subs_const({t: 1.0}).rename(b.p2q)
    j_eta = b.hat_matrix(sys.jump).rename(b.p2q)
    expr = r.subs_const({t: 0.0}) - r_t_eta.lmul(j_eta).rmul(j_eta.transpose())
    b.localized(expr, b.pvars + b.qvars, "jump", b.margin(False), copies=True)

    return BuildInfo(mode, b.prog, r_dec, u_dec, degree, eps,
                     sys.rate_vertices(), (sys.n, sys.m), b.unscale_matrix)


def _synth_sd(sys, mode, degree, eps, uniform) -> BuildInfo:
    tmin, tmax = float(mode.tmin), float(mode.tmax)
    b = _Builder(sys, degree, eps, uniform, tscale=tmax)
    env, t = b.env, b.t
    verts = b.hat_vertices()
    n, m = sys.n, sys.m
    nz = n + m

    a_aug, j_aug, b_aug = augmented_matrices(sys)
    a_aug = b.hat_matrix(a_aug)
    j_aug = b.hat_matrix(j_aug)

    r_dec = b.prog.declare_decision(nz, True, [t] + b.pvars, degree, "R")
    u_dec = b.prog.declare_decision((m, nz), False, b.pvars, degree, "U")
    r = r_dec.as_matrix(env)
    u = u_dec.as_matrix(env)
    flow_iv = b.clock_interval(0.0, 1.0)
    jump_iv = b.clock_interval(tmin / tmax, 1.0)

    b.localized(r, [t] + b.pvars, "pos", b.margin(True), flow_iv)

    # reversed clock flow on the augmented open-loop dynamics
    dr_t = b.clock_term(r)
    ar_he = r.lmul(a_aug).he()
    for v, mu in enumerate(verts):
        expr = -dr_t + b.rate_term(r, mu) - ar_he
        b.localized(expr, [t] + b.pvars, f"flow{v}", b.margin(True), flow_iv)

    # jump in Schur form: [[R(sigma,p), Jt R(0,p) + Bt U(p)], [*, R(0,p)]] >= 0
    r0 = r.subs_const({t: 0.0})
    top_right = r0.lmul(j_aug) + u.lmul(b_aug)
    expr = AMatrix.block([[r, top_right], [top_right.transpose(), r0]])
    b.localized(expr, [t] + b.pvars, "jump", b.margin(False), jump_iv)

    return BuildInfo(mode, b.prog, r_dec, u_dec, degree, eps,
                     sys.rate_vertices(), (n, m), b.unscale_matrix)


def augmented_matrices(sys: LpvSystem) -> tuple[PolyMatrix, PolyMatrix, PolyMatrix]:
    """Augmented (x, u) system for sampled-data design: A~, J~, B~."""
    env = sys.env
    n, m = sys.n, sys.m
    z_nm = PolyMatrix.zeros(env, m, n)
    z_mm = PolyMatrix.zeros(env, m, m)
    a_aug = PolyMatrix.block([[sys.a, sys.b], [z_nm, z_mm]])
    j_aug = PolyMatrix.block(
        [[sys.jump, PolyMatrix.zeros(env, n, m)], [z_nm, z_mm]]
    )
    b_aug = PolyMatrix.block([[PolyMatrix.zeros(env, n, m)], [PolyMatrix.identity(env, m)]])
    return a_aug, j_aug, b_aug
