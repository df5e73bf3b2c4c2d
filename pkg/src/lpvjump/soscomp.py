"""Sum-of-squares programs and their reduction to block SDPs.

A program owns decision polynomial matrices whose coefficients are scalar
unknowns, and SOS-matrix constraints over semialgebraic domains.  Each
constraint asserts that

    expr - sum_i M_i * g_i - sum_j N_j * h_j - margin*I   is an SOS matrix,

where the M_i are SOS multiplier matrices for inequality generators
g_i >= 0 and the N_j are symmetric (sign-unconstrained) multipliers for
equality generators h_j = 0.  Compilation Gram-parametrizes every SOS
object, Theta(x) = (basis (x) I_n)^T Q (basis (x) I_n) with Q >= 0, and
emits one equality row per (entry, monomial) coefficient.  Decision
unknowns become free variables of the SDP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .polyalg import (
    Polynomial,
    PolyMatrix,
    VarEnv,
    count_monomials,
    grlex_key,
    monomial_basis,
)
from .sdpcore.problem import SdpProblem, SdpRow

__all__ = [
    "LinExpr",
    "APoly",
    "AMatrix",
    "DecisionPolyMatrix",
    "SosConstraint",
    "SosProgram",
    "CompiledMap",
    "compile_program",
]


class LinExpr:
    """Affine form in scalar unknowns: const + sum coef_u * u."""

    __slots__ = ("const", "terms")

    def __init__(self, const: float = 0.0, terms: dict[int, float] | None = None):
        self.const = float(const)
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0.0}

    @property
    def is_zero(self) -> bool:
        return self.const == 0.0 and not self.terms

    def __add__(self, other: "LinExpr") -> "LinExpr":
        terms = dict(self.terms)
        for k, v in other.terms.items():
            w = terms.get(k, 0.0) + v
            if w == 0.0:
                terms.pop(k, None)
            else:
                terms[k] = w
        return LinExpr(self.const + other.const, terms)

    def __neg__(self) -> "LinExpr":
        return LinExpr(-self.const, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "LinExpr") -> "LinExpr":
        return self + (-other)

    def scale(self, c: float) -> "LinExpr":
        if c == 0.0:
            return LinExpr()
        return LinExpr(self.const * c, {k: v * c for k, v in self.terms.items()})

    def value(self, values) -> float:
        return self.const + sum(c * values[k] for k, c in self.terms.items())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LinExpr)
            and self.const == other.const
            and self.terms == other.terms
        )

    def __repr__(self) -> str:
        return f"LinExpr({self.const}, {self.terms})"


class APoly:
    """Polynomial whose coefficients are affine in decision unknowns."""

    __slots__ = ("env", "terms")

    def __init__(self, env: VarEnv, terms: dict[tuple[int, ...], LinExpr] | None = None):
        self.env = env
        self.terms = {e: c for e, c in (terms or {}).items() if not c.is_zero}

    @classmethod
    def from_poly(cls, p: Polynomial) -> "APoly":
        return cls(p.env, {e: LinExpr(c) for e, c in p.terms.items()})

    @classmethod
    def zero(cls, env: VarEnv) -> "APoly":
        return cls(env)

    def __add__(self, other: "APoly") -> "APoly":
        terms = dict(self.terms)
        for e, c in other.terms.items():
            s = terms.get(e)
            s = c if s is None else s + c
            if s.is_zero:
                terms.pop(e, None)
            else:
                terms[e] = s
        return APoly(self.env, terms)

    def __neg__(self) -> "APoly":
        return APoly(self.env, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "APoly") -> "APoly":
        return self + (-other)

    def mul_poly(self, p: Polynomial) -> "APoly":
        out: dict[tuple[int, ...], LinExpr] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in p.terms.items():
                ee = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(ee)
                add = c1.scale(c2)
                s = add if s is None else s + add
                if s.is_zero:
                    out.pop(ee, None)
                else:
                    out[ee] = s
        return APoly(self.env, out)

    def scale(self, c: float) -> "APoly":
        return APoly(self.env, {e: v.scale(c) for e, v in self.terms.items()})

    def diff(self, var: int) -> "APoly":
        out: dict[tuple[int, ...], LinExpr] = {}
        for exps, c in self.terms.items():
            e = exps[var]
            if e == 0:
                continue
            ee = list(exps)
            ee[var] = e - 1
            key = tuple(ee)
            add = c.scale(float(e))
            s = out.get(key)
            s = add if s is None else s + add
            if not s.is_zero:
                out[key] = s
            else:
                out.pop(key, None)
        return APoly(self.env, out)

    def subs_const(self, mapping: Mapping[int, float]) -> "APoly":
        """Substitute variables by numeric constants."""
        out: dict[tuple[int, ...], LinExpr] = {}
        for exps, c in self.terms.items():
            factor = 1.0
            ee = list(exps)
            for var, val in mapping.items():
                e = exps[var]
                if e:
                    factor *= float(val) ** e
                    ee[var] = 0
            if factor == 0.0:
                continue
            key = tuple(ee)
            add = c.scale(factor)
            s = out.get(key)
            s = add if s is None else s + add
            if s.is_zero:
                out.pop(key, None)
            else:
                out[key] = s
        return APoly(self.env, out)

    def rename(self, mapping: Mapping[int, int]) -> "APoly":
        out: dict[tuple[int, ...], LinExpr] = {}
        for exps, c in self.terms.items():
            ee = [0] * len(exps)
            for a, e in enumerate(exps):
                ee[mapping.get(a, a)] += e
            key = tuple(ee)
            s = out.get(key)
            s = c if s is None else s + c
            if s.is_zero:
                out.pop(key, None)
            else:
                out[key] = s
        return APoly(self.env, out)

    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def support_vars(self) -> set[int]:
        used: set[int] = set()
        for exps in self.terms:
            for i, e in enumerate(exps):
                if e:
                    used.add(i)
        return used

    def coefficient(self, exps: tuple[int, ...]) -> LinExpr:
        return self.terms.get(tuple(exps), LinExpr())

    def with_values(self, values) -> Polynomial:
        return Polynomial(self.env, {e: c.value(values) for e, c in self.terms.items()})

    def as_polynomial(self) -> Polynomial:
        for c in self.terms.values():
            if c.terms:
                raise ValueError("polynomial still depends on unknowns")
        return Polynomial(self.env, {e: c.const for e, c in self.terms.items()})


class AMatrix:
    """Matrix of affine-coefficient polynomials."""

    __slots__ = ("env", "entries", "rows", "cols")

    def __init__(self, env: VarEnv, entries: Sequence[Sequence[APoly]]):
        self.env = env
        self.entries = [list(row) for row in entries]
        self.rows = len(self.entries)
        self.cols = len(self.entries[0]) if self.rows else 0

    @classmethod
    def from_poly_matrix(cls, m: PolyMatrix) -> "AMatrix":
        return cls(m.env, [[APoly.from_poly(p) for p in row] for row in m.entries])

    @classmethod
    def zeros(cls, env: VarEnv, rows: int, cols: int) -> "AMatrix":
        return cls(env, [[APoly.zero(env) for _ in range(cols)] for _ in range(rows)])

    def __add__(self, other: "AMatrix") -> "AMatrix":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("dimension mismatch")
        return AMatrix(
            self.env,
            [
                [a + b for a, b in zip(ra, rb)]
                for ra, rb in zip(self.entries, other.entries)
            ],
        )

    def __sub__(self, other: "AMatrix") -> "AMatrix":
        return self + other.scale(-1.0)

    def __neg__(self) -> "AMatrix":
        return self.scale(-1.0)

    def scale(self, c: float) -> "AMatrix":
        return AMatrix(self.env, [[p.scale(c) for p in row] for row in self.entries])

    def mul_poly(self, g: Polynomial) -> "AMatrix":
        return AMatrix(self.env, [[p.mul_poly(g) for p in row] for row in self.entries])

    def lmul(self, m: PolyMatrix) -> "AMatrix":
        """m @ self with a constant polynomial matrix on the left."""
        if m.cols != self.rows:
            raise ValueError("dimension mismatch")
        out = []
        for i in range(m.rows):
            row = []
            for j in range(self.cols):
                acc = APoly.zero(self.env)
                for k in range(m.cols):
                    acc = acc + self.entries[k][j].mul_poly(m.entries[i][k])
                row.append(acc)
            out.append(row)
        return AMatrix(self.env, out)

    def rmul(self, m: PolyMatrix) -> "AMatrix":
        """self @ m with a constant polynomial matrix on the right."""
        if self.cols != m.rows:
            raise ValueError("dimension mismatch")
        out = []
        for i in range(self.rows):
            row = []
            for j in range(m.cols):
                acc = APoly.zero(self.env)
                for k in range(self.cols):
                    acc = acc + self.entries[i][k].mul_poly(m.entries[k][j])
                row.append(acc)
            out.append(row)
        return AMatrix(self.env, out)

    def transpose(self) -> "AMatrix":
        return AMatrix(
            self.env,
            [[self.entries[j][i] for j in range(self.rows)] for i in range(self.cols)],
        )

    def he(self) -> "AMatrix":
        if self.rows != self.cols:
            raise ValueError("he() requires a square matrix")
        return self + self.transpose()

    def diff(self, var: int) -> "AMatrix":
        return AMatrix(self.env, [[p.diff(var) for p in row] for row in self.entries])

    def subs_const(self, mapping: Mapping[int, float]) -> "AMatrix":
        return AMatrix(
            self.env, [[p.subs_const(mapping) for p in row] for row in self.entries]
        )

    def rename(self, mapping: Mapping[int, int]) -> "AMatrix":
        return AMatrix(
            self.env, [[p.rename(mapping) for p in row] for row in self.entries]
        )

    def minus_scaled_identity(self, c: float) -> "AMatrix":
        if self.rows != self.cols:
            raise ValueError("needs a square matrix")
        if c == 0.0:
            return self
        out = [list(row) for row in self.entries]
        eye = APoly.from_poly(Polynomial.constant(self.env, c))
        for i in range(self.rows):
            out[i][i] = out[i][i] - eye
        return AMatrix(self.env, out)

    @classmethod
    def block(cls, grid: Sequence[Sequence["AMatrix"]]) -> "AMatrix":
        env = grid[0][0].env
        rows: list[list[APoly]] = []
        for band in grid:
            height = band[0].rows
            for m in band:
                if m.rows != height:
                    raise ValueError("inconsistent block grid")
            for i in range(height):
                rows.append([p for m in band for p in m.entries[i]])
        return cls(env, rows)

    def is_symmetric(self) -> bool:
        if self.rows != self.cols:
            return False
        for i in range(self.rows):
            for j in range(i):
                a, b = self.entries[i][j], self.entries[j][i]
                if (a - b).terms:
                    return False
        return True

    def degree(self) -> int:
        return max((p.degree() for row in self.entries for p in row), default=0)

    def support_vars(self) -> set[int]:
        used: set[int] = set()
        for row in self.entries:
            for p in row:
                used |= p.support_vars()
        return used

    def with_values(self, values) -> PolyMatrix:
        return PolyMatrix(
            self.env,
            [[p.with_values(values) for p in row] for row in self.entries],
            symmetric=False,
        )


@dataclass
class DecisionPolyMatrix:
    """A polynomial matrix whose coefficients are fresh scalar unknowns."""

    pid: int
    name: str
    rows: int
    cols: int
    symmetric: bool
    var_ids: tuple[int, ...]
    degree: int
    monomials: list[tuple[int, ...]]
    uids: dict[tuple[int, int, int], int]
    first_uid: int

    @property
    def n_unknowns(self) -> int:
        return len(self.uids)

    def unknown(self, i: int, j: int, mono_index: int) -> int:
        if self.symmetric and i > j:
            i, j = j, i
        return self.uids[(i, j, mono_index)]

    def as_matrix(self, env: VarEnv) -> AMatrix:
        grid = []
        for i in range(self.rows):
            row = []
            for j in range(self.cols):
                terms = {
                    m: LinExpr(0.0, {self.unknown(i, j, k): 1.0})
                    for k, m in enumerate(self.monomials)
                }
                row.append(APoly(env, terms))
            grid.append(row)
        return AMatrix(env, grid)


@dataclass
class SosConstraint:
    """expr - sum M_i g_i - sum N_j h_j - margin*I must be SOS."""

    expr: AMatrix
    domain: list[tuple[Polynomial, DecisionPolyMatrix]]
    equalities: list[tuple[Polynomial, DecisionPolyMatrix]]
    margin: float
    name: str = ""


class SosProgram:
    """A set of decision polynomial matrices plus SOS constraints."""

    def __init__(self, env: VarEnv):
        self.env = env
        self.decisions: list[DecisionPolyMatrix] = []
        self.constraints: list[SosConstraint] = []
        self.n_unknowns = 0

    def declare_decision(
        self,
        size: int | tuple[int, int],
        symmetric: bool,
        var_ids: Sequence[int],
        degree: int,
        name: str = "",
    ) -> DecisionPolyMatrix:
        """Allocate a decision matrix with one unknown per (entry, monomial)."""
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        rows, cols = (size, size) if isinstance(size, int) else size
        if symmetric and rows != cols:
            raise ValueError("symmetric decision matrices must be square")
        monos = monomial_basis(self.env, var_ids, degree)
        uids: dict[tuple[int, int, int], int] = {}
        uid = self.n_unknowns
        for i in range(rows):
            jstart = i if symmetric else 0
            for j in range(jstart, cols):
                for k in range(len(monos)):
                    uids[(i, j, k)] = uid
                    uid += 1
        dec = DecisionPolyMatrix(
            pid=len(self.decisions),
            name=name or f"D{len(self.decisions)}",
            rows=rows,
            cols=cols,
            symmetric=symmetric,
            var_ids=tuple(var_ids),
            degree=degree,
            monomials=monos,
            uids=uids,
            first_uid=self.n_unknowns,
        )
        self.n_unknowns = uid
        self.decisions.append(dec)
        return dec

    def add_sos_constraint(
        self,
        expr: AMatrix,
        domain: Sequence[tuple[Polynomial, DecisionPolyMatrix]] = (),
        equalities: Sequence[tuple[Polynomial, DecisionPolyMatrix]] = (),
        margin: float = 0.0,
        name: str = "",
    ) -> int:
        if expr.rows != expr.cols:
            raise ValueError("SOS constraints need square expressions")
        if not expr.is_symmetric():
            raise ValueError("SOS constraints need symmetric expressions")
        for g, mult in list(domain) + list(equalities):
            if mult.rows != expr.rows or mult.cols != expr.cols:
                raise ValueError(
                    f"multiplier {mult.name} has size {mult.rows}, expected {expr.rows}"
                )
            if not mult.symmetric:
                raise ValueError(f"multiplier {mult.name} must be symmetric")
            if g.is_zero:
                raise ValueError("domain generators must be nonzero")
        self.constraints.append(
            SosConstraint(expr, list(domain), list(equalities), float(margin), name)
        )
        return len(self.constraints) - 1

    def compile(self) -> tuple[SdpProblem, "CompiledMap"]:
        return compile_program(self)


@dataclass
class CompiledBlock:
    index: int
    size: int
    matrix_size: int
    basis: list[tuple[int, ...]]
    constraint: int
    role: str  # "main" or "mult"
    owner_pid: int | None = None


@dataclass
class CompiledMap:
    """Inverse bookkeeping between a program and its compiled SDP."""

    env: VarEnv
    program: SosProgram
    blocks: list[CompiledBlock]
    main_block_of: dict[int, int]
    mult_block_of: dict[int, int]
    n_unknowns: int

    def extract(self, sol, dec: DecisionPolyMatrix) -> PolyMatrix:
        """Numeric PolyMatrix for a decision matrix from a feasible solution."""
        if sol.status != "feasible":
            raise ValueError(f"cannot extract values from a {sol.status} solution")
        return self.extract_any(sol.free, dec)

    def extract_any(self, values, dec: DecisionPolyMatrix) -> PolyMatrix:
        entries = []
        for i in range(dec.rows):
            row = []
            for j in range(dec.cols):
                terms = {
                    m: values[dec.unknown(i, j, k)]
                    for k, m in enumerate(dec.monomials)
                }
                row.append(Polynomial(self.env, terms))
            entries.append(row)
        return PolyMatrix(self.env, entries, symmetric=dec.symmetric)

    def gram_poly(self, sol, block_index: int) -> PolyMatrix:
        """(basis (x) I)^T Q (basis (x) I) as a numeric polynomial matrix."""
        info = self.blocks[block_index]
        q = sol.blocks[block_index]
        n = info.matrix_size
        entries = []
        for i in range(n):
            row = []
            for j in range(n):
                terms: dict[tuple[int, ...], float] = {}
                for a, ma in enumerate(info.basis):
                    for b, mb in enumerate(info.basis):
                        key = tuple(x + y for x, y in zip(ma, mb))
                        terms[key] = terms.get(key, 0.0) + q[a * n + i, b * n + j]
                row.append(Polynomial(self.env, terms))
            entries.append(row)
        return PolyMatrix(self.env, entries)

    def combined_expression(self, cid: int, values) -> PolyMatrix:
        """Constraint's expr - multipliers - margin*I with unknowns substituted."""
        c = self.program.constraints[cid]
        acc = c.expr
        for g, mult in c.domain:
            acc = acc - mult.as_matrix(self.env).mul_poly(g)
        for h, mult in c.equalities:
            acc = acc - mult.as_matrix(self.env).mul_poly(h)
        acc = acc.minus_scaled_identity(c.margin)
        return acc.with_values(values)


def _sos_combination(program: SosProgram, c: SosConstraint) -> AMatrix:
    acc = c.expr
    for g, mult in c.domain:
        acc = acc - mult.as_matrix(program.env).mul_poly(g)
    for h, mult in c.equalities:
        acc = acc - mult.as_matrix(program.env).mul_poly(h)
    return acc.minus_scaled_identity(c.margin)


def _pair_table(
    basis: list[tuple[int, ...]], span: list[tuple[int, ...]]
) -> dict[tuple[int, ...], list[tuple[int, int]]]:
    index = {m: a for a, m in enumerate(basis)}
    table: dict[tuple[int, ...], list[tuple[int, int]]] = {m: [] for m in span}
    for a, ma in enumerate(basis):
        for b, mb in enumerate(basis):
            key = tuple(x + y for x, y in zip(ma, mb))
            table[key].append((a, b))
    return table


def _gram_triplets(
    pairs: list[tuple[int, int]], n: int, i: int, j: int
) -> list[tuple[int, int, float]]:
    acc: dict[tuple[int, int], float] = {}
    for a, b in pairs:
        p = a * n + i
        q = b * n + j
        if p == q:
            acc[(p, p)] = acc.get((p, p), 0.0) + 1.0
        else:
            key = (p, q) if p < q else (q, p)
            acc[key] = acc.get(key, 0.0) + 0.5
    return [(p, q, v) for (p, q), v in sorted(acc.items())]


def compile_program(program: SosProgram) -> tuple[SdpProblem, CompiledMap]:
    """Gram-parametrize every SOS object and emit the coefficient-match rows."""
    if not program.constraints:
        raise ValueError("program has no constraints")
    env = program.env
    blocks: list[CompiledBlock] = []
    block_dims: list[int] = []
    rows: list[SdpRow] = []
    main_block_of: dict[int, int] = {}
    mult_block_of: dict[int, int] = {}
    referenced: set[int] = set()

    def new_block(size, matrix_size, basis, cid, role, owner=None) -> int:
        idx = len(block_dims)
        block_dims.append(size)
        blocks.append(CompiledBlock(idx, size, matrix_size, basis, cid, role, owner))
        return idx

    def coeff_rows(matrix: AMatrix, block: int, basis, span, pair_table):
        """Rows equating matrix coefficients to the Gram linear forms."""
        n = matrix.rows
        for i in range(n):
            for j in range(i, n):
                poly = matrix.entries[i][j]
                for m in span:
                    coeff = poly.coefficient(m)
                    for u in coeff.terms:
                        referenced.add(u)
                    trip = _gram_triplets(pair_table[m], n, i, j)
                    free = {u: -c for u, c in coeff.terms.items()}
                    rows.append(SdpRow({block: trip}, free, coeff.const))

    for cid, cons in enumerate(program.constraints):
        combined = _sos_combination(program, cons)
        support = combined.support_vars()
        for _, mult in cons.domain:
            support |= set(mult.var_ids)
        var_ids = sorted(support)
        deg = combined.degree()
        deg += deg % 2
        half = deg // 2
        basis = monomial_basis(env, var_ids, half)
        span = monomial_basis(env, var_ids, deg)
        n = combined.rows
        block = new_block(n * len(basis), n, basis, cid, "main")
        main_block_of[cid] = block
        coeff_rows(combined, block, basis, span, _pair_table(basis, span))

        for g, mult in cons.domain:
            if mult.pid in mult_block_of:
                continue  # already tied SOS elsewhere
            mdeg = mult.degree
            mdeg += mdeg % 2
            mhalf = mdeg // 2
            mbasis = monomial_basis(env, mult.var_ids, mhalf)
            mspan = monomial_basis(env, mult.var_ids, mdeg)
            mblock = new_block(mult.rows * len(mbasis), mult.rows, mbasis, cid, "mult", mult.pid)
            mult_block_of[mult.pid] = mblock
            mmat = mult.as_matrix(env)
            coeff_rows(mmat, mblock, mbasis, mspan, _pair_table(mbasis, mspan))
        for _, mult in cons.equalities:
            for uid in range(mult.first_uid, mult.first_uid + mult.n_unknowns):
                referenced.add(uid)

    for dec in program.decisions:
        unknowns = set(range(dec.first_uid, dec.first_uid + dec.n_unknowns))
        if dec.n_unknowns and not (unknowns & referenced):
            raise ValueError(f"decision matrix {dec.name} is not referenced by any constraint")

    problem = SdpProblem(block_dims, program.n_unknowns, rows).canonical()
    cmap = CompiledMap(
        env=env,
        program=program,
        blocks=blocks,
        main_block_of=main_block_of,
        mult_block_of=mult_block_of,
        n_unknowns=program.n_unknowns,
    )
    return problem, cmap
