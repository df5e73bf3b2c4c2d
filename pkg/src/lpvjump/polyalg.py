"""Sparse multivariate polynomials and symmetric polynomial matrices.

Variables live in a :class:`VarEnv` with a fixed naming convention:
``t`` is the clock, ``p1..pN`` are scheduling parameters and ``q1..qN``
are fresh copies of the parameters (used when a condition quantifies
over two independent parameter values).  Polynomials are stored as a
map from exponent tuples to float coefficients; zero coefficients are
never stored.  The monomial order is graded lexicographic (total degree
first, then earlier variables first), fixed globally so every compiled
problem is deterministic.

All values are immutable after construction; every operation returns a
new object.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

__all__ = [
    "VarEnv",
    "Polynomial",
    "PolyMatrix",
    "ParseError",
    "monomial_basis",
    "count_monomials",
    "grlex_key",
]

CLOCK = "clock"
PARAM = "param"
COPY = "copy"


class VarEnv:
    """An ordered set of named variables shared by a family of polynomials."""

    __slots__ = ("names", "kinds", "_index")

    def __init__(self, names: Sequence[str], kinds: Sequence[str]):
        if len(names) != len(kinds):
            raise ValueError("names and kinds must have equal length")
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        self.names = tuple(names)
        self.kinds = tuple(kinds)
        self._index = {n: i for i, n in enumerate(self.names)}

    @classmethod
    def for_params(cls, n_params: int) -> "VarEnv":
        """Standard environment: clock t, parameters p1..pN, copies q1..qN."""
        names = ["t"]
        kinds = [CLOCK]
        for i in range(1, n_params + 1):
            names.append(f"p{i}")
            kinds.append(PARAM)
        for i in range(1, n_params + 1):
            names.append(f"q{i}")
            kinds.append(COPY)
        return cls(names, kinds)

    @property
    def nvars(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    @property
    def clock(self) -> int:
        return self.kinds.index(CLOCK)

    @property
    def params(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.kinds) if k == PARAM)

    @property
    def copies(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.kinds) if k == COPY)

    def copy_of(self, param_var: int) -> int:
        """Index of the copy variable paired with a parameter variable."""
        params = self.params
        copies = self.copies
        return copies[params.index(param_var)]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VarEnv)
            and self.names == other.names
            and self.kinds == other.kinds
        )

    def __hash__(self) -> int:
        return hash((self.names, self.kinds))

    def __repr__(self) -> str:
        return f"VarEnv({', '.join(self.names)})"


def grlex_key(exps: tuple[int, ...]):
    """Sort key for graded-lex order: degree first, earlier variables first."""
    return (sum(exps), tuple(-e for e in exps))


def count_monomials(nvars: int, degree: int) -> int:
    return math.comb(nvars + degree, degree)


def monomial_basis(env: VarEnv, var_ids: Sequence[int], degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree <= degree supported on var_ids.

    Tuples have the full arity of the environment (zeros off the chosen
    variables) and come in graded-lex order.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    var_ids = list(var_ids)
    out: list[tuple[int, ...]] = []

    def rec(pos: int, remaining: int, current: list[int]):
        if pos == len(var_ids):
            exps = [0] * env.nvars
            for v, e in zip(var_ids, current):
                exps[v] = e
            out.append(tuple(exps))
            return
        for e in range(remaining + 1):
            rec(pos + 1, remaining - e, current + [e])

    rec(0, degree, [])
    out.sort(key=grlex_key)
    return out


class ParseError(ValueError):
    """Raised on malformed polynomial expressions; carries the position."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class Polynomial:
    """Sparse multivariate polynomial with float coefficients."""

    __slots__ = ("env", "terms")

    def __init__(self, env: VarEnv, terms: Mapping[tuple[int, ...], float] | None = None):
        self.env = env
        clean: dict[tuple[int, ...], float] = {}
        if terms:
            for exps, coef in terms.items():
                if len(exps) != env.nvars:
                    raise ValueError("exponent tuple arity does not match environment")
                c = float(coef)
                if c != 0.0:
                    clean[tuple(int(e) for e in exps)] = c
        self.terms = clean

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, env: VarEnv) -> "Polynomial":
        return cls(env)

    @classmethod
    def constant(cls, env: VarEnv, c: float) -> "Polynomial":
        return cls(env, {tuple([0] * env.nvars): float(c)})

    @classmethod
    def variable(cls, env: VarEnv, var: int) -> "Polynomial":
        exps = [0] * env.nvars
        exps[var] = 1
        return cls(env, {tuple(exps): 1.0})

    # -- queries -----------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0 by convention."""
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def degree_in(self, var: int) -> int:
        if not self.terms:
            return 0
        return max(e[var] for e in self.terms)

    def coefficient(self, exps: tuple[int, ...]) -> float:
        return self.terms.get(tuple(exps), 0.0)

    def constant_term(self) -> float:
        return self.terms.get(tuple([0] * self.env.nvars), 0.0)

    def support_vars(self) -> tuple[int, ...]:
        used = [False] * self.env.nvars
        for exps in self.terms:
            for i, e in enumerate(exps):
                if e:
                    used[i] = True
        return tuple(i for i, u in enumerate(used) if u)

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "Polynomial"):
        if self.env != other.env:
            raise ValueError("polynomials from different variable environments")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.env, other)
        self._check(other)
        terms = dict(self.terms)
        for exps, c in other.terms.items():
            v = terms.get(exps, 0.0) + c
            if v == 0.0:
                terms.pop(exps, None)
            else:
                terms[exps] = v
        return Polynomial(self.env, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.env, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.env, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            c = float(other)
            if c == 0.0:
                return Polynomial.zero(self.env)
            return Polynomial(self.env, {e: c * v for e, v in self.terms.items()})
        self._check(other)
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                ee = tuple(a + b for a, b in zip(e1, e2))
                v = out.get(ee, 0.0) + c1 * c2
                if v == 0.0:
                    out.pop(ee, None)
                else:
                    out[ee] = v
        return Polynomial(self.env, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a nonnegative integer")
        result = Polynomial.constant(self.env, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.env == other.env
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.env, frozenset(self.terms.items())))

    # -- calculus and substitution ------------------------------------------

    def diff(self, var: int) -> "Polynomial":
        """Formal partial derivative with respect to one variable."""
        out: dict[tuple[int, ...], float] = {}
        for exps, c in self.terms.items():
            e = exps[var]
            if e == 0:
                continue
            ee = list(exps)
            ee[var] = e - 1
            out[tuple(ee)] = c * e
        return Polynomial(self.env, out)

    def subs(self, mapping: Mapping[int, "Polynomial | float"]) -> "Polynomial":
        """Replace variables by polynomials (or constants)."""
        repl: dict[int, Polynomial] = {}
        for var, val in mapping.items():
            repl[var] = (
                val if isinstance(val, Polynomial) else Polynomial.constant(self.env, val)
            )
        result = Polynomial.zero(self.env)
        for exps, c in self.terms.items():
            term = Polynomial.constant(self.env, c)
            rest = [0] * self.env.nvars
            for var, e in enumerate(exps):
                if e == 0:
                    continue
                if var in repl:
                    term = term * (repl[var] ** e)
                else:
                    rest[var] = e
            if any(rest):
                term = term * Polynomial(self.env, {tuple(rest): 1.0})
            result = result + term
        return result

    def rename(self, mapping: Mapping[int, int]) -> "Polynomial":
        """Substitute variables by other variables (e.g. parameters -> copies)."""
        return self.subs({a: Polynomial.variable(self.env, b) for a, b in mapping.items()})

    def eval(self, point: Mapping[int, float] | Sequence[float]) -> float:
        """Evaluate at a point given as a full vector or a {var: value} map."""
        if isinstance(point, Mapping):
            for var in self.support_vars():
                if var not in point:
                    raise ValueError(
                        f"missing assignment for variable {self.env.names[var]!r}"
                    )
            vals = [float(point.get(i, 0.0)) for i in range(self.env.nvars)]
        else:
            vals = [float(v) for v in point]
            if len(vals) != self.env.nvars:
                raise ValueError("point arity does not match environment")
        total = 0.0
        for exps, c in self.terms.items():
            m = c
            for v, e in zip(vals, exps):
                if e:
                    m *= v**e
            total += m
        return total

    # -- text ----------------------------------------------------------------

    def render(self) -> str:
        """Deterministic text form; parse(render(p)) reproduces p exactly."""
        if not self.terms:
            return "0"
        parts: list[str] = []
        for exps in sorted(self.terms, key=grlex_key):
            c = self.terms[exps]
            mono = "*".join(
                self.env.names[i] if e == 1 else f"{self.env.names[i]}^{e}"
                for i, e in enumerate(exps)
                if e
            )
            if not mono:
                body = repr(abs(c))
            elif abs(c) == 1.0:
                body = mono
            else:
                body = f"{abs(c)!r}*{mono}"
            if not parts:
                parts.append(body if c > 0 else f"-{body}")
            else:
                parts.append(f"+ {body}" if c > 0 else f"- {body}")
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"Polynomial({self.render()})"

    @classmethod
    def parse(cls, text: str, env: VarEnv) -> "Polynomial":
        """Parse +,-,*,^, parentheses, decimal literals and declared names."""
        return _Parser(text, env).parse()


class _Parser:
    """Recursive-descent parser for the polynomial expression grammar."""

    def __init__(self, text: str, env: VarEnv):
        self.text = text
        self.env = env
        self.pos = 0

    def parse(self) -> Polynomial:
        value = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise ParseError(f"unexpected character {self.text[self.pos]!r}", self.pos)
        return value

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expr(self) -> Polynomial:
        sign = 1.0
        ch = self._peek()
        if ch in "+-":
            self.pos += 1
            sign = -1.0 if ch == "-" else 1.0
        value = self._term() * sign
        while True:
            ch = self._peek()
            if ch == "+":
                self.pos += 1
                value = value + self._term()
            elif ch == "-":
                self.pos += 1
                value = value - self._term()
            else:
                return value

    def _term(self) -> Polynomial:
        value = self._factor()
        while self._peek() == "*":
            self.pos += 1
            value = value * self._factor()
        return value

    def _factor(self) -> Polynomial:
        base = self._atom()
        if self._peek() == "^":
            self.pos += 1
            self._skip_ws()
            start = self.pos
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            if self.pos == start or (
                self.pos < len(self.text) and self.text[self.pos] == "."
            ):
                raise ParseError("exponent must be a nonnegative integer", start)
            return base ** int(self.text[start : self.pos])
        return base

    def _atom(self) -> Polynomial:
        ch = self._peek()
        start = self.pos
        if ch == "(":
            self.pos += 1
            value = self._expr()
            if self._peek() != ")":
                raise ParseError("expected ')'", self.pos)
            self.pos += 1
            return value
        if ch.isdigit() or ch == ".":
            return Polynomial.constant(self.env, self._number())
        if ch.isalpha() or ch == "_":
            while self.pos < len(self.text) and (
                self.text[self.pos].isalnum() or self.text[self.pos] == "_"
            ):
                self.pos += 1
            name = self.text[start : self.pos]
            try:
                var = self.env.index(name)
            except KeyError:
                raise ParseError(f"unknown identifier {name!r}", start) from None
            return Polynomial.variable(self.env, var)
        raise ParseError("expected a number, variable or '('", self.pos)

    def _number(self) -> float:
        self._skip_ws()
        start = self.pos
        n = len(self.text)
        while self.pos < n and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos < n and self.text[self.pos] == ".":
            self.pos += 1
            while self.pos < n and self.text[self.pos].isdigit():
                self.pos += 1
        if self.pos < n and self.text[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < n and self.text[self.pos] in "+-":
                self.pos += 1
            if self.pos < n and self.text[self.pos].isdigit():
                while self.pos < n and self.text[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark
        lit = self.text[start : self.pos]
        if lit in ("", "."):
            raise ParseError("malformed number", start)
        return float(lit)


class PolyMatrix:
    """Dense matrix of polynomials over a shared environment."""

    __slots__ = ("env", "rows", "cols", "entries", "symmetric")

    def __init__(
        self,
        env: VarEnv,
        entries: Sequence[Sequence[Polynomial]],
        symmetric: bool = False,
    ):
        self.env = env
        self.entries = tuple(tuple(row) for row in entries)
        self.rows = len(self.entries)
        self.cols = len(self.entries[0]) if self.rows else 0
        for row in self.entries:
            if len(row) != self.cols:
                raise ValueError("ragged matrix")
            for p in row:
                if p.env != env:
                    raise ValueError("entries from different variable environments")
        self.symmetric = bool(symmetric)
        if self.symmetric:
            if self.rows != self.cols:
                raise ValueError("symmetric flag requires a square matrix")
            for i in range(self.rows):
                for j in range(i):
                    if self.entries[i][j] != self.entries[j][i]:
                        raise ValueError("matrix marked symmetric is not")

    # -- constructors --------------------------------------------------------

    @classmethod
    def zeros(cls, env: VarEnv, rows: int, cols: int) -> "PolyMatrix":
        z = Polynomial.zero(env)
        return cls(env, [[z] * cols for _ in range(rows)], symmetric=rows == cols)

    @classmethod
    def identity(cls, env: VarEnv, n: int) -> "PolyMatrix":
        one = Polynomial.constant(env, 1.0)
        z = Polynomial.zero(env)
        return cls(
            env,
            [[one if i == j else z for j in range(n)] for i in range(n)],
            symmetric=True,
        )

    @classmethod
    def from_strings(
        cls, env: VarEnv, rows: Sequence[Sequence[str]], symmetric: bool = False
    ) -> "PolyMatrix":
        return cls(
            env,
            [[Polynomial.parse(s, env) for s in row] for row in rows],
            symmetric=symmetric,
        )

    @classmethod
    def from_numeric(cls, env: VarEnv, array) -> "PolyMatrix":
        entries = [
            [Polynomial.constant(env, float(v)) for v in row] for row in array
        ]
        m = cls(env, entries)
        return m

    @classmethod
    def block(cls, grid: Sequence[Sequence["PolyMatrix"]]) -> "PolyMatrix":
        env = grid[0][0].env
        rows: list[list[Polynomial]] = []
        for band in grid:
            height = band[0].rows
            for m in band:
                if m.rows != height or m.env != env:
                    raise ValueError("inconsistent block grid")
            for i in range(height):
                rows.append([p for m in band for p in m.entries[i]])
        return cls(env, rows)

    # -- structure -----------------------------------------------------------

    def entry(self, i: int, j: int) -> Polynomial:
        return self.entries[i][j]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def _check_same(self, other: "PolyMatrix"):
        if self.env != other.env:
            raise ValueError("matrices from different variable environments")
        if self.shape != other.shape:
            raise ValueError(f"dimension mismatch {self.shape} vs {other.shape}")

    def map(self, fn: Callable[[Polynomial], Polynomial], symmetric=None) -> "PolyMatrix":
        sym = self.symmetric if symmetric is None else symmetric
        return PolyMatrix(
            self.env, [[fn(p) for p in row] for row in self.entries], symmetric=sym
        )

    # -- algebra -------------------------------------------------------------

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        self._check_same(other)
        return PolyMatrix(
            self.env,
            [
                [a + b for a, b in zip(ra, rb)]
                for ra, rb in zip(self.entries, other.entries)
            ],
            symmetric=self.symmetric and other.symmetric,
        )

    def __sub__(self, other: "PolyMatrix") -> "PolyMatrix":
        return self + other.scale(-1.0)

    def scale(self, c: float | Polynomial) -> "PolyMatrix":
        return self.map(lambda p: p * c)

    def __matmul__(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.env != other.env:
            raise ValueError("matrices from different variable environments")
        if self.cols != other.rows:
            raise ValueError(f"dimension mismatch {self.shape} @ {other.shape}")
        z = Polynomial.zero(self.env)
        out = []
        for i in range(self.rows):
            row = []
            for j in range(other.cols):
                acc = z
                for k in range(self.cols):
                    acc = acc + self.entries[i][k] * other.entries[k][j]
                row.append(acc)
            out.append(row)
        return PolyMatrix(self.env, out)

    def transpose(self) -> "PolyMatrix":
        return PolyMatrix(
            self.env,
            [[self.entries[j][i] for j in range(self.rows)] for i in range(self.cols)],
            symmetric=self.symmetric,
        )

    def he(self) -> "PolyMatrix":
        """He[M] = M + M^T (requires a square matrix)."""
        if self.rows != self.cols:
            raise ValueError("he() requires a square matrix")
        t = self.transpose()
        out = [
            [a + b for a, b in zip(ra, rb)] for ra, rb in zip(self.entries, t.entries)
        ]
        return PolyMatrix(self.env, out, symmetric=True)

    def diff(self, var: int) -> "PolyMatrix":
        return self.map(lambda p: p.diff(var))

    def subs(self, mapping: Mapping[int, Polynomial | float]) -> "PolyMatrix":
        return self.map(lambda p: p.subs(mapping))

    def rename(self, mapping: Mapping[int, int]) -> "PolyMatrix":
        return self.map(lambda p: p.rename(mapping))

    def eval(self, point):
        """Numeric matrix at a point (numpy array)."""
        import numpy as np

        return np.array(
            [[p.eval(point) for p in row] for row in self.entries], dtype=float
        )

    def eval_many(self, points):
        """Batched evaluation: points (P, nvars) -> array (P, rows, cols).

        Monomial values are shared across entries, which makes dense grid
        sweeps cheap.
        """
        import numpy as np

        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.env.nvars:
            raise ValueError("points must have shape (P, nvars)")
        cache: dict[tuple[int, ...], object] = {}

        def mono(exps):
            v = cache.get(exps)
            if v is None:
                v = np.ones(pts.shape[0])
                for i, e in enumerate(exps):
                    if e:
                        v = v * pts[:, i] ** e
                cache[exps] = v
            return v

        out = np.zeros((pts.shape[0], self.rows, self.cols))
        for i, row in enumerate(self.entries):
            for j, p in enumerate(row):
                for exps, c in p.terms.items():
                    out[:, i, j] += c * mono(exps)
        return out

    def degree(self) -> int:
        return max((p.degree() for row in self.entries for p in row), default=0)

    def is_identity(self) -> bool:
        if self.rows != self.cols:
            return False
        one = Polynomial.constant(self.env, 1.0)
        z = Polynomial.zero(self.env)
        return all(
            self.entries[i][j] == (one if i == j else z)
            for i in range(self.rows)
            for j in range(self.cols)
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PolyMatrix)
            and self.env == other.env
            and self.entries == other.entries
        )

    def __repr__(self) -> str:
        body = "; ".join(
            ", ".join(p.render() for p in row) for row in self.entries
        )
        return f"PolyMatrix[{self.rows}x{self.cols}]({body})"
