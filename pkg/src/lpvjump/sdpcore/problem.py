"""Standard-form block SDP with equality constraints and free variables.

A problem holds PSD blocks X_b >= 0, a vector of free (sign-unconstrained)
variables z, and equality rows

    sum_b <A_kb, X_b> + c_k . z = b_k .

Coefficient matrices are symmetric and stored as upper triplets (i <= j,
value), with the convention that the full matrix carries the value at both
(i, j) and (j, i).  The objective is optional: feasibility problems are
solved in margin-maximization mode by the solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SdpRow", "SdpObjective", "SdpProblem", "SdpSolution", "check_solution"]


@dataclass
class SdpRow:
    """One equality row: block triplets, free-variable coefficients, rhs."""

    blocks: dict[int, list[tuple[int, int, float]]]
    free: dict[int, float]
    rhs: float

    def normalized(self) -> "SdpRow":
        blocks = {
            b: sorted(((min(i, j), max(i, j), float(v)) for i, j, v in trip))
            for b, trip in sorted(self.blocks.items())
            if trip
        }
        free = {k: float(v) for k, v in sorted(self.free.items()) if v != 0.0}
        return SdpRow(blocks, free, float(self.rhs))

    def inf_norm(self) -> float:
        m = max((abs(v) for trip in self.blocks.values() for _, _, v in trip), default=0.0)
        mf = max((abs(v) for v in self.free.values()), default=0.0)
        return max(m, mf)

    def trace_coefficient(self) -> float:
        """Coefficient picked up by a uniform +lambda*I shift of all blocks."""
        return sum(v for trip in self.blocks.values() for i, j, v in trip if i == j)


@dataclass
class SdpObjective:
    """Maximize sum_b <C_b, X_b> + q . z (+ offset)."""

    blocks: dict[int, list[tuple[int, int, float]]] = field(default_factory=dict)
    free: dict[int, float] = field(default_factory=dict)
    offset: float = 0.0


@dataclass
class SdpProblem:
    block_dims: list[int]
    n_free: int
    rows: list[SdpRow]
    objective: SdpObjective | None = None

    def __post_init__(self):
        for d in self.block_dims:
            if d < 1:
                raise ValueError("block dimensions must be >= 1")
        for k, row in enumerate(self.rows):
            for b, trip in row.blocks.items():
                if b < 0 or b >= len(self.block_dims):
                    raise ValueError(f"row {k}: bad block index {b}")
                n = self.block_dims[b]
                for i, j, _ in trip:
                    if not (0 <= i < n and 0 <= j < n):
                        raise ValueError(f"row {k}: entry out of block {b} bounds")
            for v in row.free:
                if v < 0 or v >= self.n_free:
                    raise ValueError(f"row {k}: bad free-variable index {v}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def canonical(self) -> "SdpProblem":
        return SdpProblem(
            list(self.block_dims),
            self.n_free,
            [r.normalized() for r in self.rows],
            self.objective,
        )


def triplets_to_dense(dim: int, trip: list[tuple[int, int, float]]) -> np.ndarray:
    a = np.zeros((dim, dim))
    for i, j, v in trip:
        a[i, j] += v
        if i != j:
            a[j, i] += v
    return a


@dataclass
class SdpSolution:
    status: str  # feasible | infeasible | marginal | numerical-failure
    margin: float | None
    obj_value: float | None
    blocks: list[np.ndarray]
    free: np.ndarray
    y: np.ndarray
    dual_blocks: list[np.ndarray]
    residuals: dict
    iterations: int
    trace: list[dict] = field(default_factory=list)
    message: str = ""


def row_value(problem: SdpProblem, row: SdpRow, blocks, free) -> float:
    total = 0.0
    for b, trip in row.blocks.items():
        x = blocks[b]
        for i, j, v in trip:
            total += v * x[i, j] * (1.0 if i == j else 2.0)
    for k, v in row.free.items():
        total += v * free[k]
    return total


def check_solution(problem: SdpProblem, sol: SdpSolution) -> dict:
    """Residual report on the original problem data.

    Returns primal/dual residuals (relative), the complementarity gap and
    the minimum eigenvalue of every primal block.
    """
    b = np.array([r.rhs for r in problem.rows])
    ax = np.array([row_value(problem, r, sol.blocks, sol.free) for r in problem.rows])
    nb = float(np.linalg.norm(b))
    primal = float(np.linalg.norm(ax - b)) / (1.0 + nb)

    obj = problem.objective
    cdense = {}
    if obj is not None:
        cdense = {
            bidx: triplets_to_dense(problem.block_dims[bidx], trip)
            for bidx, trip in obj.blocks.items()
        }
    # max convention: dual slack is S = A*(y) - C >= 0
    dual = 0.0
    cnorm = 0.0
    for bidx, dim in enumerate(problem.block_dims):
        c = cdense.get(bidx, np.zeros((dim, dim)))
        cnorm += float(np.linalg.norm(c) ** 2)
        acc = -c.copy()
        for k, row in enumerate(problem.rows):
            trip = row.blocks.get(bidx)
            if trip:
                acc += sol.y[k] * triplets_to_dense(dim, trip)
        if sol.dual_blocks:
            acc -= sol.dual_blocks[bidx]
        dual += float(np.linalg.norm(acc) ** 2)
    dual = float(np.sqrt(dual)) / (1.0 + float(np.sqrt(cnorm)))

    qfree = np.zeros(problem.n_free)
    if obj is not None:
        for k, v in obj.free.items():
            qfree[k] = v
    cy = np.zeros(problem.n_free)
    for k, row in enumerate(problem.rows):
        for idx, v in row.free.items():
            cy[idx] += v * sol.y[k]
    free_dual = float(np.linalg.norm(qfree - cy)) / (1.0 + float(np.linalg.norm(qfree)))

    gap = sum(
        float(np.tensordot(x, s)) for x, s in zip(sol.blocks, sol.dual_blocks)
    ) if sol.dual_blocks else float("nan")
    min_eigs = [float(np.linalg.eigvalsh(x)[0]) if x.size else 0.0 for x in sol.blocks]

    return {
        "primal": primal,
        "dual": dual,
        "free_dual": free_dual,
        "gap": gap,
        "min_block_eigenvalues": min_eigs,
    }
