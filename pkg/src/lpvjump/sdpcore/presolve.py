"""Presolve: row scaling and elimination of free variables.

Compiled SOS programs carry thousands of sign-unconstrained unknowns
(decision-matrix coefficients, equality multipliers).  Each one can be
pivoted out of the equality system with a well-scaled coefficient, which
shrinks the interior-point system dramatically and usually leaves a
pure-PSD problem.  Variables that carry objective weight, appear in the
caller's exclusion set, or have no safe pivot are kept.

Every elimination is recorded so that primal values and dual multipliers
for the original rows can be reconstructed afterwards.  Rows that reduce
to 0 = c are dropped when c is negligible and raised as a structural
infeasibility certificate otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problem import SdpObjective, SdpProblem, SdpRow

__all__ = ["PresolvedSdp", "StructuralInfeasibility", "presolve"]

PIVOT_TOL = 1e-8
DROP_TOL = 1e-9


class StructuralInfeasibility(Exception):
    """Raised when elimination reduces a row to 0 = c with c != 0."""

    def __init__(self, residual: float, row_index: int):
        super().__init__(
            f"equality rows are inconsistent (row {row_index} reduces to 0 = {residual:g})"
        )
        self.residual = residual
        self.row_index = row_index


@dataclass
class _WorkRow:
    blocks: dict[tuple[int, int, int], float]  # (block, i<=j) -> value
    free: dict[int, float]
    rhs: float
    origin: int


@dataclass
class _Event:
    uid: int
    pivot_rid: int
    pivot_coef: float
    pivot_blocks: dict[tuple[int, int, int], float]
    pivot_free: dict[int, float]
    pivot_rhs: float
    applied: list[tuple[int, float]]  # work-row id, alpha with row += alpha * pivot


@dataclass
class PresolvedSdp:
    problem: SdpProblem  # reduced problem
    free_map: dict[int, int]  # original free id -> reduced free id
    row_ids: list[int]  # reduced row index -> work-row id (= original row index)
    row_scale0: np.ndarray  # initial normalization factor per original row
    events: list[_Event]
    n_free_original: int
    n_rows_original: int
    dropped_rows: list[int] = field(default_factory=list)

    def recover_free(self, reduced_free: np.ndarray, blocks) -> np.ndarray:
        """Primal values for all original free variables."""
        full = np.zeros(self.n_free_original)
        for orig, red in self.free_map.items():
            full[orig] = reduced_free[red]
        for ev in reversed(self.events):
            total = ev.pivot_rhs
            for (b, i, j), v in ev.pivot_blocks.items():
                w = 1.0 if i == j else 2.0
                total -= v * w * blocks[b][i, j]
            for k, v in ev.pivot_free.items():
                if k != ev.uid:
                    total -= v * full[k]
            full[ev.uid] = total / ev.pivot_coef
        return full

    def recover_duals(self, reduced_y: np.ndarray, qfree: np.ndarray) -> np.ndarray:
        """Multipliers for the original (unscaled) rows.

        qfree holds objective coefficients of the original free variables;
        eliminated variables are guaranteed to have zero weight there.
        """
        current: dict[int, float] = {}
        for red, rid in enumerate(self.row_ids):
            current[rid] = reduced_y[red]
        for ev in reversed(self.events):
            val = qfree[ev.uid] / ev.pivot_coef if ev.pivot_coef else 0.0
            for rid, alpha in ev.applied:
                val += alpha * current.get(rid, 0.0)
            current[ev.pivot_rid] = val
        out = np.zeros(self.n_rows_original)
        for rid, val in current.items():
            out[rid] = val * self.row_scale0[rid]
        return out


def presolve(
    problem: SdpProblem,
    exclude: frozenset[int] | set[int] = frozenset(),
    eliminate: bool = True,
) -> PresolvedSdp:
    scale0 = np.ones(problem.n_rows)
    rows: dict[int, _WorkRow] = {}
    for k, r in enumerate(problem.rows):
        blocks: dict[tuple[int, int, int], float] = {}
        for b, trip in r.blocks.items():
            for i, j, v in trip:
                key = (b, i, j) if i <= j else (b, j, i)
                blocks[key] = blocks.get(key, 0.0) + v
        blocks = {k2: v for k2, v in blocks.items() if v != 0.0}
        free = {k2: v for k2, v in r.free.items() if v != 0.0}
        w = _WorkRow(blocks, free, r.rhs, k)
        scale0[k] = _normalize(w)
        rows[k] = w

    occurs: dict[int, set[int]] = {}
    for rid, w in rows.items():
        for u in w.free:
            occurs.setdefault(u, set()).add(rid)

    qfree = np.zeros(problem.n_free)
    if problem.objective is not None:
        for k, v in problem.objective.free.items():
            qfree[k] = v

    events: list[_Event] = []
    if eliminate:
        for uid in range(problem.n_free):
            if uid in exclude or qfree[uid] != 0.0:
                continue
            holders = occurs.get(uid)
            if not holders:
                continue
            pivot_rid = None
            best = -1.0
            for rid in sorted(holders):
                if rid not in rows:
                    continue
                c = abs(rows[rid].free.get(uid, 0.0))
                if c < PIVOT_TOL:
                    continue
                score = c / (1.0 + 0.001 * (len(rows[rid].blocks) + len(rows[rid].free)))
                if score > best:
                    best = score
                    pivot_rid = rid
            if pivot_rid is None:
                continue
            pivot = rows.pop(pivot_rid)
            coef = pivot.free[uid]
            for u in pivot.free:
                if u in occurs:
                    occurs[u].discard(pivot_rid)
            applied = []
            for rid in sorted(holders):
                if rid == pivot_rid or rid not in rows:
                    continue
                w = rows[rid]
                cu = w.free.get(uid)
                if cu is None:
                    continue
                alpha = -cu / coef
                applied.append((rid, alpha))
                _axpy(w, alpha, pivot)
                w.free.pop(uid, None)
                for u in pivot.free:
                    if u != uid and u in w.free:
                        occurs.setdefault(u, set()).add(rid)
            occurs.pop(uid, None)
            events.append(
                _Event(uid, pivot_rid, coef, pivot.blocks, pivot.free, pivot.rhs, applied)
            )

    dropped: list[int] = []
    kept: list[_WorkRow] = []
    for rid in sorted(rows):
        w = rows[rid]
        if not w.blocks and not w.free:
            if abs(w.rhs) > DROP_TOL:
                raise StructuralInfeasibility(w.rhs, w.origin)
            dropped.append(w.origin)
            continue
        kept.append(w)

    survivors = sorted({u for w in kept for u in w.free})
    free_map = {u: i for i, u in enumerate(survivors)}

    new_rows = []
    for w in kept:
        blocks2: dict[int, list[tuple[int, int, float]]] = {}
        for (b, i, j), v in sorted(w.blocks.items()):
            blocks2.setdefault(b, []).append((i, j, v))
        free = {free_map[u]: v for u, v in sorted(w.free.items())}
        new_rows.append(SdpRow(blocks2, free, w.rhs))

    new_obj = None
    if problem.objective is not None:
        obj = problem.objective
        new_obj = SdpObjective(
            {b: list(t) for b, t in obj.blocks.items()},
            {free_map[u]: v for u, v in obj.free.items() if u in free_map and v != 0.0},
            obj.offset,
        )

    reduced = SdpProblem(list(problem.block_dims), len(survivors), new_rows, new_obj)
    return PresolvedSdp(
        problem=reduced,
        free_map=free_map,
        row_ids=[w.origin for w in kept],
        row_scale0=scale0,
        events=events,
        n_free_original=problem.n_free,
        n_rows_original=problem.n_rows,
        dropped_rows=dropped,
    )


def _normalize(w: _WorkRow) -> float:
    """Scale the row to unit infinity norm; returns the factor applied."""
    m = max(
        max((abs(v) for v in w.blocks.values()), default=0.0),
        max((abs(v) for v in w.free.values()), default=0.0),
    )
    if m <= 0.0:
        return 1.0
    s = 1.0 / m
    w.blocks = {k: v * s for k, v in w.blocks.items()}
    w.free = {k: v * s for k, v in w.free.items()}
    w.rhs *= s
    return s


def _axpy(w: _WorkRow, alpha: float, pivot: _WorkRow):
    for key, v in pivot.blocks.items():
        nv = w.blocks.get(key, 0.0) + alpha * v
        if nv == 0.0:
            w.blocks.pop(key, None)
        else:
            w.blocks[key] = nv
    for u, v in pivot.free.items():
        nv = w.free.get(u, 0.0) + alpha * v
        if nv == 0.0:
            w.free.pop(u, None)
        else:
            w.free[u] = nv
    w.rhs += alpha * pivot.rhs
