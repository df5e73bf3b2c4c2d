"""SDPA sparse (.dat-s) import/export.

The file encodes   min c.x  s.t.  sum_k x_k F_k - F0 >= 0 , whose dual is
max <F0, Y> s.t. <F_k, Y> = c_k, Y >= 0.  Our problem data (equality rows
over PSD blocks, maximize objective) maps onto that dual: F_k carries row
k's coefficients, c_k its right-hand side, F0 the objective.

Free variables are encoded, as is customary for the format, as a trailing
diagonal (negative-size) block holding a split z = z+ - z-.  The writer
marks that block with a '*FREEVARS n' comment so the reader can fold the
split back; files from other tools simply have no such comment.
"""

from __future__ import annotations

from .problem import SdpObjective, SdpProblem, SdpRow

__all__ = ["export_sdpa", "import_sdpa", "SdpaFormatError"]


class SdpaFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_sdpa(problem: SdpProblem) -> str:
    p = problem.canonical()
    nblocks = len(p.block_dims) + (1 if p.n_free else 0)
    sizes = [str(d) for d in p.block_dims]
    if p.n_free:
        sizes.append(str(-2 * p.n_free))
    lines = []
    if p.n_free:
        lines.append(f"*FREEVARS {p.n_free}")
    lines.append(str(p.n_rows))
    lines.append(str(nblocks))
    lines.append(" ".join(sizes) if sizes else "0")
    lines.append(" ".join(_fmt(r.rhs) for r in p.rows))

    free_block = len(p.block_dims) + 1  # 1-based

    def emit(matno: int, blocks: dict, free: dict):
        for b in sorted(blocks):
            for i, j, v in blocks[b]:
                if v != 0.0:
                    lines.append(f"{matno} {b + 1} {i + 1} {j + 1} {_fmt(v)}")
        for k in sorted(free):
            v = free[k]
            if v != 0.0:
                lines.append(f"{matno} {free_block} {2 * k + 1} {2 * k + 1} {_fmt(v)}")
                lines.append(f"{matno} {free_block} {2 * k + 2} {2 * k + 2} {_fmt(-v)}")

    if p.objective is not None:
        emit(0, p.objective.blocks, p.objective.free)
    for k, row in enumerate(p.rows):
        emit(k + 1, row.blocks, row.free)
    return "\n".join(lines) + "\n"


def import_sdpa(text: str | bytes) -> SdpProblem:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    n_free = 0
    entries: list[tuple[int, int, int, int, float]] = []
    stage = 0
    rhs: list[float] = []
    nrows = nblocks = 0
    dims: list[int] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(("*", '"')):
            if line.upper().startswith("*FREEVARS"):
                try:
                    n_free = int(line.split()[1])
                except (IndexError, ValueError):
                    raise SdpaFormatError("malformed *FREEVARS comment", lineno)
            continue
        tokens = line.replace(",", " ").replace("{", " ").replace("}", " ").replace(
            "(", " "
        ).replace(")", " ").split()
        if stage == 0:
            try:
                nrows = int(tokens[0])
            except ValueError:
                raise SdpaFormatError("expected the number of constraints", lineno)
            stage = 1
        elif stage == 1:
            try:
                nblocks = int(tokens[0])
            except ValueError:
                raise SdpaFormatError("expected the number of blocks", lineno)
            stage = 2
        elif stage == 2:
            try:
                dims = [int(t) for t in tokens]
            except ValueError:
                raise SdpaFormatError("malformed block-size line", lineno)
            if len(dims) != nblocks:
                raise SdpaFormatError(
                    f"expected {nblocks} block sizes, found {len(dims)}", lineno
                )
            stage = 3
        elif stage == 3:
            try:
                rhs.extend(float(t) for t in tokens)
            except ValueError:
                raise SdpaFormatError("malformed objective line", lineno)
            if len(rhs) > nrows:
                raise SdpaFormatError("too many objective entries", lineno)
            if len(rhs) == nrows:
                stage = 4
        else:
            if len(tokens) != 5:
                raise SdpaFormatError("expected 'matno blkno i j value'", lineno)
            try:
                matno, blk, i, j = (int(t) for t in tokens[:4])
                value = float(tokens[4])
            except ValueError:
                raise SdpaFormatError("malformed entry quintuple", lineno)
            if not 0 <= matno <= nrows:
                raise SdpaFormatError(f"matrix index {matno} out of range", lineno)
            if not 1 <= blk <= nblocks:
                raise SdpaFormatError(f"block index {blk} out of range", lineno)
            entries.append((matno, blk, i, j, value))
    if stage < 4 and nrows > 0:
        raise SdpaFormatError("file ended before data section", len(text.splitlines()))

    free_block = None
    if n_free:
        if not dims or dims[-1] != -2 * n_free:
            raise SdpaFormatError(
                "*FREEVARS does not match the trailing diagonal block", 1
            )
        free_block = len(dims)
        dims = dims[:-1]
    # negative sizes are diagonal blocks; model them as PSD blocks of size |d|
    block_dims = [abs(d) for d in dims]

    rows = [SdpRow({}, {}, rhs[k]) for k in range(nrows)]
    objective = SdpObjective()
    has_objective = False

    for matno, blk, i, j, value in entries:
        if free_block is not None and blk == free_block:
            if i != j:
                raise SdpaFormatError("free-variable block must be diagonal", 1)
            k, sign = divmod(i - 1, 2)
            coef = value if sign == 0 else -value
            target = objective.free if matno == 0 else rows[matno - 1].free
            target[k] = target.get(k, 0.0) + coef
            if matno == 0:
                has_objective = True
            continue
        ii, jj = (i - 1, j - 1) if i <= j else (j - 1, i - 1)
        n = block_dims[blk - 1]
        if jj >= n:
            raise SdpaFormatError(f"entry ({i},{j}) outside block {blk}", 1)
        if matno == 0:
            objective.blocks.setdefault(blk - 1, []).append((ii, jj, value))
            has_objective = True
        else:
            rows[matno - 1].blocks.setdefault(blk - 1, []).append((ii, jj, value))

    return SdpProblem(
        block_dims,
        n_free,
        rows,
        objective if has_objective else None,
    ).canonical()
