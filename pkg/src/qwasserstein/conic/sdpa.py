"""SDPA sparse (``.dat-s``) export and import.

SDPA encodes ``min sum_i c_i x_i  s.t.  X = sum_i F_i x_i - F_0 >= 0``. With
slack ``s = b - A z`` this gives ``F_i = -mat(A[:, i])`` and ``F_0 = -mat(b)``.
Each cone becomes one block: PSD cones keep their side, nonnegative cones
become diagonal blocks (negative size), and zero-cone rows are written as pairs
of opposing diagonal inequalities. When such a rewrite happens a ``*cones:``
comment is emitted so :func:`parse_sdpa` can restore the equalities.
"""
from __future__ import annotations

import re

import numpy as np
import scipy.sparse as sp

from ..errors import ParseError, UnsupportedCone
from .problem import SQRT2, ConicProblem, NonNegCone, PSDCone, ZeroCone, svec_index, svec_pairs

CONES_TAG = "*cones:"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _cone_token(cone) -> str:
    if isinstance(cone, ZeroCone):
        return f"Z{cone.dim}"
    if isinstance(cone, NonNegCone):
        return f"L{cone.dim}"
    return f"S{cone.side}"


def export_sdpa(p: ConicProblem) -> str:
    """Serialize ``p`` as SDPA sparse text (ASCII, LF line endings)."""
    sizes = []
    for cone in p.cones:
        if isinstance(cone, ZeroCone):
            sizes.append(-2 * cone.dim)
        elif isinstance(cone, NonNegCone):
            sizes.append(-cone.dim)
        elif isinstance(cone, PSDCone):
            sizes.append(cone.side)
        else:
            raise UnsupportedCone(f"cannot export {cone!r}")
    if not sizes:
        raise UnsupportedCone("SDPA needs at least one block")

    # position of every row inside its block: (block no, i, j, scale, mirrored)
    blk = np.zeros(p.num_rows, dtype=int)
    bi = np.zeros(p.num_rows, dtype=int)
    bj = np.zeros(p.num_rows, dtype=int)
    scale = np.ones(p.num_rows)
    paired = np.zeros(p.num_rows, dtype=bool)
    for k, (cone, sl) in enumerate(p.cone_slices(), start=1):
        blk[sl] = k
        if isinstance(cone, PSDCone):
            ij = svec_pairs(cone.side)
            bi[sl], bj[sl] = ij[:, 0] + 1, ij[:, 1] + 1
            scale[sl] = np.where(ij[:, 0] == ij[:, 1], 1.0, 1.0 / SQRT2)
        else:
            step = 2 if isinstance(cone, ZeroCone) else 1
            pos = np.arange(cone.size) * step + 1
            bi[sl] = bj[sl] = pos
            paired[sl] = isinstance(cone, ZeroCone)

    entries = []

    def emit(mat_no, rows, vals):
        for r, v in zip(rows, vals):
            m = -v * scale[r]
            if m == 0:
                continue
            entries.append((mat_no, blk[r], bi[r], bj[r], m))
            if paired[r]:
                entries.append((mat_no, blk[r], bi[r] + 1, bj[r] + 1, -m))

    emit(0, np.arange(p.num_rows), p.b)
    A = p.A.tocsc()
    for col in range(p.num_vars):
        lo, hi = A.indptr[col], A.indptr[col + 1]
        emit(col + 1, A.indices[lo:hi], A.data[lo:hi])
    entries.sort(key=lambda e: e[:4])

    lines = []
    if any(isinstance(c, ZeroCone) for c in p.cones):
        lines.append('"equality rows rewritten as paired opposing inequalities')
        lines.append(CONES_TAG + " " + " ".join(_cone_token(c) for c in p.cones))
    lines.append(str(p.num_vars))
    lines.append(str(len(sizes)))
    lines.append(" ".join(str(s) for s in sizes))
    lines.append(" ".join(_fmt(v) for v in p.c))
    lines.extend(f"{k} {b} {i} {j} {_fmt(v)}" for k, b, i, j, v in entries)
    return "\n".join(lines) + "\n"


_SEP = re.compile(r"[,{}()\s]+")


def _tokens(line: str) -> list:
    return [t for t in _SEP.split(line.strip()) if t]


def _parse_cones_tag(line: str, lineno: int) -> tuple:
    cones = []
    for tok in line[len(CONES_TAG):].split():
        kind, num = tok[:1], tok[1:]
        if kind not in "ZLS" or not num.isdigit() or int(num) <= 0:
            raise ParseError(lineno, f"bad cone token {tok!r}")
        cones.append({"Z": ZeroCone, "L": NonNegCone, "S": PSDCone}[kind](int(num)))
    return tuple(cones)


def parse_sdpa(text: str) -> ConicProblem:
    """Inverse of :func:`export_sdpa`; also reads plain SDPA files.

    Raises :class:`ParseError` with the offending (1-based) line number.
    """
    declared = None
    data = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(CONES_TAG):
            declared = _parse_cones_tag(line, lineno)
            continue
        if line[0] in '*"':
            continue
        data.append((lineno, line))
    if not data:
        raise ParseError(1, "no data lines")

    def ints(idx, what, count=None):
        lineno, line = data[idx]
        try:
            vals = [int(t) for t in _tokens(line)]
        except ValueError:
            raise ParseError(lineno, f"expected integers for {what}") from None
        if count is not None and len(vals) < count:
            raise ParseError(lineno, f"expected {count} integers for {what}, got {len(vals)}")
        return vals

    m = ints(0, "number of variables", 1)[0]
    if m < 0:
        raise ParseError(data[0][0], "number of variables must be nonnegative")
    if len(data) < 2:
        raise ParseError(data[-1][0], "truncated header")
    nblock = ints(1, "number of blocks", 1)[0]
    if nblock <= 0:
        raise ParseError(data[1][0], "empty blocks list")
    if len(data) < 4:
        raise ParseError(data[-1][0], "truncated header")
    sizes = ints(2, "block sizes", nblock)[:nblock]
    if any(s == 0 for s in sizes):
        raise ParseError(data[2][0], "block sizes must be nonzero")
    lineno, line = data[3]
    try:
        c = np.array([float(t) for t in _tokens(line)])
    except ValueError:
        raise ParseError(lineno, "expected objective coefficients") from None
    if len(c) < m:
        raise ParseError(lineno, f"expected {m} objective coefficients, got {len(c)}")
    c = c[:m]

    if declared is not None:
        expected = [-2 * cn.dim if isinstance(cn, ZeroCone) else -cn.dim if isinstance(cn, NonNegCone) else cn.side
                    for cn in declared]
        if expected != sizes:
            raise ParseError(data[2][0], f"block sizes {sizes} disagree with declared cones")
        cones = declared
    else:
        cones = tuple(NonNegCone(-s) if s < 0 else PSDCone(s) for s in sizes)

    offsets = np.cumsum([0] + [cn.size for cn in cones])
    rows, cols, vals = [], [], []
    b = np.zeros(offsets[-1])
    for lineno, line in data[4:]:
        toks = _tokens(line)
        if len(toks) != 5:
            raise ParseError(lineno, "expected 'matno blkno i j value'")
        try:
            k, blkno, i, j = (int(t) for t in toks[:4])
            v = float(toks[4])
        except ValueError:
            raise ParseError(lineno, "malformed entry") from None
        if not (0 <= k <= m and 1 <= blkno <= nblock):
            raise ParseError(lineno, "matrix or block number out of range")
        cone = cones[blkno - 1]
        dim = abs(sizes[blkno - 1])
        if not (1 <= i <= dim and 1 <= j <= dim):
            raise ParseError(lineno, "entry index out of range")
        if isinstance(cone, PSDCone):
            i, j = min(i, j), max(i, j)
            row = svec_index(i - 1, j - 1)
            coef = -v * (SQRT2 if i != j else 1.0)
        else:
            if i != j:
                raise ParseError(lineno, "off-diagonal entry in a diagonal block")
            if isinstance(cone, ZeroCone):
                if i % 2 == 0:
                    continue  # mirrored copy of the preceding inequality
                row = (i - 1) // 2
            else:
                row = i - 1
            coef = -v
        row += offsets[blkno - 1]
        if k == 0:
            b[row] = coef
        else:
            rows.append(row)
            cols.append(k - 1)
            vals.append(coef)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(len(b), m))
    return ConicProblem(c, A, b, cones)
