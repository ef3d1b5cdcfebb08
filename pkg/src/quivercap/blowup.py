"""Blow-up bookkeeping and the completely positive operator of a quiver datum.

A datum (V, sigma) determines a completely positive operator on N x N
symmetric matrices, N = sum_i sigma_+(v_i) d(v_i).  Its Kraus operators are
block matrices carrying one arrow matrix each: block rows repeat the sink
dimension d(w_j) sigma_-(w_j) times, block columns repeat d(v_i)
sigma_+(v_i) times, and the Kraus operator for (i, j, a, q, r) holds V(a) in
block (q, r).

Two evaluation paths are provided.  ``kraus_dense`` materialises the Kraus
operators and exists as a test oracle; ``apply_T`` / ``apply_T_adjoint``
exploit that the image is block diagonal and only ever touch the diagonal
blocks of the input, which is the production path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .model import Matrix, QuiverDatum

ASYMMETRY_WARN = 1e-10


@dataclass(frozen=True)
class IndexSets:
    """Intervals and index tuples of the blow-up (1-based, as usually written).

    ``sink_intervals[j]`` is the half-open run of block-row labels q owned by
    the j-th sink, ``source_intervals[i]`` the block-column labels r of the
    i-th source.  ``entries`` lists every tuple (i, j, arrow name, q, r) with
    i, j, q, r 1-based; pairs (i, j) without arrows contribute placeholder
    tuples with arrow name None, which correspond to zero Kraus operators.
    """

    source_intervals: tuple[range, ...]
    sink_intervals: tuple[range, ...]
    entries: tuple[tuple[int, int, Optional[str], int, int], ...]
    size: int  # N
    sink_copies: int  # number of block rows
    source_copies: int  # number of block columns
    row_sizes: tuple[int, ...]  # d(w_j) repeated, one per block row
    col_sizes: tuple[int, ...]  # d(v_i) repeated, one per block column
    row_block_sink: tuple[int, ...]  # 0-based sink index per block row
    col_block_source: tuple[int, ...]  # 0-based source index per block column

    @cached_property
    def row_offsets(self) -> tuple[int, ...]:
        out = [0]
        for s in self.row_sizes:
            out.append(out[-1] + s)
        return tuple(out)

    @cached_property
    def col_offsets(self) -> tuple[int, ...]:
        out = [0]
        for s in self.col_sizes:
            out.append(out[-1] + s)
        return tuple(out)

    def row_slice(self, q: int) -> slice:
        """Entry range of 1-based block row q."""
        return slice(self.row_offsets[q - 1], self.row_offsets[q])

    def col_slice(self, r: int) -> slice:
        """Entry range of 1-based block column r."""
        return slice(self.col_offsets[r - 1], self.col_offsets[r])


def index_sets(datum: QuiverDatum) -> IndexSets:
    """Build the blow-up index sets of a valid datum."""
    q = datum.quiver
    sigma_plus = datum.sigma_plus
    sigma_minus = datum.sigma_minus

    sink_intervals = []
    lo = 1
    for s in sigma_minus:
        sink_intervals.append(range(lo, lo + s))
        lo += s
    source_intervals = []
    lo = 1
    for s in sigma_plus:
        source_intervals.append(range(lo, lo + s))
        lo += s

    row_sizes, row_block_sink = [], []
    for j, w in enumerate(q.sinks):
        row_sizes.extend([datum.dims[w]] * sigma_minus[j])
        row_block_sink.extend([j] * sigma_minus[j])
    col_sizes, col_block_source = [], []
    for i, v in enumerate(q.sources):
        col_sizes.extend([datum.dims[v]] * sigma_plus[i])
        col_block_source.extend([i] * sigma_plus[i])

    entries = []
    for i in range(len(q.sources)):
        for j in range(len(q.sinks)):
            bundle = q.arrow_grid[i][j] or (None,)
            for a in bundle:
                name = a.name if a is not None else None
                for qq in sink_intervals[j]:
                    for rr in source_intervals[i]:
                        entries.append((i + 1, j + 1, name, qq, rr))

    return IndexSets(
        source_intervals=tuple(source_intervals),
        sink_intervals=tuple(sink_intervals),
        entries=tuple(entries),
        size=datum.total_dim,
        sink_copies=sum(sigma_minus),
        source_copies=sum(sigma_plus),
        row_sizes=tuple(row_sizes),
        col_sizes=tuple(col_sizes),
        row_block_sink=tuple(row_block_sink),
        col_block_source=tuple(col_block_source),
    )


def kraus_dense(datum: QuiverDatum, sets: Optional[IndexSets] = None) -> list[Matrix]:
    """Materialise the non-zero Kraus operators as dense N x N matrices.

    Placeholder entries (pairs of vertices with no arrow) are zero matrices
    and are omitted; they contribute nothing to the operator.  Kept as the
    definitional oracle against which the structured path is tested.
    """
    sets = sets or index_sets(datum)
    out = []
    for _, _, name, qq, rr in sets.entries:
        if name is None:
            continue
        k = np.zeros((sets.size, sets.size))
        k[sets.row_slice(qq), sets.col_slice(rr)] = datum.rep[name]
        out.append(k)
    return out


def _symmetrize(x: Matrix, size: int, what: str) -> Matrix:
    x = np.asarray(x, dtype=float)
    if x.shape != (size, size):
        raise ValueError(f"{what}: expected shape {(size, size)}, got {x.shape}")
    asym = np.linalg.norm(x - x.T)
    if asym > ASYMMETRY_WARN * max(1.0, np.linalg.norm(x)):
        warnings.warn(f"{what}: input symmetrized, asymmetry {asym:.3e}", stacklevel=3)
    return (x + x.T) / 2.0


def apply_T(datum: QuiverDatum, x: Matrix, sets: Optional[IndexSets] = None) -> Matrix:
    """Evaluate the operator on a symmetric matrix via its block structure.

    The input is read through the sink-side block rows; the result is block
    diagonal along the source-side block columns, with the block repeated
    along each source's interval equal to

        sum_j sum_{a: v_i -> w_j} V(a)^T (sum_{q in interval_j} X_qq) V(a).
    """
    sets = sets or index_sets(datum)
    x = _symmetrize(x, sets.size, "apply_T")
    quiver = datum.quiver

    sink_sums = []
    for j, w in enumerate(quiver.sinks):
        d = datum.dims[w]
        z = np.zeros((d, d))
        for qq in sets.sink_intervals[j]:
            s = sets.row_slice(qq)
            z += x[s, s]
        sink_sums.append(z)

    out = np.zeros((sets.size, sets.size))
    for i in range(len(quiver.sources)):
        d = datum.dims[quiver.sources[i]]
        block = np.zeros((d, d))
        for j in range(len(quiver.sinks)):
            for a in quiver.arrow_grid[i][j]:
                v = datum.rep[a.name]
                block += v.T @ sink_sums[j] @ v
        for rr in sets.source_intervals[i]:
            s = sets.col_slice(rr)
            out[s, s] = block
    return out


def apply_T_adjoint(datum: QuiverDatum, x: Matrix, sets: Optional[IndexSets] = None) -> Matrix:
    """Adjoint of :func:`apply_T` for the trace inner product.

    Reads the input through the source-side block columns and produces a
    block-diagonal result along the sink-side block rows with blocks

        sum_i sum_{a: v_i -> w_j} V(a) (sum_{r in interval_i} X_rr) V(a)^T.
    """
    sets = sets or index_sets(datum)
    x = _symmetrize(x, sets.size, "apply_T_adjoint")
    quiver = datum.quiver

    source_sums = []
    for i, v in enumerate(quiver.sources):
        d = datum.dims[v]
        u = np.zeros((d, d))
        for rr in sets.source_intervals[i]:
            s = sets.col_slice(rr)
            u += x[s, s]
        source_sums.append(u)

    out = np.zeros((sets.size, sets.size))
    for j in range(len(quiver.sinks)):
        d = datum.dims[quiver.sinks[j]]
        block = np.zeros((d, d))
        for i in range(len(quiver.sources)):
            for a in quiver.arrow_grid[i][j]:
                v = datum.rep[a.name]
                block += v @ source_sums[i] @ v.T
        for qq in sets.sink_intervals[j]:
            s = sets.row_slice(qq)
            out[s, s] = block
    return out


def source_marginals(datum: QuiverDatum) -> list[Matrix]:
    """Per-source matrices sum_j sigma_-(w_j) sum_a V(a)^T V(a); identity for
    geometric data."""
    quiver = datum.quiver
    out = [np.zeros((datum.dims[v], datum.dims[v])) for v in quiver.sources]
    for a in quiver.arrows:
        i = quiver.source_index[a.tail]
        j = quiver.sink_index[a.head]
        v = datum.rep[a.name]
        out[i] += datum.sigma_minus[j] * (v.T @ v)
    return out


def sink_marginals(datum: QuiverDatum) -> list[Matrix]:
    """Per-sink matrices sum_i sigma_+(v_i) sum_a V(a) V(a)^T; identity for
    geometric data."""
    quiver = datum.quiver
    out = [np.zeros((datum.dims[w], datum.dims[w])) for w in quiver.sinks]
    for a in quiver.arrows:
        i = quiver.source_index[a.tail]
        j = quiver.sink_index[a.head]
        v = datum.rep[a.name]
        out[j] += datum.sigma_plus[i] * (v @ v.T)
    return out
