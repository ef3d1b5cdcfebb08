"""Bipartite quiver data: quivers, representations, weights, and the base-change action.

A datum is a bipartite quiver (all arrows run from source vertices to sink
vertices) together with a dimension vector, an integral weight that is
positive on sources and negative on sinks and orthogonal to the dimensions,
and one real matrix per arrow.  Everything downstream (the blow-up operator,
scaling, capacity) consumes these objects.

All containers are immutable after construction; matrices are stored as
read-only float64 copies.  Operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Optional, Sequence

import numpy as np

Matrix = np.ndarray
GroupElement = dict[str, Matrix]  # vertex id -> invertible square block

# Relative singular-value cutoff used wherever a numerical rank is needed.
RANK_RTOL = 1e-9


def _freeze(m) -> Matrix:
    out = np.array(m, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Arrow:
    name: str
    tail: str
    head: str


@dataclass(frozen=True)
class BipartiteQuiver:
    """Directed multigraph whose arrows all run from a source to a sink vertex.

    Vertex order is meaningful: ``sources[i]`` is the i-th source everywhere
    (index sets, Kraus order, reports), likewise ``sinks[j]``.  Parallel
    arrows keep their input order.
    """

    sources: tuple[str, ...]
    sinks: tuple[str, ...]
    arrows: tuple[Arrow, ...]

    def __init__(self, sources, sinks, arrows):
        object.__setattr__(self, "sources", tuple(sources))
        object.__setattr__(self, "sinks", tuple(sinks))
        object.__setattr__(
            self,
            "arrows",
            tuple(a if isinstance(a, Arrow) else Arrow(*a) for a in arrows),
        )

    @cached_property
    def source_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.sources)}

    @cached_property
    def sink_index(self) -> dict[str, int]:
        return {w: j for j, w in enumerate(self.sinks)}

    @cached_property
    def vertices(self) -> tuple[str, ...]:
        return self.sources + self.sinks

    @cached_property
    def arrow_grid(self) -> tuple[tuple[tuple[Arrow, ...], ...], ...]:
        """arrow_grid[i][j] lists the arrows from the i-th source to the j-th sink."""
        grid = [[[] for _ in self.sinks] for _ in self.sources]
        for a in self.arrows:
            i = self.source_index.get(a.tail)
            j = self.sink_index.get(a.head)
            if i is not None and j is not None:
                grid[i][j].append(a)
        return tuple(tuple(tuple(b) for b in row) for row in grid)


def as_representation(rep: Mapping[str, Matrix]) -> dict[str, Matrix]:
    """Copy a representation mapping into read-only float64 matrices."""
    return {name: _freeze(m) for name, m in rep.items()}


@dataclass(frozen=True, eq=False)
class QuiverDatum:
    """A representation plus weight on a bipartite quiver.

    No cross-invariants are enforced here so that invalid input can still be
    constructed and then reported by :func:`validate_datum`.  Every numerical
    operation in the package assumes a datum that validates cleanly.
    Compare data with :func:`datum_equal` (matrix fields make ``==``
    ill-defined).
    """

    quiver: BipartiteQuiver
    dims: dict[str, int]
    weight: dict[str, int]
    rep: dict[str, Matrix]

    def __init__(self, quiver, dims, weight, rep):
        object.__setattr__(self, "quiver", quiver)
        object.__setattr__(self, "dims", {x: int(d) for x, d in dims.items()})
        object.__setattr__(self, "weight", {x: int(s) for x, s in weight.items()})
        object.__setattr__(self, "rep", as_representation(rep))

    @cached_property
    def sigma_plus(self) -> tuple[int, ...]:
        return tuple(self.weight[v] for v in self.quiver.sources)

    @cached_property
    def sigma_minus(self) -> tuple[int, ...]:
        return tuple(-self.weight[w] for w in self.quiver.sinks)

    @cached_property
    def total_dim(self) -> int:
        """Common value of sum(sigma_plus * dims) over sources and sinks."""
        return sum(s * self.dims[v] for s, v in zip(self.sigma_plus, self.quiver.sources))

    def matrix(self, arrow: Arrow) -> Matrix:
        return self.rep[arrow.name]


def validate_datum(datum: QuiverDatum) -> list[str]:
    """Return the list of violated invariants (empty means valid)."""
    q = datum.quiver
    problems: list[str] = []

    names = list(q.sources) + list(q.sinks)
    if len(set(names)) != len(names):
        problems.append("vertex ids not unique")
    vertex_set = set(names)

    arrow_names = [a.name for a in q.arrows]
    if len(set(arrow_names)) != len(arrow_names):
        problems.append("arrow ids not unique")

    for a in q.arrows:
        if a.tail not in q.source_index or a.head not in q.sink_index:
            problems.append(f"not bipartite: arrow {a.name!r} ({a.tail}->{a.head})")

    # connectivity of the underlying undirected graph
    if vertex_set:
        seen = {names[0]}
        frontier = [names[0]]
        adj: dict[str, set[str]] = {x: set() for x in vertex_set}
        for a in q.arrows:
            if a.tail in adj and a.head in adj:
                adj[a.tail].add(a.head)
                adj[a.head].add(a.tail)
        while frontier:
            x = frontier.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    frontier.append(y)
        if seen != vertex_set:
            problems.append("underlying graph not connected")

    if set(datum.dims) != vertex_set:
        problems.append("dims keys do not match vertices")
    else:
        for x, d in datum.dims.items():
            if d < 1:
                problems.append(f"dimension at {x!r} not positive")

    if set(datum.weight) != vertex_set:
        problems.append("weight keys do not match vertices")
    else:
        for v in q.sources:
            if datum.weight[v] <= 0:
                problems.append(f"weight not positive at source {v!r}")
        for w in q.sinks:
            if datum.weight[w] >= 0:
                problems.append(f"weight not negative at sink {w!r}")
        if set(datum.dims) == vertex_set:
            dot = sum(datum.weight[x] * datum.dims[x] for x in vertex_set)
            if dot != 0:
                problems.append(f"weight not orthogonal to dims (sigma.d = {dot})")

    if set(datum.rep) != set(arrow_names):
        problems.append("matrix keys do not match arrow ids")
    else:
        for a in q.arrows:
            m = datum.rep[a.name]
            if m.ndim != 2:
                problems.append(f"matrix for arrow {a.name!r} is not 2-dimensional")
                continue
            want = (datum.dims.get(a.head), datum.dims.get(a.tail))
            if None not in want and m.shape != want:
                problems.append(
                    f"matrix for arrow {a.name!r} has shape {m.shape}, expected {want}"
                )
            if not np.all(np.isfinite(m)):
                problems.append(f"matrix for arrow {a.name!r} has non-finite entries")

    return problems


def check_valid(datum: QuiverDatum) -> QuiverDatum:
    """Raise ValueError on the first validation failure, else return the datum."""
    problems = validate_datum(datum)
    if problems:
        raise ValueError("invalid quiver datum: " + "; ".join(problems))
    return datum


def datum_equal(first, second) -> bool:
    """Exact structural equality of two data (quiver, dims, weights or
    exponents, and bitwise-equal matrices)."""
    if first.quiver != second.quiver or first.dims != second.dims:
        return False
    if hasattr(first, "exponents") != hasattr(second, "exponents"):
        return False
    if hasattr(first, "exponents"):
        if first.exponents != second.exponents:
            return False
    elif first.weight != second.weight:
        return False
    if set(first.rep) != set(second.rep):
        return False
    return all(np.array_equal(first.rep[k], second.rep[k]) for k in first.rep)


# ---------------------------------------------------------------------------
# reduction of acyclic quivers to bipartite form


def bipartite_reduce(
    arrows: Sequence[Arrow | tuple],
    dims: Mapping[str, int],
    weight: Mapping[str, int],
    rep: Mapping[str, Matrix],
    max_paths: int = 10**6,
) -> QuiverDatum:
    """Collapse an acyclic quiver onto its positive/negative weight vertices.

    Every oriented path from a positive-weight vertex to a negative-weight
    vertex becomes one arrow of the bipartite quiver; its matrix is the
    ordered product of the matrices along the path.  Vertices of zero weight
    disappear.  A path of length one keeps the name of its arrow, longer
    paths are named by joining arrow names with ``>``.

    Raises ValueError if the quiver has a directed cycle, if the positive or
    negative vertex set is empty, or if more than ``max_paths`` paths exist.
    """
    arrows = [a if isinstance(a, Arrow) else Arrow(*a) for a in arrows]
    vertices = list(dims)
    positive = [x for x in vertices if weight.get(x, 0) > 0]
    negative = [x for x in vertices if weight.get(x, 0) < 0]
    if not positive or not negative:
        raise ValueError("weight sign pattern invalid: need positive and negative vertices")

    outgoing: dict[str, list[Arrow]] = {x: [] for x in vertices}
    for a in arrows:
        outgoing[a.tail].append(a)

    # Kahn toposort to reject cycles before enumerating paths.
    indeg = {x: 0 for x in vertices}
    for a in arrows:
        indeg[a.head] += 1
    queue = [x for x in vertices if indeg[x] == 0]
    removed = 0
    while queue:
        x = queue.pop()
        removed += 1
        for a in outgoing[x]:
            indeg[a.head] -= 1
            if indeg[a.head] == 0:
                queue.append(a.head)
    if removed != len(vertices):
        raise ValueError("cycle detected: quiver is not acyclic")

    new_arrows: list[Arrow] = []
    new_rep: dict[str, Matrix] = {}
    count = 0

    def walk(start: str, here: str, trail: list[Arrow], product: Optional[Matrix]):
        nonlocal count
        if trail and weight.get(here, 0) < 0:
            count += 1
            if count > max_paths:
                raise ValueError(f"path count exceeds cap ({max_paths})")
            name = ">".join(a.name for a in trail)
            new_arrows.append(Arrow(name, start, here))
            new_rep[name] = product
        for a in outgoing[here]:
            m = np.asarray(rep[a.name], dtype=float)
            walk(start, a.head, trail + [a], m if product is None else m @ product)

    for v in positive:
        walk(v, v, [], None)

    quiver = BipartiteQuiver(positive, negative, new_arrows)
    keep = positive + negative
    return QuiverDatum(
        quiver,
        {x: dims[x] for x in keep},
        {x: weight[x] for x in keep},
        new_rep,
    )


# ---------------------------------------------------------------------------
# exponent tuples and the induced weight


@dataclass(frozen=True)
class ExponentTuple:
    """Positive rational exponents, one per sink, held exactly as fractions."""

    values: tuple[Fraction, ...]

    def __init__(self, values):
        vals = tuple(Fraction(v) for v in values)
        if any(v <= 0 for v in vals):
            raise ValueError("exponents must be positive")
        object.__setattr__(self, "values", vals)

    @property
    def omega(self) -> int:
        """Least common denominator of the exponents."""
        return math.lcm(*(v.denominator for v in self.values))

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def weight_from_exponents(
    quiver: BipartiteQuiver, exponents: ExponentTuple, dims: Mapping[str, int]
) -> dict[str, int]:
    """Integral weight induced by an exponent tuple: omega on every source,
    -omega * p_j on the j-th sink.

    The balance condition sum(d(v_i)) == sum(p_j * d(w_j)) is checked in
    exact rational arithmetic before any weight is produced.
    """
    if len(exponents) != len(quiver.sinks):
        raise ValueError("need one exponent per sink")
    lhs = Fraction(sum(dims[v] for v in quiver.sources))
    rhs = sum((p * dims[w] for p, w in zip(exponents, quiver.sinks)), Fraction(0))
    if lhs != rhs:
        raise ValueError(f"exponents not orthogonal to dims: {lhs} != {rhs}")
    omega = exponents.omega
    weight = {v: omega for v in quiver.sources}
    for p, w in zip(exponents, quiver.sinks):
        scaled = omega * p
        assert scaled.denominator == 1
        weight[w] = -int(scaled)
    return weight


# ---------------------------------------------------------------------------
# base-change group action, character, endomorphisms, direct sums


def identity_group(dims: Mapping[str, int]) -> GroupElement:
    return {x: np.eye(d) for x, d in dims.items()}


def compose_group(second: GroupElement, first: GroupElement) -> GroupElement:
    """Blockwise product second @ first."""
    return {x: second[x] @ first[x] for x in first}


def group_condition(group: GroupElement) -> float:
    """Largest 2-norm condition number over the blocks."""
    return max(np.linalg.cond(block) for block in group.values())


def act(
    quiver: BipartiteQuiver, group: GroupElement, rep: Mapping[str, Matrix]
) -> dict[str, Matrix]:
    """Base change: arrow matrix V(a) becomes A(head) V(a) A(tail)^{-1}."""
    out = {}
    for a in quiver.arrows:
        m = group[a.head] @ rep[a.name]
        # right-multiply by A(tail)^{-1} without forming the inverse
        out[a.name] = np.linalg.solve(group[a.tail].T, m.T).T
    return out


def act_datum(datum: QuiverDatum, group: GroupElement) -> QuiverDatum:
    return QuiverDatum(
        datum.quiver, datum.dims, datum.weight, act(datum.quiver, group, datum.rep)
    )


def character(group: GroupElement, weight: Mapping[str, int]) -> float:
    """Product over vertices of det(A(x)) ** weight(x)."""
    value = 1.0
    for x, s in weight.items():
        det = np.linalg.det(group[x])
        if det == 0.0 and s < 0:
            raise ZeroDivisionError(f"singular block at {x!r} with negative weight")
        value *= det**s
    return value


def log_abs_character(group: GroupElement, weight: Mapping[str, int]) -> float:
    """log |character|, stable for large or tiny determinants."""
    total = 0.0
    for x, s in weight.items():
        sign, logdet = np.linalg.slogdet(group[x])
        if sign == 0.0:
            raise ZeroDivisionError(f"singular block at {x!r}")
        total += s * logdet
    return total


def endomorphism_dim(
    quiver: BipartiteQuiver, dims: Mapping[str, int], rep: Mapping[str, Matrix]
) -> int:
    """Dimension of the algebra of tuples E(x) with E(head) V(a) = V(a) E(tail).

    Computed as the null-space dimension of the stacked linear system, with
    singular values below RANK_RTOL times the largest treated as zero.
    """
    order = list(quiver.vertices)
    offsets = {}
    total = 0
    for x in order:
        offsets[x] = total
        total += dims[x] ** 2

    rows = []
    for a in quiver.arrows:
        v = np.asarray(rep[a.name], dtype=float)
        dh, dt = dims[a.head], dims[a.tail]
        block = np.zeros((dh * dt, total))
        # vec(E(head) V) = (V^T kron I_dh) vec(E(head))
        block[:, offsets[a.head] : offsets[a.head] + dh * dh] = np.kron(v.T, np.eye(dh))
        # vec(V E(tail)) = (I_dt kron V) vec(E(tail))
        block[:, offsets[a.tail] : offsets[a.tail] + dt * dt] -= np.kron(np.eye(dt), v)
        rows.append(block)

    if not rows:
        return total
    system = np.vstack(rows)
    svals = np.linalg.svd(system, compute_uv=False)
    cutoff = RANK_RTOL * (svals[0] if svals.size else 0.0)
    rank = int(np.sum(svals > cutoff))
    return total - rank


def direct_sum(
    quiver: BipartiteQuiver,
    dims1: Mapping[str, int],
    rep1: Mapping[str, Matrix],
    dims2: Mapping[str, int],
    rep2: Mapping[str, Matrix],
    offdiag: Optional[Mapping[str, Matrix]] = None,
) -> dict[str, Matrix]:
    """Block upper-triangular representation [[V1, X], [0, V2]] per arrow.

    The off-diagonal block X(a) has shape d1(head) x d2(tail); omitted blocks
    are zero.
    """
    out = {}
    for a in quiver.arrows:
        m1 = np.asarray(rep1[a.name], dtype=float)
        m2 = np.asarray(rep2[a.name], dtype=float)
        if m1.shape != (dims1[a.head], dims1[a.tail]):
            raise ValueError(f"first summand shape mismatch at arrow {a.name!r}")
        if m2.shape != (dims2[a.head], dims2[a.tail]):
            raise ValueError(f"second summand shape mismatch at arrow {a.name!r}")
        x = np.zeros((dims1[a.head], dims2[a.tail]))
        if offdiag is not None and a.name in offdiag:
            x = np.asarray(offdiag[a.name], dtype=float)
            if x.shape != (dims1[a.head], dims2[a.tail]):
                raise ValueError(f"off-diagonal shape mismatch at arrow {a.name!r}")
        top = np.hstack([m1, x])
        bottom = np.hstack([np.zeros((dims2[a.head], dims1[a.tail])), m2])
        out[a.name] = np.vstack([top, bottom])
    return out


def sum_dims(dims1: Mapping[str, int], dims2: Mapping[str, int]) -> dict[str, int]:
    return {x: dims1[x] + dims2[x] for x in dims1}
