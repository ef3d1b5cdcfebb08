"""Ready-made quiver data: hand instances, geometric families, random samplers.

Everything here is deterministic given a numpy Generator.  The geometric
constructions satisfy the doubly stochastic equations exactly (up to float
round-off) by design: partitioned orthogonal matrices, scaled identities,
and direct sums thereof.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Optional

import numpy as np

from .bl import BLDatum
from .model import (
    Arrow,
    BipartiteQuiver,
    ExponentTuple,
    GroupElement,
    QuiverDatum,
    direct_sum,
    sum_dims,
)

# ---------------------------------------------------------------------------
# hand instances


def kronecker(value: float = 2.0, num_arrows: int = 1, dim: int = 1, matrices=None) -> QuiverDatum:
    """Generalized Kronecker quiver v -> w with weight (1, -1)."""
    arrows = [Arrow(f"a{k}", "v", "w") for k in range(num_arrows)]
    quiver = BipartiteQuiver(["v"], ["w"], arrows)
    if matrices is None:
        matrices = [value * np.eye(dim) for _ in range(num_arrows)]
    rep = {a.name: m for a, m in zip(arrows, matrices)}
    return QuiverDatum(quiver, {"v": dim, "w": dim}, {"v": 1, "w": -1}, rep)


def zero_representation(dim: int = 2) -> QuiverDatum:
    """Kronecker datum with the zero matrix; not semi-stable."""
    return kronecker(0.0, dim=dim)


def row_projector_datum() -> QuiverDatum:
    """dims (2; 1), weight (1, -2), V = [1 0]; the span of e_2 violates the
    subspace inequality, so the capacity is zero."""
    quiver = BipartiteQuiver(["v"], ["w"], [Arrow("a", "v", "w")])
    return QuiverDatum(quiver, {"v": 2, "w": 1}, {"v": 1, "w": -2}, {"a": np.array([[1.0, 0.0]])})


def common_kernel_pair() -> BLDatum:
    """Two subspace maps sharing the kernel e_2; infeasible for p = (1, 1)."""
    quiver = BipartiteQuiver(
        ["v"], ["w1", "w2"], [Arrow("a1", "v", "w1"), Arrow("a2", "v", "w2")]
    )
    rep = {"a1": np.array([[1.0, 0.0]]), "a2": np.array([[1.0, 0.0]])}
    return BLDatum(quiver, {"v": 2, "w1": 1, "w2": 1}, rep, ExponentTuple([1, 1]))


def hoelder_datum(m: int = 3) -> BLDatum:
    """m coordinate-row maps from R^m with exponents all one; geometric in both
    normalisations and BL constant exactly one."""
    sinks = [f"w{j}" for j in range(1, m + 1)]
    arrows = [Arrow(f"a{j}", "v", w) for j, w in enumerate(sinks, start=1)]
    quiver = BipartiteQuiver(["v"], sinks, arrows)
    dims = {"v": m, **{w: 1 for w in sinks}}
    rep = {f"a{j}": np.eye(m)[j - 1 : j, :] for j in range(1, m + 1)}
    return BLDatum(quiver, dims, rep, ExponentTuple([1] * m))


def two_subspace_half_identity(dim: int = 2) -> QuiverDatum:
    """Two copies of (1/sqrt(2)) I with weight (2, -1, -1); geometric."""
    quiver = BipartiteQuiver(
        ["v"], ["w1", "w2"], [Arrow("a1", "v", "w1"), Arrow("a2", "v", "w2")]
    )
    half = np.eye(dim) / math.sqrt(2.0)
    return QuiverDatum(
        quiver,
        {"v": dim, "w1": dim, "w2": dim},
        {"v": 2, "w1": -1, "w2": -1},
        {"a1": half, "a2": half},
    )


def subspace_datum(matrices, exponents) -> BLDatum:
    """m-subspace datum from explicit row maps out of a common source."""
    matrices = [np.atleast_2d(np.asarray(m, dtype=float)) for m in matrices]
    m = len(matrices)
    sinks = [f"w{j}" for j in range(1, m + 1)]
    arrows = [Arrow(f"a{j}", "v", w) for j, w in enumerate(sinks, start=1)]
    quiver = BipartiteQuiver(["v"], sinks, arrows)
    dims = {"v": matrices[0].shape[1]}
    rep = {}
    for j, mat in enumerate(matrices, start=1):
        dims[f"w{j}"] = mat.shape[0]
        rep[f"a{j}"] = mat
    return BLDatum(quiver, dims, rep, ExponentTuple(exponents))


# ---------------------------------------------------------------------------
# geometric constructions


def haar_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def row_partition_geometric(rng: np.random.Generator, sink_dims: list[int]) -> QuiverDatum:
    """One source, sinks of given dimensions; arrow matrices are the row blocks
    of a Haar orthogonal matrix, weight (1; -1, ..., -1).  The marginals are
    identities by orthogonality."""
    d = sum(sink_dims)
    o = haar_orthogonal(rng, d)
    sinks = [f"w{j}" for j in range(1, len(sink_dims) + 1)]
    arrows = [Arrow(f"a{j}", "v", w) for j, w in enumerate(sinks, start=1)]
    quiver = BipartiteQuiver(["v"], sinks, arrows)
    dims = {"v": d}
    weight = {"v": 1}
    rep = {}
    lo = 0
    for j, (w, dw) in enumerate(zip(sinks, sink_dims), start=1):
        dims[w] = dw
        weight[w] = -1
        rep[f"a{j}"] = o[lo : lo + dw, :]
        lo += dw
    return QuiverDatum(quiver, dims, weight, rep)


def column_partition_geometric(rng: np.random.Generator, source_dims: list[int]) -> QuiverDatum:
    """Sources of given dimensions feeding one sink through the column blocks
    of a Haar orthogonal matrix, weight (1, ..., 1; -1)."""
    d = sum(source_dims)
    o = haar_orthogonal(rng, d)
    sources = [f"v{i}" for i in range(1, len(source_dims) + 1)]
    arrows = [Arrow(f"a{i}", v, "w") for i, v in enumerate(sources, start=1)]
    quiver = BipartiteQuiver(sources, ["w"], arrows)
    dims = {"w": d}
    weight = {"w": -1}
    rep = {}
    lo = 0
    for i, (v, dv) in enumerate(zip(sources, source_dims), start=1):
        dims[v] = dv
        weight[v] = 1
        rep[f"a{i}"] = o[:, lo : lo + dv]
        lo += dv
    return QuiverDatum(quiver, dims, weight, rep)


def orthogonal_kronecker(rng: np.random.Generator, dim: int, num_arrows: int) -> QuiverDatum:
    """Parallel arrows carrying orthogonal matrices scaled by 1/sqrt(k); geometric."""
    mats = [haar_orthogonal(rng, dim) / math.sqrt(num_arrows) for _ in range(num_arrows)]
    return kronecker(num_arrows=num_arrows, dim=dim, matrices=mats)


def geometric_family(rng: np.random.Generator, count: int = 10) -> list[QuiverDatum]:
    """A mixed bag of exactly geometric data, at least ``count`` of them."""
    out: list[QuiverDatum] = [
        hoelder_datum(3).weighted(),
        two_subspace_half_identity(1),
        two_subspace_half_identity(2),
        two_subspace_half_identity(3),
        row_partition_geometric(rng, [2, 1]),
        row_partition_geometric(rng, [1, 1, 2]),
        column_partition_geometric(rng, [1, 2]),
        column_partition_geometric(rng, [2, 2]),
        orthogonal_kronecker(rng, 2, 2),
        orthogonal_kronecker(rng, 3, 3),
    ]
    # direct sums of geometric data on a shared quiver are geometric
    base = two_subspace_half_identity(1)
    other = two_subspace_half_identity(2)
    rep = direct_sum(base.quiver, base.dims, base.rep, other.dims, other.rep)
    out.append(QuiverDatum(base.quiver, sum_dims(base.dims, other.dims), base.weight, rep))
    while len(out) < count:
        out.append(row_partition_geometric(rng, [1, 1]))
    return out[:count] if count <= len(out) else out


# ---------------------------------------------------------------------------
# random samplers


def _connected_arrows(rng: np.random.Generator, n: int, m: int, extra: int) -> list[Arrow]:
    """Random connected bipartite multigraph on n sources and m sinks."""
    pairs: list[tuple[int, int]] = [(0, 0)]
    touched_sources, touched_sinks = {0}, {0}
    order = [("v", i) for i in range(1, n)] + [("w", j) for j in range(1, m)]
    rng.shuffle(order)
    for side, k in order:
        if side == "v":
            partner = int(rng.choice(sorted(touched_sinks)))
            pairs.append((k, partner))
            touched_sources.add(k)
        else:
            partner = int(rng.choice(sorted(touched_sources)))
            pairs.append((partner, k))
            touched_sinks.add(k)
    for _ in range(extra):
        pairs.append((int(rng.integers(0, n)), int(rng.integers(0, m))))
    return [
        Arrow(f"a{k}", f"v{i + 1}", f"w{j + 1}") for k, (i, j) in enumerate(pairs)
    ]


def random_balanced_shape(
    rng: np.random.Generator,
    n_max: int = 3,
    m_max: int = 3,
    d_max: int = 3,
    s_max: int = 3,
    size_cap: Optional[int] = None,
    tries: int = 10_000,
):
    """Sample (quiver, dims, weight) with sigma . d = 0, optionally with the
    total dimension capped."""
    for _ in range(tries):
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, m_max + 1))
        dv = rng.integers(1, d_max + 1, n)
        dw = rng.integers(1, d_max + 1, m)
        sp = rng.integers(1, s_max + 1, n)
        sm = rng.integers(1, s_max + 1, m)
        total = int(np.sum(sp * dv))
        if total != int(np.sum(sm * dw)):
            continue
        if size_cap is not None and total > size_cap:
            continue
        extra = int(rng.integers(0, n * m + 1))
        arrows = _connected_arrows(rng, n, m, extra)
        quiver = BipartiteQuiver(
            [f"v{i}" for i in range(1, n + 1)], [f"w{j}" for j in range(1, m + 1)], arrows
        )
        dims = {f"v{i + 1}": int(dv[i]) for i in range(n)}
        dims.update({f"w{j + 1}": int(dw[j]) for j in range(m)})
        weight = {f"v{i + 1}": int(sp[i]) for i in range(n)}
        weight.update({f"w{j + 1}": -int(sm[j]) for j in range(m)})
        return quiver, dims, weight
    raise RuntimeError("could not sample a balanced shape")


def random_datum(
    rng: np.random.Generator,
    scale: float = 2.0,
    **shape_kwargs,
) -> QuiverDatum:
    """Random valid datum with entries uniform in [-scale, scale]."""
    quiver, dims, weight = random_balanced_shape(rng, **shape_kwargs)
    rep = {
        a.name: rng.uniform(-scale, scale, size=(dims[a.head], dims[a.tail]))
        for a in quiver.arrows
    }
    return QuiverDatum(quiver, dims, weight, rep)


def is_generically_semistable_shape(quiver: BipartiteQuiver, dims, weight) -> bool:
    """Combinatorial test that a generic representation on this shape is
    semi-stable: for every tuple of subspace dimensions s_i at the sources,
    generic arrow images fill min(d(w_j), sum_i #arrows(i,j) s_i), and the
    subspace inequality must hold with those generic image dimensions."""
    n, m = len(quiver.sources), len(quiver.sinks)
    counts = [[len(quiver.arrow_grid[i][j]) for j in range(m)] for i in range(n)]
    sp = [weight[v] for v in quiver.sources]
    sm = [-weight[w] for w in quiver.sinks]
    dv = [dims[v] for v in quiver.sources]
    dw = [dims[w] for w in quiver.sinks]

    def tuples(i):
        if i == n:
            yield []
            return
        for rest in tuples(i + 1):
            for s in range(dv[i] + 1):
                yield [s] + rest

    for s in tuples(0):
        lhs = sum(sp[i] * s[i] for i in range(n))
        rhs = sum(
            sm[j] * min(dw[j], sum(counts[i][j] * s[i] for i in range(n)))
            for j in range(m)
        )
        if lhs > rhs:
            return False
    return True


def random_generic_semistable_datum(
    rng: np.random.Generator, scale: float = 2.0, **shape_kwargs
) -> QuiverDatum:
    """Random datum on a shape whose generic representations are semi-stable."""
    while True:
        quiver, dims, weight = random_balanced_shape(rng, **shape_kwargs)
        if is_generically_semistable_shape(quiver, dims, weight):
            rep = {
                a.name: rng.uniform(-scale, scale, size=(dims[a.head], dims[a.tail]))
                for a in quiver.arrows
            }
            return QuiverDatum(quiver, dims, weight, rep)


def random_converging_datum(
    rng: np.random.Generator,
    scale: float = 2.0,
    probe_iters: int = 4000,
    **shape_kwargs,
):
    """Rejection-sample a random datum until operator scaling converges;
    returns (datum, scaling report)."""
    from .scaling import ScalingConfig, run_scaling

    cfg = ScalingConfig(max_iter=probe_iters)
    while True:
        datum = random_generic_semistable_datum(rng, scale=scale, **shape_kwargs)
        report = run_scaling(datum, cfg)
        if report.converged:
            return datum, report


def random_balanced_dims(rng: np.random.Generator, quiver, weight, d_max=2, tries=10_000):
    """Dimension vector orthogonal to the weight, entries in [1, d_max]."""
    vertices = list(quiver.vertices)
    for _ in range(tries):
        dims = {x: int(rng.integers(1, d_max + 1)) for x in vertices}
        if sum(weight[x] * dims[x] for x in vertices) == 0:
            return dims
    raise RuntimeError("could not sample balanced dims")


def random_block_triangular(
    rng: np.random.Generator, scale: float = 1.5, d_max: int = 2, **shape_kwargs
):
    """Random block upper-triangular datum; returns (datum, dims1)."""
    quiver, _, weight = random_balanced_shape(rng, d_max=d_max, **shape_kwargs)
    dims1 = random_balanced_dims(rng, quiver, weight, d_max=d_max)
    dims2 = random_balanced_dims(rng, quiver, weight, d_max=d_max)
    rep1 = {
        a.name: rng.uniform(-scale, scale, size=(dims1[a.head], dims1[a.tail]))
        for a in quiver.arrows
    }
    rep2 = {
        a.name: rng.uniform(-scale, scale, size=(dims2[a.head], dims2[a.tail]))
        for a in quiver.arrows
    }
    off = {
        a.name: rng.uniform(-scale, scale, size=(dims1[a.head], dims2[a.tail]))
        for a in quiver.arrows
    }
    rep = direct_sum(quiver, dims1, rep1, dims2, rep2, off)
    datum = QuiverDatum(quiver, sum_dims(dims1, dims2), weight, rep)
    return datum, dims1


def random_spd(rng: np.random.Generator, dim: int, jitter: float = 0.3) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) * jitter
    return np.eye(dim) + a @ a.T


def random_group_element(rng: np.random.Generator, dims, spread: float = 0.4) -> GroupElement:
    """Well-conditioned random block tuple (identity plus a small perturbation)."""
    out = {}
    for x, d in dims.items():
        out[x] = np.eye(d) + spread * rng.standard_normal((d, d)) / max(1.0, math.sqrt(d))
    return out


def random_unit_character_group(
    rng: np.random.Generator, dims, weight, spread: float = 0.4
) -> GroupElement:
    """Random group element rescaled so |character| is exactly one, by
    compensating on the first block."""
    group = random_group_element(rng, dims, spread)
    total = 0.0
    for x, s in weight.items():
        sign, logdet = np.linalg.slogdet(group[x])
        total += s * logdet
    first = next(iter(dims))
    exponent = weight[first] * dims[first]
    group[first] = group[first] * math.exp(-total / exponent)
    return group


def scale_representation(datum: QuiverDatum, c: float) -> QuiverDatum:
    return QuiverDatum(
        datum.quiver, datum.dims, datum.weight, {k: c * m for k, m in datum.rep.items()}
    )
