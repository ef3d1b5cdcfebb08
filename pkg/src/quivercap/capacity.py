"""Determinantal capacity objective, gaussian extremisers, and a brute-force oracle.

The capacity of a datum is the infimum over tuples of positive definite sink
matrices Y = (Y_1, ..., Y_m) of

    prod_i det( sum_j sigma_-(w_j) sum_{a: v_i -> w_j} V(a)^T Y_j V(a) )^{sigma_+(v_i)}
    ----------------------------------------------------------------------------------
                      prod_j det(Y_j)^{sigma_-(w_j)}

All determinant products are evaluated in log space through Cholesky
factorisations.  A minimiser, when one exists, satisfies the stationarity
equations

    sum_i sigma_+(v_i) sum_a V(a) M_i(Y)^{-1} V(a)^T = Y_j^{-1}

which drive the fixed-point iteration here.  ``brute_force_capacity``
minimises det T(X) over determinant-one positive definite X directly (Cholesky
parametrisation, quasi-Newton descent, seeded restarts) and never touches the
scaling or fixed-point code paths; it is the independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .blowup import index_sets, kraus_dense
from .model import Matrix, QuiverDatum
from .scaling import ScalingConfig, ScalingReport, run_scaling

LOGDET_FLOOR = -700.0  # natural log; below this a numerator block counts as zero
ZERO_FLOOR = 1e-30
ZERO_PATIENCE = 50

GramTuple = list[Matrix]  # one SPD matrix per sink, in sink order


class DegenerateDirectionError(RuntimeError):
    """The fixed-point update ran into a singular block; the objective infimum
    is zero along this path."""


@dataclass
class CapacityConfig:
    seed: int = 0
    restarts: int = 8
    oracle_cap: int = 16
    max_fixed_point_iter: int = 20_000
    rel_tol: float = 1e-13
    residual_tol: float = 1e-6


@dataclass
class CapacityEstimate:
    value: float
    method: Literal["scaling", "fixed_point", "brute_force"]
    extremiser: Optional[GramTuple] = None
    residual: Optional[float] = None


def _check_gram(datum: QuiverDatum, ys: Sequence[Matrix]) -> list[Matrix]:
    sinks = datum.quiver.sinks
    if len(ys) != len(sinks):
        raise ValueError("need one matrix per sink")
    out = []
    for w, y in zip(sinks, ys):
        y = np.asarray(y, dtype=float)
        d = datum.dims[w]
        if y.shape != (d, d):
            raise ValueError(f"matrix for sink {w!r} has shape {y.shape}, expected {(d, d)}")
        y = (y + y.T) / 2.0
        if _logdet_spd(y) is None:
            raise ValueError(f"matrix for sink {w!r} is not positive definite")
        out.append(y)
    return out


def _logdet_spd(mat: Matrix) -> Optional[float]:
    """log det via Cholesky; None when the matrix is not positive definite."""
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def source_blocks(datum: QuiverDatum, ys: Sequence[Matrix]) -> list[Matrix]:
    """The matrices M_i(Y) = sum_j sigma_-(w_j) sum_a V(a)^T Y_j V(a)."""
    quiver = datum.quiver
    out = [np.zeros((datum.dims[v], datum.dims[v])) for v in quiver.sources]
    for a in quiver.arrows:
        i = quiver.source_index[a.tail]
        j = quiver.sink_index[a.head]
        v = datum.rep[a.name]
        out[i] += datum.sigma_minus[j] * (v.T @ ys[j] @ v)
    return out


def log_objective(datum: QuiverDatum, ys: Sequence[Matrix]) -> Optional[float]:
    """log of the determinantal objective, or None when a numerator block is
    singular or underflows (the objective value is then zero)."""
    ys = _check_gram(datum, ys)
    total = 0.0
    for s, block in zip(datum.sigma_plus, source_blocks(datum, ys)):
        ld = _logdet_spd(block)
        if ld is None or ld < LOGDET_FLOOR:
            return None
        total += s * ld
    for s, y in zip(datum.sigma_minus, ys):
        ld = _logdet_spd(y)
        if ld is None:
            raise ValueError("gram tuple entry is not positive definite")
        total -= s * ld
    return total


def objective(datum: QuiverDatum, ys: Sequence[Matrix]) -> float:
    """Determinantal capacity objective; zero when a numerator block degenerates."""
    lo = log_objective(datum, ys)
    return 0.0 if lo is None else math.exp(lo)


def fixed_point_step(datum: QuiverDatum, ys: Sequence[Matrix]) -> GramTuple:
    """One stationarity update: Y_j <- (sum_i sigma_+(v_i) sum_a V(a) M_i^{-1} V(a)^T)^{-1}."""
    ys = _check_gram(datum, ys)
    quiver = datum.quiver
    blocks = source_blocks(datum, ys)
    inverses = []
    for v, m in zip(quiver.sources, blocks):
        try:
            inverses.append(np.linalg.inv((m + m.T) / 2.0))
        except np.linalg.LinAlgError:
            raise DegenerateDirectionError(f"singular source block at {v!r}")
    out = []
    for j, w in enumerate(quiver.sinks):
        d = datum.dims[w]
        acc = np.zeros((d, d))
        for i in range(len(quiver.sources)):
            s = datum.sigma_plus[i]
            for a in quiver.arrow_grid[i][j]:
                v = datum.rep[a.name]
                acc += s * (v @ inverses[i] @ v.T)
        try:
            y_new = np.linalg.inv((acc + acc.T) / 2.0)
        except np.linalg.LinAlgError:
            raise DegenerateDirectionError(f"singular update at sink {w!r}")
        y_new = (y_new + y_new.T) / 2.0
        if _logdet_spd(y_new) is None:
            raise DegenerateDirectionError(f"update lost positivity at sink {w!r}")
        out.append(y_new)
    return out


def stationarity_residual(datum: QuiverDatum, ys: Sequence[Matrix]) -> float:
    """Relative Frobenius mismatch of the stationarity equations, summed over sinks."""
    ys = _check_gram(datum, ys)
    quiver = datum.quiver
    blocks = source_blocks(datum, ys)
    inverses = [np.linalg.inv((m + m.T) / 2.0) for m in blocks]
    total = 0.0
    for j, w in enumerate(quiver.sinks):
        d = datum.dims[w]
        acc = np.zeros((d, d))
        for i in range(len(quiver.sources)):
            s = datum.sigma_plus[i]
            for a in quiver.arrow_grid[i][j]:
                v = datum.rep[a.name]
                acc += s * (v @ inverses[i] @ v.T)
        target = np.linalg.inv(ys[j])
        total += np.linalg.norm(acc - target) / np.linalg.norm(target)
    return total


def minimize_Y(datum: QuiverDatum, cfg: Optional[CapacityConfig] = None) -> CapacityEstimate:
    """Descend the determinantal objective by damped fixed-point iteration.

    Starts from identity matrices (exact for geometric data).  Each full step
    is accepted only if it does not increase the log objective; otherwise the
    step is damped by backtracking.  Sustained descent below the zero floor,
    or a degenerate update, is reported as capacity zero without extremiser.
    """
    cfg = cfg or CapacityConfig()
    ys: GramTuple = [np.eye(datum.dims[w]) for w in datum.quiver.sinks]
    lo = log_objective(datum, ys)
    if lo is None:
        return CapacityEstimate(0.0, "fixed_point")

    tiny_run = 0
    for _ in range(cfg.max_fixed_point_iter):
        try:
            proposal = fixed_point_step(datum, ys)
        except DegenerateDirectionError:
            return CapacityEstimate(0.0, "fixed_point")

        accepted = None
        t = 1.0
        while t >= 2.0**-30:
            trial = [(1.0 - t) * y + t * p for y, p in zip(ys, proposal)]
            try:
                lt = log_objective(datum, trial)
            except ValueError:  # trial lost positivity; damp harder
                lt = None
            if lt is not None and lt <= lo + 1e-12 * max(1.0, abs(lo)):
                accepted = (trial, lt)
                break
            t /= 2.0
        if accepted is None:
            break
        new_ys, new_lo = accepted

        if new_lo < math.log(ZERO_FLOOR):
            tiny_run += 1
            if tiny_run >= ZERO_PATIENCE:
                return CapacityEstimate(0.0, "fixed_point")
        else:
            tiny_run = 0

        done = abs(new_lo - lo) < cfg.rel_tol * max(1.0, abs(lo))
        ys, lo = new_ys, new_lo
        if done:
            break

    residual = stationarity_residual(datum, ys)
    extremiser = ys if residual <= cfg.residual_tol else None
    return CapacityEstimate(math.exp(lo), "fixed_point", extremiser, residual)


def extremiser_from_scaling(report: ScalingReport) -> GramTuple:
    """Gaussian extremiser A(w_j)^T A(w_j) read off a converged scaling run."""
    if not report.converged:
        raise ValueError("scaling did not converge; no extremiser available")
    out = []
    for w in report.datum.quiver.sinks:
        block = report.group[w]
        out.append(block.T @ block)
    return out


# ---------------------------------------------------------------------------
# brute-force oracle


def brute_force_capacity(datum: QuiverDatum, cfg: Optional[CapacityConfig] = None) -> float:
    """Minimise det T(X) over positive definite X with det X = 1, directly.

    X is parametrised as (det G)^{-1/N} G with G = C C^T and C lower
    triangular with positive diagonal, which turns the problem into smooth
    unconstrained descent; the operator is evaluated through the dense Kraus
    matrices only.  Multiple seeded restarts guard against bad starts.  This
    path is deliberately independent of the scaling and fixed-point solvers.
    """
    cfg = cfg or CapacityConfig()
    n = datum.total_dim
    if n > cfg.oracle_cap:
        raise ValueError(f"oracle limited to total dimension {cfg.oracle_cap}, got {n}")

    kraus = kraus_dense(datum, index_sets(datum))
    if not kraus:
        return 0.0

    tril = np.tril_indices(n, k=-1)
    n_off = tril[0].size

    def unpack(params: np.ndarray) -> Matrix:
        c = np.zeros((n, n))
        c[tril] = params[:n_off]
        np.fill_diagonal(c, np.exp(params[n_off:]))
        return c

    def t_of(g: Matrix) -> Matrix:
        acc = np.zeros_like(g)
        for k in kraus:
            acc += k.T @ g @ k
        return acc

    def t_adjoint_of(h: Matrix) -> Matrix:
        acc = np.zeros_like(h)
        for k in kraus:
            acc += k @ h @ k.T
        return acc

    singular_seen = False

    def objective_grad(params: np.ndarray):
        nonlocal singular_seen
        c = unpack(params)
        g = c @ c.T
        tg = t_of(g)
        ld_t = _logdet_spd(tg)
        if ld_t is None:
            # det T(X) = 0 at a strictly positive X: the infimum is zero
            singular_seen = True
            return -np.inf, np.zeros_like(params)
        ld_g = 2.0 * float(np.sum(np.log(np.diag(c))))
        value = ld_t - ld_g
        # d logdet T(G) = <T*(T(G)^{-1}), dG>, d logdet G = <G^{-1}, dG>
        w = t_adjoint_of(np.linalg.inv(tg)) - np.linalg.inv(g)
        grad_c = 2.0 * w @ c
        grad = np.empty_like(params)
        grad[:n_off] = grad_c[tril]
        grad[n_off:] = np.diag(grad_c) * np.diag(c)
        return value, grad

    seeds = np.random.SeedSequence(cfg.seed).spawn(max(cfg.restarts, 1))
    best = np.inf
    for idx, seq in enumerate(seeds):
        rng = np.random.default_rng(seq)
        if idx == 0:
            start = np.zeros(n_off + n)  # C = I, i.e. X = I
        else:
            start = np.concatenate(
                [0.5 * rng.standard_normal(n_off), 0.25 * rng.standard_normal(n)]
            )
        try:
            res = minimize(
                objective_grad,
                start,
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": 2000, "ftol": 1e-16, "gtol": 1e-12},
            )
        except (OverflowError, FloatingPointError):  # pragma: no cover
            continue
        if singular_seen:
            return 0.0
        if np.isfinite(res.fun):
            best = min(best, float(res.fun))

    if not np.isfinite(best) or best < math.log(ZERO_FLOOR):
        return 0.0
    return math.exp(best)


# ---------------------------------------------------------------------------
# factorization of the capacity along block-triangular structure


@dataclass
class FactorizationReport:
    capacity_total: Optional[float]
    capacity_first: Optional[float]
    capacity_second: Optional[float]
    relative_gap: Optional[float]
    statuses: tuple[str, str, str]


def split_block_triangular(
    datum: QuiverDatum, dims1: dict[str, int]
) -> tuple[QuiverDatum, QuiverDatum, dict[str, Matrix]]:
    """Split a representation whose arrow matrices are block upper triangular
    with top-left blocks of shape dims1.

    Requires exact zeros in the bottom-left blocks and sigma . dims1 = 0.
    """
    quiver = datum.quiver
    dims2 = {}
    for x in quiver.vertices:
        d1 = dims1.get(x)
        if d1 is None or not 1 <= d1 < datum.dims[x]:
            raise ValueError(f"block annotation must satisfy 1 <= d1 < d at {x!r}")
        dims2[x] = datum.dims[x] - d1
    dot = sum(datum.weight[x] * dims1[x] for x in quiver.vertices)
    if dot != 0:
        raise ValueError(f"weight not orthogonal to the first block (sigma.d1 = {dot})")

    rep1, rep2, off = {}, {}, {}
    for a in quiver.arrows:
        m = datum.rep[a.name]
        ht, tt = dims1[a.head], dims1[a.tail]
        lower_left = m[ht:, :tt]
        if np.any(lower_left != 0.0):
            raise ValueError(f"arrow {a.name!r} is not block upper triangular")
        rep1[a.name] = m[:ht, :tt]
        rep2[a.name] = m[ht:, tt:]
        off[a.name] = m[:ht, tt:]

    first = QuiverDatum(quiver, dims1, datum.weight, rep1)
    second = QuiverDatum(quiver, dims2, datum.weight, rep2)
    return first, second, off


def factorization_check(
    datum: QuiverDatum,
    dims1: dict[str, int],
    cfg: Optional[ScalingConfig] = None,
    floor: float = 1e-12,
) -> FactorizationReport:
    """Compare the capacity of a block-triangular datum with the product of its
    diagonal blocks' capacities, all through the scaling solver."""
    first, second, _ = split_block_triangular(datum, dims1)
    reports = [run_scaling(d, cfg) for d in (datum, first, second)]
    caps = [r.capacity for r in reports]
    statuses = tuple(r.status for r in reports)
    if any(c is None for c in caps):
        return FactorizationReport(caps[0], caps[1], caps[2], None, statuses)
    product = caps[1] * caps[2]
    gap = abs(caps[0] - product) / max(product, floor)
    return FactorizationReport(caps[0], caps[1], caps[2], gap, statuses)
