"""Brascamp-Lieb constants for quiver data with rational exponents.

An exponent tuple p = (p_1, ..., p_m) on the sinks, balanced against the
dimensions (sum_i d(v_i) = sum_j p_j d(w_j)), induces the integral weight
sigma_p with value omega on every source and -omega p_j on the j-th sink,
omega being the least common denominator.  The BL constant is a power-law
transform of the capacity for sigma_p:

    BL = (omega^{-N} D)^{-1/(2 omega)}   when D > 0,   infinity when D = 0.

For a converged scaling run the constant is also the character of the
group element in BL normalisation, |chi_p(A)|^{-1/omega}; reports carry both
routes and their gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .capacity import CapacityConfig
from .model import (
    ExponentTuple,
    GroupElement,
    Matrix,
    QuiverDatum,
    weight_from_exponents,
)
from .scaling import Decision, ScalingConfig, ScalingReport, decide_semistable, run_scaling


@dataclass(frozen=True, eq=False)
class BLDatum:
    """Representation plus exponent tuple; the weighted datum is derived.

    Compare with :func:`quivercap.model.datum_equal`.
    """

    quiver: object
    dims: dict[str, int]
    rep: dict[str, Matrix]
    exponents: ExponentTuple

    def __init__(self, quiver, dims, rep, exponents):
        if not isinstance(exponents, ExponentTuple):
            exponents = ExponentTuple(exponents)
        object.__setattr__(self, "quiver", quiver)
        object.__setattr__(self, "dims", dict(dims))
        object.__setattr__(self, "rep", dict(rep))
        object.__setattr__(self, "exponents", exponents)

    @property
    def omega(self) -> int:
        return self.exponents.omega

    def weighted(self) -> QuiverDatum:
        """The capacity-side datum (V, sigma_p); raises if the exponents are
        not balanced against the dimensions."""
        weight = weight_from_exponents(self.quiver, self.exponents, self.dims)
        return QuiverDatum(self.quiver, self.dims, weight, self.rep)


@dataclass
class BLReport:
    bl: float  # math.inf when infeasible
    feasible: bool
    capacity: Optional[float]
    omega: int
    geometric_bl: bool
    status: str
    character_route: Optional[float] = None
    route_gap: Optional[float] = None
    scaling: Optional[ScalingReport] = None


def bl_from_capacity(capacity: float, omega: int, total_dim: int) -> float:
    """(omega^{-N} D)^{-1/(2 omega)} computed in log space; infinity at D = 0."""
    if capacity < 0:
        raise ValueError("capacity must be nonnegative")
    if capacity == 0.0:
        return math.inf
    log_bl = -(math.log(capacity) - total_dim * math.log(omega)) / (2.0 * omega)
    return math.exp(log_bl)


def log_abs_bl_character(
    group: GroupElement, quiver, exponents: ExponentTuple
) -> float:
    """log |chi_p(A)| = omega sum_i log|det A(v_i)| - omega sum_j p_j log|det A(w_j)|."""
    omega = exponents.omega
    total = 0.0
    for v in quiver.sources:
        sign, logdet = np.linalg.slogdet(group[v])
        if sign == 0.0:
            raise ZeroDivisionError(f"singular block at {v!r}")
        total += omega * logdet
    for p, w in zip(exponents, quiver.sinks):
        sign, logdet = np.linalg.slogdet(group[w])
        if sign == 0.0:
            raise ZeroDivisionError(f"singular block at {w!r}")
        total -= float(omega * p) * logdet
    return total


def is_geometric_bl(bldatum: BLDatum, tol: float = 1e-10) -> bool:
    """Check the BL normalisation of the doubly stochastic equations:
    sum_j p_j sum_a V(a)^T V(a) = I at sources, sum_i sum_a V(a) V(a)^T = I
    at sinks, within Frobenius tolerance."""
    quiver = bldatum.quiver
    dims = bldatum.dims
    p = [float(v) for v in bldatum.exponents]
    for i, v_id in enumerate(quiver.sources):
        acc = np.zeros((dims[v_id], dims[v_id]))
        for j in range(len(quiver.sinks)):
            for a in quiver.arrow_grid[i][j]:
                m = np.asarray(bldatum.rep[a.name], dtype=float)
                acc += p[j] * (m.T @ m)
        if np.linalg.norm(acc - np.eye(dims[v_id])) > tol:
            return False
    for j, w_id in enumerate(quiver.sinks):
        acc = np.zeros((dims[w_id], dims[w_id]))
        for i in range(len(quiver.sources)):
            for a in quiver.arrow_grid[i][j]:
                m = np.asarray(bldatum.rep[a.name], dtype=float)
                acc += m @ m.T
        if np.linalg.norm(acc - np.eye(dims[w_id])) > tol:
            return False
    return True


def feasibility(bldatum: BLDatum, cfg: Optional[ScalingConfig] = None) -> Decision:
    """Finite BL constant is equivalent to semi-stability for the induced weight."""
    return decide_semistable(bldatum.weighted(), cfg)


def bl_constant(
    bldatum: BLDatum,
    cfg: Optional[ScalingConfig] = None,
    capacity_cfg: Optional[CapacityConfig] = None,
) -> BLReport:
    """Compute the BL constant by scaling the induced capacity datum.

    On convergence the report also carries the character-route value obtained
    from the accumulated group element in BL normalisation (sink blocks
    multiplied by omega^{1/2}); the two routes agree up to solver tolerance
    and their gap is reported rather than averaged away.
    """
    datum = bldatum.weighted()
    omega = bldatum.omega
    report = run_scaling(datum, cfg)
    geometric = is_geometric_bl(bldatum)

    if report.status == "capacity_zero":
        return BLReport(
            bl=math.inf,
            feasible=False,
            capacity=0.0,
            omega=omega,
            geometric_bl=geometric,
            status=report.status,
            scaling=report,
        )
    if report.status == "indeterminate":
        return BLReport(
            bl=math.nan,
            feasible=False,
            capacity=None,
            omega=omega,
            geometric_bl=geometric,
            status=report.status,
            scaling=report,
        )

    value = bl_from_capacity(report.capacity, omega, datum.total_dim)

    # character route: undo the omega^{-1/2} sink rescaling of the dictionary
    bl_group = {x: np.array(b) for x, b in report.group.items()}
    for w in bldatum.quiver.sinks:
        bl_group[w] = math.sqrt(omega) * bl_group[w]
    log_chi = log_abs_bl_character(bl_group, bldatum.quiver, bldatum.exponents)
    character_route = math.exp(-log_chi / omega)
    gap = abs(value - character_route) / max(abs(value), 1e-300)

    return BLReport(
        bl=value,
        feasible=True,
        capacity=report.capacity,
        omega=omega,
        geometric_bl=geometric,
        status=report.status,
        character_route=character_route,
        route_gap=gap,
        scaling=report,
    )
