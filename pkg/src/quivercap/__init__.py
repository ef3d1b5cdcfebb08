"""Capacity of bipartite quiver data and Brascamp-Lieb constants.

The package computes the capacity of a quiver datum (a bipartite quiver
representation with an orthogonal integral weight) by alternating operator
scaling, decides semi-stability and polystability numerically, extracts
gaussian extremisers, and evaluates Brascamp-Lieb constants for rational
exponent tuples.  A brute-force determinant minimiser serves as an
independent oracle at desk scale.
"""

from .bl import BLDatum, BLReport, bl_constant, bl_from_capacity, feasibility, is_geometric_bl
from .blowup import IndexSets, apply_T, apply_T_adjoint, index_sets, kraus_dense
from .capacity import (
    CapacityConfig,
    CapacityEstimate,
    brute_force_capacity,
    extremiser_from_scaling,
    factorization_check,
    fixed_point_step,
    log_objective,
    minimize_Y,
    objective,
    stationarity_residual,
)
from .model import (
    Arrow,
    BipartiteQuiver,
    ExponentTuple,
    QuiverDatum,
    act,
    act_datum,
    bipartite_reduce,
    character,
    direct_sum,
    endomorphism_dim,
    log_abs_character,
    validate_datum,
    weight_from_exponents,
)
from .scaling import (
    ScalingConfig,
    ScalingReport,
    SubspaceWitness,
    decide_polystable,
    decide_semistable,
    ds_distance,
    rank_witness_search,
    run_scaling,
    verify_witness,
)

__version__ = "0.1.0"

__all__ = [
    "Arrow",
    "BipartiteQuiver",
    "BLDatum",
    "BLReport",
    "CapacityConfig",
    "CapacityEstimate",
    "ExponentTuple",
    "IndexSets",
    "QuiverDatum",
    "ScalingConfig",
    "ScalingReport",
    "SubspaceWitness",
    "act",
    "act_datum",
    "apply_T",
    "apply_T_adjoint",
    "bipartite_reduce",
    "bl_constant",
    "bl_from_capacity",
    "brute_force_capacity",
    "character",
    "decide_polystable",
    "decide_semistable",
    "direct_sum",
    "ds_distance",
    "endomorphism_dim",
    "extremiser_from_scaling",
    "factorization_check",
    "feasibility",
    "fixed_point_step",
    "index_sets",
    "is_geometric_bl",
    "kraus_dense",
    "log_abs_character",
    "log_objective",
    "minimize_Y",
    "objective",
    "rank_witness_search",
    "run_scaling",
    "stationarity_residual",
    "validate_datum",
    "verify_witness",
    "weight_from_exponents",
    "__version__",
]
