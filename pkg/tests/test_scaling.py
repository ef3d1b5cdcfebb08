import math

import numpy as np
import pytest

from quivercap.blowup import sink_marginals, source_marginals
from quivercap.capacity import brute_force_capacity
from quivercap.model import Arrow, BipartiteQuiver, QuiverDatum, act_datum
from quivercap.scaling import (
    ScalingConfig,
    ScalingState,
    SingularBlockError,
    decide_polystable,
    decide_semistable,
    ds_distance,
    rank_witness_search,
    rank_violation,
    run_scaling,
    sink_normalize,
    source_normalize,
    verify_witness,
    witness_margin,
)
from quivercap.instances import (
    common_kernel_pair,
    geometric_family,
    hoelder_datum,
    kronecker,
    random_converging_datum,
    random_unit_character_group,
    row_projector_datum,
    scale_representation,
    two_subspace_half_identity,
    zero_representation,
)


def strictly_semistable_datum():
    """Non-split self-extension on the 2-arrow Kronecker quiver: semi-stable,
    not polystable, capacity 25 (product of the diagonal capacities 5 * 5)."""
    quiver = BipartiteQuiver(["v"], ["w"], [Arrow("a1", "v", "w"), Arrow("a2", "v", "w")])
    rep = {"a1": [[1.0, 1.0], [0.0, 1.0]], "a2": [[2.0, 0.0], [0.0, 2.0]]}
    return QuiverDatum(quiver, {"v": 2, "w": 2}, {"v": 1, "w": -1}, rep)


# --- distance ---------------------------------------------------------------


def test_ds_hand_values():
    assert ds_distance(kronecker(2.0)) == pytest.approx(18.0)
    zero = zero_representation(3)
    assert ds_distance(zero) == pytest.approx(2 * zero.total_dim)
    assert ds_distance(two_subspace_half_identity(2)) <= 1e-28


# --- normalisation half-steps -----------------------------------------------


def test_source_normalize_kronecker_trace():
    state = ScalingState(kronecker(2.0))
    source_normalize(state)
    np.testing.assert_allclose(state.current["a0"], [[1.0]])
    np.testing.assert_allclose(state.group["v"], [[2.0]])
    assert state.logabs_character == pytest.approx(math.log(2.0))
    # sink marginal is already the identity afterwards
    sink_normalize(state)
    np.testing.assert_allclose(state.current["a0"], [[1.0]])
    np.testing.assert_allclose(state.group["w"], [[1.0]])


def test_normalize_is_noop_on_geometric():
    datum = two_subspace_half_identity(2)
    state = ScalingState(datum)
    source_normalize(state)
    sink_normalize(state)
    for name in datum.rep:
        np.testing.assert_allclose(state.current[name], datum.rep[name], atol=1e-14)
    assert abs(state.logabs_character) <= 1e-14


def test_normalize_enforces_equations_exactly(rng):
    datum, _ = random_converging_datum(rng, size_cap=12)
    state = ScalingState(datum)
    source_normalize(state)
    for l in source_marginals(state.as_datum()):
        assert np.linalg.norm(l - np.eye(l.shape[0])) <= 1e-12
    sink_normalize(state)
    for r in sink_marginals(state.as_datum()):
        assert np.linalg.norm(r - np.eye(r.shape[0])) <= 1e-12


def test_source_normalize_zero_rep_raises():
    with pytest.raises(SingularBlockError) as info:
        source_normalize(ScalingState(zero_representation(2)))
    assert info.value.side == "source"
    assert info.value.kernel.shape == (2, 2)


# --- the solver ---------------------------------------------------------------


def test_run_scaling_kronecker():
    report = run_scaling(kronecker(2.0))
    assert report.converged and report.status == "converged"
    assert report.capacity == pytest.approx(4.0, abs=1e-12)
    np.testing.assert_allclose(report.group["v"], [[2.0]])
    np.testing.assert_allclose(report.group["w"], [[1.0]])


def test_run_scaling_geometric_converges_immediately():
    report = run_scaling(two_subspace_half_identity(2))
    assert report.converged and report.iterations == 0
    assert report.capacity == pytest.approx(1.0, abs=1e-12)


def test_run_scaling_zero_rep_witness():
    report = run_scaling(zero_representation(2))
    assert report.status == "capacity_zero" and report.capacity == 0.0
    assert report.witness is not None and report.witness_verified
    lhs, rhs = witness_margin(report.datum, report.witness)
    assert lhs == 2 and rhs == 0


def test_run_scaling_row_projector_witness():
    report = run_scaling(row_projector_datum())
    assert report.status == "capacity_zero"
    assert report.witness_verified
    # the witness subspace is the kernel e_2
    basis = report.witness.subspaces["v"]
    assert basis.shape == (2, 1)
    assert abs(abs(basis[1, 0]) - 1.0) <= 1e-12


def test_ds_monotone_and_trace_recorded(convergent_pool):
    for datum, report in convergent_pool:
        trace = report.ds_trace
        assert len(trace) == report.iterations + 2  # initial value plus the extra half-step
        for older, newer in zip(trace[:-2], trace[1:-1]):
            assert newer <= older + 1e-10
        assert report.ds_final <= 1e-12


def test_character_capacity_consistency(convergent_pool):
    for datum, report in convergent_pool[:5]:
        assert report.capacity == math.exp(2.0 * report.logabs_character)
        oracle = brute_force_capacity(datum)
        assert report.capacity == pytest.approx(oracle, rel=1e-4)


def test_orbit_invariance(rng, convergent_pool):
    for datum, report in convergent_pool[:5]:
        group = random_unit_character_group(rng, datum.dims, datum.weight)
        moved = run_scaling(act_datum(datum, group))
        assert moved.converged
        assert moved.capacity == pytest.approx(report.capacity, rel=1e-6)


def test_capacity_homogeneity(convergent_pool):
    for datum, report in convergent_pool[:5]:
        for c in (0.5, 2.0):
            scaled = run_scaling(scale_representation(datum, c))
            assert scaled.converged
            expected = c ** (2 * datum.total_dim) * report.capacity
            assert scaled.capacity == pytest.approx(expected, rel=1e-8)


def test_capacity_independent_of_parallel_arrow_order(rng):
    datum, report = random_converging_datum(rng, size_cap=10)
    quiver = datum.quiver
    reordered = BipartiteQuiver(quiver.sources, quiver.sinks, tuple(reversed(quiver.arrows)))
    permuted = QuiverDatum(reordered, datum.dims, datum.weight, datum.rep)
    again = run_scaling(permuted)
    assert again.capacity == pytest.approx(report.capacity, rel=1e-10)


def test_drift_stays_small(convergent_pool):
    datum, _ = convergent_pool[0]
    state = ScalingState(datum)
    for _ in range(50):
        source_normalize(state)
        sink_normalize(state)
    assert state.drift() <= 1e-10


def test_config_validation():
    with pytest.raises(ValueError, match="threshold"):
        ScalingConfig(tol_ds=1.0).resolve_threshold(4)


# --- decisions ----------------------------------------------------------------


def test_decide_semistable_hand_instances():
    assert decide_semistable(zero_representation(2)) == "no"
    assert decide_semistable(row_projector_datum()) == "no"
    assert decide_semistable(common_kernel_pair().weighted()) == "no"
    assert decide_semistable(two_subspace_half_identity(2)) == "yes"
    assert decide_semistable(hoelder_datum(3).weighted()) == "yes"


def test_decide_polystable_hand_instances():
    assert decide_polystable(two_subspace_half_identity(2)) == "yes"
    assert decide_polystable(zero_representation(2)) == "no"


def test_strictly_semistable_is_indeterminate_at_default_budget():
    datum = strictly_semistable_datum()
    cfg = ScalingConfig(max_iter=2000)
    report = run_scaling(datum, cfg)
    assert report.status == "indeterminate"
    assert report.capacity is None
    assert decide_polystable(datum, cfg) in ("indeterminate", "yes")
    # the character estimate still approaches the limit capacity 25
    longer = run_scaling(datum, ScalingConfig(max_iter=20_000))
    assert longer.capacity_estimate == pytest.approx(25.0, rel=1e-3)


# --- rank witnesses -------------------------------------------------------


def test_rank_witness_zero_rep():
    datum = zero_representation(2)
    x = rank_witness_search(datum)
    assert x is not None
    rank_x, rank_tx = rank_violation(datum, x)
    assert rank_x > rank_tx == 0


def test_rank_witness_row_projector():
    datum = row_projector_datum()
    x = rank_witness_search(datum)
    assert x is not None
    rank_x, rank_tx = rank_violation(datum, x)
    assert rank_x > rank_tx


def test_rank_witness_absent_on_geometric():
    assert rank_witness_search(two_subspace_half_identity(2)) is None


def test_witness_transport_through_group(rng):
    # rotate the row projector instance; the pulled-back witness still verifies
    datum = row_projector_datum()
    group = random_unit_character_group(rng, datum.dims, datum.weight)
    moved = act_datum(datum, group)
    report = run_scaling(moved)
    assert report.status == "capacity_zero"
    assert report.witness is not None
    assert verify_witness(moved, report.witness)
