"""Graphs, model specs, state containers and their JSON interchange."""

import numpy as np
import pytest

from mixflow.errors import (
    DuplicateVertexError,
    GraphError,
    KindMismatchError,
    ModelJsonError,
    NegativeWeightError,
    NotIrreducibleError,
    OutOfRangeError,
    ReservoirMismatchError,
)
from mixflow.models import (
    DualIndex,
    Family,
    ModelSpec,
    ReservoirKind,
    ReservoirSpec,
    StateKind,
    StateVector,
    build_graph,
    chain_graph,
    model_from_json,
    model_to_json,
    validate_model,
)


# --- graphs -----------------------------------------------------------------------


def test_build_graph_canonicalises_edges():
    g = build_graph([1, 2, 3], edges=[(3, 2, 0.5), (1, 2, 1.0)])
    assert g.edges == ((1, 2, 1.0), (2, 3, 0.5))
    assert g.n == 3 and g.index == {1: 0, 2: 1, 3: 2}


def test_build_graph_drops_zero_weight_but_requires_connectivity():
    with pytest.raises(NotIrreducibleError):
        build_graph([1, 2], edges=[(1, 2, 0.0)])


def test_build_graph_rejects_duplicates_and_negatives():
    with pytest.raises(DuplicateVertexError):
        build_graph([1, 1])
    with pytest.raises(NegativeWeightError):
        build_graph([1, 2], edges=[(1, 2, -1.0)])
    with pytest.raises(GraphError):
        build_graph([1, 2], edges=[(1, 3, 1.0)])


def test_chain_graph_shapes():
    g = chain_graph(4, edge_weight=2.0, coupling=0.5)
    assert g.edges == ((1, 2, 2.0), (2, 3, 2.0), (3, 4, 2.0))
    assert g.couplings == ((1, 0.5), (4, 0.5))
    single = chain_graph(1)
    assert single.couplings == ((1, 1.0),) and single.edges == ()


def test_graph_requires_at_least_one_vertex():
    with pytest.raises(GraphError):
        build_graph([])


# --- model specs -------------------------------------------------------------------


def test_reservoir_spec_exclusive_parameterisation():
    assert ReservoirSpec(theta_star=1.0).has_target
    assert not ReservoirSpec(alpha=1.0, gamma=2.0).has_target
    with pytest.raises(ReservoirMismatchError):
        ReservoirSpec()
    with pytest.raises(ReservoirMismatchError):
        ReservoirSpec(theta_star=1.0, alpha=1.0, gamma=2.0)
    with pytest.raises(ReservoirMismatchError):
        ReservoirSpec(alpha=1.0)
    with pytest.raises(OutOfRangeError):
        ReservoirSpec(theta_star=-0.5)


def test_validate_model_checks_coupling_reservoir_agreement():
    g = chain_graph(3)  # couplings at vertices 1 and 3
    spec = ModelSpec(family=Family.KMP_CONTINUOUS,
                     reservoirs={1: ReservoirSpec(theta_star=1.0)})
    with pytest.raises(ReservoirMismatchError):
        validate_model(g, spec)  # vertex 3 coupled but has no reservoir
    ok = ModelSpec(family=Family.KMP_CONTINUOUS,
                   reservoirs={1: ReservoirSpec(theta_star=1.0),
                               3: ReservoirSpec(theta_star=2.0)})
    validate_model(g, ok)


def test_validate_model_rejects_wrong_reservoir_parameterisation():
    g = chain_graph(1)
    rate_res = ModelSpec(family=Family.KMP_CONTINUOUS,
                         reservoirs={1: ReservoirSpec(alpha=1.0, gamma=2.0)})
    with pytest.raises(ReservoirMismatchError):
        validate_model(g, rate_res)
    target_res = ModelSpec(family=Family.SIP,
                           reservoirs={1: ReservoirSpec(theta_star=1.0)})
    with pytest.raises(ReservoirMismatchError):
        validate_model(g, target_res)


def test_validate_model_warns_on_supercritical_birth_rates():
    g = chain_graph(1)
    spec = ModelSpec(family=Family.SIP,
                     reservoirs={1: ReservoirSpec(alpha=3.0, gamma=2.0)})
    checked = validate_model(g, spec)
    assert any("alpha" in w for w in checked.warnings)


def test_single_site_chain_carries_both_reservoirs():
    g = chain_graph(1)
    spec = ModelSpec(family=Family.HIDDEN_HARMONIC,
                     reservoirs={1: (ReservoirSpec(theta_star=0.0),
                                     ReservoirSpec(theta_star=1.0))})
    checked = validate_model(g, spec)
    assert len(checked.reservoir_map[1]) == 2


def test_two_s_must_be_positive():
    from mixflow.errors import BadShapeError

    with pytest.raises(BadShapeError):
        validate_model(chain_graph(2, coupling=0.0),
                       ModelSpec(family=Family.KMP_DISCRETE, two_s=0.0))


# --- state containers ---------------------------------------------------------------


def test_state_vector_counts_must_be_integers():
    with pytest.raises(KindMismatchError):
        StateVector(StateKind.COUNTS, {1: 1.5})
    sv = StateVector(StateKind.COUNTS, {1: 2, 2: 0})
    g = chain_graph(2, coupling=0.0)
    np.testing.assert_array_equal(sv.to_array(g), [2.0, 0.0])


def test_state_vector_rejects_negative_or_nonfinite():
    with pytest.raises(OutOfRangeError):
        StateVector(StateKind.MASSES, {1: -0.1})
    with pytest.raises(OutOfRangeError):
        StateVector(StateKind.THETAS, {1: float("inf")})


def test_dual_index_order_and_array():
    xi = DualIndex(((1, 2), (3, 1)))
    assert xi.order == 3
    g = chain_graph(3, coupling=0.0)
    np.testing.assert_array_equal(xi.to_array(g), [2, 0, 1])
    with pytest.raises(OutOfRangeError):
        DualIndex(((1, -1),))
    with pytest.raises(OutOfRangeError):
        DualIndex(((1, 1.5),))


# --- JSON interchange -----------------------------------------------------------------


def _round_trip_model():
    g = chain_graph(2)
    spec = ModelSpec(family=Family.HARMONIC_CONTINUOUS, two_s=2.0,
                     reservoirs={1: ReservoirSpec(theta_star=0.5),
                                 2: ReservoirSpec(theta_star=1.5)},
                     harmonic_reservoir_kind=ReservoirKind.SAMPLED)
    return g, validate_model(g, spec)


def test_model_json_round_trip():
    g, spec = _round_trip_model()
    g2, spec2 = model_from_json(model_to_json(g, spec))
    assert g2.vertices == g.vertices
    assert g2.edges == g.edges
    assert g2.couplings == g.couplings
    assert spec2.family is spec.family
    assert spec2.two_s == spec.two_s
    assert spec2.harmonic_reservoir_kind is ReservoirKind.SAMPLED
    assert spec2.reservoir_map[1][0].theta_star == 0.5


def test_model_json_rejects_unknown_fields_and_families():
    with pytest.raises(ModelJsonError):
        model_from_json({"vertices": [1], "family": "KMP_DISCRETE", "bogus": 1})
    with pytest.raises(ModelJsonError):
        model_from_json({"vertices": [1], "family": "NOT_A_FAMILY"})
    with pytest.raises(ModelJsonError):
        model_from_json({"family": "KMP_DISCRETE"})
    with pytest.raises(ModelJsonError):
        model_from_json([1, 2, 3])
