import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fppath.errors import ValidationError
from fppath.ergodic import (analyze_ergodic, backward_committor, invariant_measure, period,
                            z_expressions)
from fppath.generators import (birth_death, cycle_walk, path_graph, random_ergodic_instance,
                               random_reversible_instance)
from fppath.graph import DirectedGraph, ProblemSets
from fppath.model import DiscreteModel
from fppath.waiting import ContinuousProcess, Exponential


def two_state():
    g = DirectedGraph(2, [(0, 1), (1, 0)])
    proc = ContinuousProcess(g, {(0, 1): Exponential(2.0), (1, 0): Exponential(3.0)})
    return g, proc.embed(), ProblemSets.create(2, [0], [1])


def test_two_state_rate():
    g, model, sets = two_state()
    erg, _ = analyze_ergodic(model, sets, g, require_aperiodic=False)
    np.testing.assert_allclose(erg.m, [0.5, 0.5])
    assert erg.Z == pytest.approx(0.5)
    assert erg.k_ab == pytest.approx(1.2)
    np.testing.assert_allclose(erg.pi, [0.6, 0.4])


def test_two_state_is_periodic():
    _, model, sets = two_state()
    assert period(model) == 2
    with pytest.raises(ValidationError, match="periodic"):
        analyze_ergodic(model, sets)


def test_sinks_and_reducible_chains_rejected():
    inst = path_graph(4)
    with pytest.raises(ValidationError, match="sink"):
        invariant_measure(inst.model)
    g = DirectedGraph(4, [(0, 1), (1, 0), (2, 3), (3, 2), (1, 2)])
    with pytest.raises(ValidationError, match="reducible"):
        invariant_measure(DiscreteModel.from_graph(g))


def test_cycle_walk_uniform():
    inst = cycle_walk(7)
    erg, stats = analyze_ergodic(inst.model, inst.sets, inst.graph)
    np.testing.assert_allclose(erg.m, np.full(7, 1 / 7), atol=1e-14)
    assert erg.z_residual < 1e-12
    assert erg.k_ab is None
    # a symmetric walk is reversible
    np.testing.assert_allclose(erg.q_minus, 1 - erg.q, atol=1e-12)
    assert erg.pipeline_deviation < 1e-10
    assert stats.mu[0] == pytest.approx(1.0)


def test_birth_death_detailed_balance():
    inst = birth_death(8, up=0.6)
    erg, _ = analyze_ergodic(inst.model, inst.sets, inst.graph)
    p = inst.model.dense
    flow = erg.m[:, None] * p
    np.testing.assert_allclose(flow, flow.T, atol=1e-14)
    np.testing.assert_allclose(erg.q_minus, 1 - erg.q, atol=1e-10)


def test_equilibrium_entry_law_sums_to_one():
    inst = random_ergodic_instance(np.random.default_rng(5), 15)
    erg, stats = analyze_ergodic(inst.model, inst.sets, inst.graph)
    assert erg.mu_eq.sum() == pytest.approx(1.0, abs=1e-10)
    assert abs(erg.ensemble.theta_tilde[inst.sets.in_b].sum() - 1) < 1e-10


@given(st.integers(0, 2**32 - 1), st.integers(4, 40),
       st.sampled_from([None, "exponential", "weibull", "powerlaw", "mixed"]))
@settings(max_examples=20)
def test_random_ergodic_instances(seed, n, family):
    inst = random_ergodic_instance(np.random.default_rng(seed), n, family)
    erg, stats = analyze_ergodic(inst.model, inst.sets, inst.graph)
    assert erg.z_residual <= 1e-10
    assert erg.pipeline_deviation <= 1e-8
    if family is not None:
        assert erg.k_ab > 0 and erg.pi.sum() == pytest.approx(1.0)


@given(st.integers(0, 2**32 - 1), st.integers(4, 40))
@settings(max_examples=20)
def test_reversible_backward_committor(seed, n):
    inst = random_reversible_instance(np.random.default_rng(seed), n)
    m = invariant_measure(inst.model)
    erg, _ = analyze_ergodic(inst.model, inst.sets, inst.graph)
    np.testing.assert_allclose(backward_committor(inst.model, m, inst.sets), 1 - erg.q,
                               atol=1e-10)
    z = z_expressions(inst.model, m, erg.q, erg.q_minus, inst.sets)
    assert z.max() - z.min() < 1e-10
