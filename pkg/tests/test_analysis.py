from fractions import Fraction as F

import numpy as np
import pytest

from oracle import reference
from fppath.analysis import (analyze, check_identities, mu_r_via_omega, rank_report,
                             solve_committor)
from fppath.errors import ValidationError
from fppath.generators import path_graph, single_edge, two_exits_one_gate
from fppath.graph import DirectedGraph, ProblemSets
from fppath.model import DiscreteModel

# a six-node chain with rational jump probabilities
RATIONAL6 = {0: {1: F(1, 2), 2: F(1, 2)}, 1: {0: F(1, 3), 3: F(2, 3)},
             2: {0: F(1, 4), 3: F(1, 4), 4: F(1, 2)}, 3: {2: F(1, 2), 5: F(1, 2)},
             4: {5: F(1)}, 5: {5: F(1)}}
RATIONAL6_A, RATIONAL6_B = [0, 1], [5]
RATIONAL6_MU = {0: F(1, 3), 1: F(2, 3)}

# frozen values produced by tests/oracle.py (exact rational arithmetic)
FROZEN = {
    "q": [0, 0, F(5, 7), F(6, 7), 1, 1],
    "theta": [F(26, 27), F(31, 27), F(80, 81), F(82, 81), F(40, 81), 1],
    "f": [F(133, 27), F(40, 9), F(92, 27), F(73, 27), 1, 0],
    "theta_bar_prime": [F(13, 21), F(31, 63), F(160, 567), F(82, 567), 0, 0],
    "theta_tilde": [F(65, 189), F(124, 189), F(400, 567), F(164, 189), F(40, 81), 1],
    "mu_r": [F(65, 189), F(124, 189), 0, 0, 0, 0],
    "J": {(0, 1): F(13, 27), (0, 2): F(13, 27), (1, 0): F(31, 81), (1, 3): F(62, 81),
          (2, 0): F(20, 81), (2, 3): F(20, 81), (2, 4): F(40, 81), (3, 2): F(41, 81),
          (3, 5): F(41, 81), (4, 5): F(40, 81)},
    "J_bar": {(0, 1): F(13, 27), (0, 2): F(26, 189), (1, 0): F(31, 81), (1, 3): F(62, 567),
              (2, 0): F(20, 81), (2, 3): F(20, 567), (3, 2): F(82, 567)},
    "J_tilde": {(0, 2): F(65, 189), (1, 3): F(124, 189), (2, 3): F(40, 189),
                (2, 4): F(40, 81), (3, 2): F(205, 567), (3, 5): F(41, 81), (4, 5): F(40, 81)},
    "L_bar": F(872, 567),
    "L_tilde": F(1739, 567),
}


def rational6():
    n = len(RATIONAL6)
    p = np.array([[float(RATIONAL6[x].get(y, 0)) for y in range(n)] for x in range(n)])
    mu = np.zeros(n)
    for k, v in RATIONAL6_MU.items():
        mu[k] = float(v)
    return DiscreteModel(p), ProblemSets.create(n, RATIONAL6_A, RATIONAL6_B, mu)


def as_dense(mapping, n):
    out = np.zeros((n, n))
    for (x, y), v in mapping.items():
        out[x, y] = float(v)
    return out


def test_oracle_reproduces_frozen_values():
    ref = reference(RATIONAL6, RATIONAL6_A, RATIONAL6_B, RATIONAL6_MU)
    for key in ("q", "theta", "f", "theta_bar_prime", "theta_tilde", "mu_r", "L_bar", "L_tilde"):
        assert ref[key] == FROZEN[key], key
    for key in ("J", "J_bar", "J_tilde"):
        assert {k: v for k, v in ref[key].items() if v != 0} == FROZEN[key], key


def test_rational6_matches_frozen():
    model, sets = rational6()
    s = analyze(model, sets)
    for key in ("q", "theta", "f", "theta_bar_prime", "theta_tilde", "mu_r"):
        np.testing.assert_allclose(getattr(s, key), [float(v) for v in FROZEN[key]],
                                   atol=1e-12, err_msg=key)
    for key in ("J", "J_bar", "J_tilde"):
        np.testing.assert_allclose(getattr(s, key).toarray(), as_dense(FROZEN[key], 6),
                                   atol=1e-12, err_msg=key)
    assert s.lengths.L_bar == pytest.approx(float(FROZEN["L_bar"]), abs=1e-12)
    assert s.lengths.L_tilde == pytest.approx(float(FROZEN["L_tilde"]), abs=1e-12)
    np.testing.assert_allclose(s.mu_r_omega, s.mu_r, atol=1e-12)


def test_rational6_identities():
    model, sets = rational6()
    s = analyze(model, sets)
    res = check_identities(model, sets, s)
    assert max(res.values()) < 1e-12, res


def test_path_graph_hand_values():
    inst = path_graph(5)
    s = analyze(inst.model, inst.sets, inst.graph)
    np.testing.assert_allclose(s.q, [0, .25, .5, .75, 1], atol=1e-14)
    np.testing.assert_allclose(s.theta, [4, 6, 4, 2, 1], atol=1e-12)
    np.testing.assert_allclose(s.f, [16, 15, 12, 7, 0], atol=1e-12)
    np.testing.assert_allclose(s.theta_bar_prime, [3, 4.5, 2, .5, 0], atol=1e-12)
    np.testing.assert_allclose(s.theta_tilde, [1, 1.5, 2, 1.5, 1], atol=1e-12)
    assert s.lengths.L_bar == pytest.approx(10) and s.lengths.L_tilde == pytest.approx(6)
    jt = {(0, 1): 1, (1, 2): 1.5, (2, 1): .5, (2, 3): 1.5, (3, 2): .5, (3, 4): 1}
    np.testing.assert_allclose(s.J_tilde.toarray(), as_dense(jt, 5), atol=1e-12)


def test_path_graph_reactive_chain():
    inst = path_graph(5)
    s = analyze(inst.model, inst.sets, inst.graph)
    # the reactive chain never steps back into A
    assert s.p_tilde[1, 2] == pytest.approx(1.0)
    assert s.p_tilde[1, 0] == 0.0
    assert s.p_tilde[2, 3] == pytest.approx(0.75)
    # leaving A for good from node 0 happens with probability r(0) = q(1)
    assert s.p_bar[0, 5] == pytest.approx(0.25)


def test_single_edge():
    inst = single_edge()
    s = analyze(inst.model, inst.sets, inst.graph)
    np.testing.assert_array_equal(s.q, [0, 1])
    np.testing.assert_array_equal(s.theta, [1, 1])
    assert s.lengths.L_bar == 0 and s.lengths.L_tilde == 1
    np.testing.assert_array_equal(s.mu_r, [1, 0])


def test_two_exits_one_gate_mu_r_both_routes():
    inst = two_exits_one_gate()
    for mu in ([0.5, 0.5], [1.0, 0.0], [0.1, 0.9]):
        sets = inst.sets.with_mu(np.array(mu + [0, 0, 0]))
        s = analyze(inst.model, sets, inst.graph)
        np.testing.assert_allclose(s.mu_r, [0, 1, 0, 0, 0], atol=1e-10)
        np.testing.assert_allclose(mu_r_via_omega(inst.model, sets, s.q), [0, 1, 0, 0, 0],
                                   atol=1e-10)


def test_analyze_refuses_invalid_instance():
    g = DirectedGraph(3, [(0, 1), (0, 2)])
    with pytest.raises(ValidationError) as info:
        analyze(DiscreteModel.from_graph(g), ProblemSets.create(3, [0], [2]), g)
    assert info.value.report.sinks_outside_b == (1,)


def test_time_stats_exponential_chain():
    from fppath.generators import exponential_chain
    inst = exponential_chain([2.0, 4.0])
    s = analyze(inst.model, inst.sets, inst.graph)
    kappa = np.nan_to_num(inst.model.kappa)
    np.testing.assert_allclose(s.T, kappa * s.theta)
    np.testing.assert_allclose(s.T, [0.5, 0.25, 0.0])
    np.testing.assert_allclose(s.T_bar, kappa * s.theta_bar_prime, atol=1e-14)
    np.testing.assert_allclose(s.T, s.T_bar + s.T_tilde, atol=1e-12)


def test_committor_interior_free_instance():
    inst = single_edge()
    np.testing.assert_array_equal(solve_committor(inst.model, inst.sets), [0, 1])


# --- ranking -----------------------------------------------------------------------

def test_rank_path_graph_tie_goes_to_smaller_edge():
    inst = path_graph(5)
    s = analyze(inst.model, inst.sets, inst.graph)
    rep = rank_report(s)
    top = rep["edges"]["J_tilde"]
    assert top[0][0] == (1, 2) and top[1][0] == (2, 3)
    assert top[0][1] == pytest.approx(top[1][1])
    assert [i for i, _ in rep["nodes"]["theta"]] == [1, 0, 2, 3, 4]


def test_rank_top_k_and_ordering():
    model, sets = rational6()
    s = analyze(model, sets)
    rep = rank_report(s, top_k=100)
    assert len(rep["nodes"]["q"]) == 6
    assert len(rep["edges"]["J_tilde"]) == 7
    values = [v for _, v in rep["edges"]["J"]]
    assert values == sorted(values, reverse=True)
    short = rank_report(s, top_k=2)
    assert short["nodes"]["theta"] == rep["nodes"]["theta"][:2]
    # q ties at 1 on nodes 4 and 5 resolve by index
    assert [i for i, _ in rep["nodes"]["q"]][:2] == [4, 5]


def test_rank_ties_survive_round_off():
    model, sets = rational6()
    s = analyze(model, sets)
    # J(3,2) and J(3,5) are both 41/81; so are J(2,0)/J(2,3)
    order = [e for e, _ in rank_report(s)["edges"]["J"]]
    assert order.index((2, 0)) + 1 == order.index((2, 3))
    assert order.index((3, 2)) + 1 == order.index((3, 5))
