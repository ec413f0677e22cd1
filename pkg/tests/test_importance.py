"""The four importance measures against closed forms and independent recomputation."""
import numpy as np
import pytest

from gridsense.importance import (ImportanceWeights, betweenness_centrality,
                                  electrical_betweenness, electrical_coupling,
                                  eigenvector_centrality, hybrid_importance,
                                  importance_components)

from oracles import pair_solve_electrical_betweenness, path_count_betweenness


def ring(n):
    a = np.zeros((n, n), dtype=bool)
    for i in range(n):
        a[i, (i + 1) % n] = a[(i + 1) % n, i] = True
    return a


def path(n):
    a = np.zeros((n, n), dtype=bool)
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = True
    return a


def test_betweenness_closed_forms():
    # middle of a 3-path carries the single s-t pair; endpoints carry none
    np.testing.assert_allclose(betweenness_centrality(path(3)), [0.0, 1.0, 0.0])
    # complete graph: no pair ever routes through a third vertex
    k4 = ~np.eye(4, dtype=bool)
    np.testing.assert_allclose(betweenness_centrality(k4), np.zeros(4))
    # 5-path: vertex i separates i*(4-i) pairs
    np.testing.assert_allclose(betweenness_centrality(path(5)), [0.0, 3.0, 4.0, 3.0, 0.0])


def test_betweenness_matches_path_counting(case14):
    a = case14.adjacency
    np.testing.assert_allclose(betweenness_centrality(a), path_count_betweenness(a),
                               atol=1e-9)
    b = ring(7)
    np.testing.assert_allclose(betweenness_centrality(b), path_count_betweenness(b),
                               atol=1e-9)


def test_eigenvector_centrality_properties():
    # regular graphs score uniformly
    x = eigenvector_centrality(ring(6))
    np.testing.assert_allclose(x, x[0], atol=1e-8)
    assert np.linalg.norm(x) == pytest.approx(1.0, abs=1e-12)
    # star: the hub dominates all leaves
    star = np.zeros((5, 5), dtype=bool)
    star[0, 1:] = star[1:, 0] = True
    y = eigenvector_centrality(star)
    assert np.all(y[0] > y[1:])
    np.testing.assert_allclose(y[1:], y[1], atol=1e-8)


def test_eigenvector_satisfies_the_eigen_equation(case14):
    a = case14.adjacency.astype(float)
    x = eigenvector_centrality(case14.adjacency)
    lam = x @ a @ x  # Rayleigh quotient of the unit vector
    assert np.linalg.norm(a @ x - lam * x) < 1e-8


def test_electrical_betweenness_small_fixtures(make_net):
    # one generator feeding one load: both terminals score 1, nothing between
    two = make_net("sl", [(0, 1)], loads=[(0.0, 0.0), (0.5, 0.1)])
    np.testing.assert_allclose(electrical_betweenness(two), [1.0, 1.0], atol=1e-8)
    # with a bus in the middle, the full unit current passes through it
    three = make_net("sll", [(0, 1), (1, 2)], loads=[(0, 0), (0, 0), (0.5, 0.1)])
    np.testing.assert_allclose(electrical_betweenness(three), [1.0, 1.0, 1.0], atol=1e-6)


def test_electrical_betweenness_matches_pair_solves(case14):
    np.testing.assert_allclose(electrical_betweenness(case14),
                               pair_solve_electrical_betweenness(case14), atol=1e-8)


def test_electrical_betweenness_without_load_warns(make_net):
    net = make_net("sg", [(0, 1)])
    with pytest.warns(UserWarning, match="zero"):
        np.testing.assert_array_equal(electrical_betweenness(net), np.zeros(2))


def test_electrical_coupling(case14, make_net):
    scores = electrical_coupling(case14)
    assert np.all(scores > 0)
    # distance matrix symmetry makes the score invariant to bus relabelling;
    # spot-check the definition at one bus
    z = case14.zbus
    d = np.abs(np.diag(z)[:, None] + np.diag(z)[None, :] - 2 * z)
    assert scores[3] == pytest.approx(1.0 / d[3].sum(), rel=1e-12)

    # adding a parallel line tightens the coupling of its endpoints
    base = make_net("sll", [(0, 1), (1, 2)],
                    loads=[(0, 0), (0.1, 0.0), (0.5, 0.1)], shunts=[(0.0, 0.1)] * 3)
    doubled = make_net("sll", [(0, 1), (0, 1), (1, 2)],
                       loads=[(0, 0), (0.1, 0.0), (0.5, 0.1)], shunts=[(0.0, 0.1)] * 3)
    assert electrical_coupling(doubled)[0] > electrical_coupling(base)[0]


def test_impedance_scale_invariance_of_betweenness(case14, make_net):
    # electrical betweenness depends on current *splits*, not absolute impedance
    net = make_net("sll", [(0, 1, 0.01, 0.1, 0.0, 1.0), (1, 2, 0.02, 0.2, 0.0, 1.0),
                           (0, 2, 0.03, 0.3, 0.0, 1.0)],
                   loads=[(0, 0), (0.2, 0.05), (0.5, 0.1)], shunts=[(0.0, 0.05)] * 3)
    scaled = make_net("sll", [(0, 1, 0.02, 0.2, 0.0, 1.0), (1, 2, 0.04, 0.4, 0.0, 1.0),
                              (0, 2, 0.06, 0.6, 0.0, 1.0)],
                      loads=[(0, 0), (0.2, 0.05), (0.5, 0.1)], shunts=[(0.0, 0.025)] * 3)
    np.testing.assert_allclose(electrical_betweenness(net), electrical_betweenness(scaled),
                               atol=1e-6)


def test_components_and_hybrid(case14, case14_scores):
    comps = importance_components(case14)
    assert set(comps) == {"betweenness", "eigenvector",
                          "electrical_betweenness", "electrical_coupling"}
    # hybrid with a single active weight reduces to that normalized component
    only_bc = hybrid_importance(case14, ImportanceWeights(1.0, 0.0, 0.0, 0.0),
                                components=comps)
    np.testing.assert_allclose(only_bc, comps["betweenness"] / comps["betweenness"].max(),
                               atol=1e-12)
    # default weights: scores live in [0, 1] and the top score is meaningful
    assert case14_scores.min() >= 0.0 and case14_scores.max() <= 1.0 + 1e-12
    np.testing.assert_allclose(case14_scores,
                               hybrid_importance(case14, components=comps), atol=1e-12)


def test_case14_singles_out_the_main_interchange(case14_scores):
    # the bus tying the generation area to the load pocket ranks first
    assert int(np.argmax(case14_scores)) == 3


def test_permutation_equivariance(case14):
    rng = np.random.default_rng(0)
    perm = rng.permutation(case14.n)
    a = case14.adjacency
    b = a[np.ix_(perm, perm)]
    np.testing.assert_allclose(betweenness_centrality(b),
                               betweenness_centrality(a)[perm], atol=1e-9)
    np.testing.assert_allclose(eigenvector_centrality(b),
                               eigenvector_centrality(a)[perm], atol=1e-8)


def test_negative_weight_rejected():
    with pytest.raises(ValueError, match="non-negative"):
        ImportanceWeights(betweenness=-0.1)
