import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbital_heat.graphs import (
    ROOT_LABEL, WeightedGraph, ball_volumes, build_mixed, build_ray, build_star, build_tree,
    graph_from_dict, graph_from_edges, graph_radius, graph_to_dict, load_graph, save_graph,
)


def test_star_shape():
    G = build_star(3, 5)
    assert G.n == 16 and len(G.edges) == 15
    assert G.labels[G.root()] == ROOT_LABEL
    assert np.all(G.conductance == 1)
    assert G.measure()[G.root()] == 3
    assert sorted(np.bincount(G.depth().astype(int))) == [1, 3, 3, 3, 3, 3]
    assert G.is_connected()


def test_ray_weights_and_conductances():
    G = build_ray(4, "quadratic")
    assert list(G.weights) == [1, 4, 9, 16, 25]
    assert list(G.conductance) == [2.5, 6.5, 12.5, 20.5]
    assert build_ray(3, "exp").weights[3] == pytest.approx(np.exp(6))
    with pytest.raises(ValueError):
        build_ray(3, "cubic")
    with pytest.raises(ValueError):
        build_ray(301, "exp")


def test_lumped_tree_matches_explicit_shell_sums():
    L = 6
    lumped, explicit = build_tree(L), build_tree(L, lumped=False)
    assert explicit.n == 2 ** (L + 1) - 1
    assert np.allclose(ball_volumes(lumped, 0, L), ball_volumes(explicit, 0, L))
    assert lumped.lumped and not explicit.lumped
    with pytest.raises(ValueError):
        lumped.require_explicit("delta f")


def test_mixed_model():
    G = build_mixed(1, 1, 10, "weighted_ray")
    assert G.n == 21
    assert set(G.weights[1:11]) == {float((1 + n) ** 2) for n in range(1, 11)}
    T = build_mixed(2, 1, 700)
    # tree component capped at its overflow depth
    assert T.n == 1 + 2 * 700 + 600 and T.lumped
    with pytest.raises(ValueError):
        build_mixed(0, 1, 5)
    with pytest.raises(ValueError):
        build_mixed(1, 1, 5, "funnel")


def test_weighted_ray_volume_closed_form():
    G = build_mixed(1, 0, 200)
    r = np.arange(201)
    # 1 + sum_{n=1}^r (1+n)^2
    exact = (r + 1) * (r + 2) * (2 * r + 3) / 6
    assert np.allclose(ball_volumes(G, 0, 200), exact)


def test_validation():
    with pytest.raises(ValueError):
        graph_from_edges([1, -1], [[0, 1]])
    with pytest.raises(ValueError):
        graph_from_edges([1, 1], [[0, 0]])
    with pytest.raises(ValueError):
        graph_from_edges([1, 1], [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        graph_from_edges([1, 1], [[0, 2]])
    with pytest.raises(ValueError):
        WeightedGraph(np.ones(2), [[0, 1]], [0.0])
    with pytest.raises(ValueError):
        graph_from_edges([], [])


def test_disconnected_graph_reports_it():
    G = graph_from_edges([1, 1, 1], [[0, 1]])
    assert not G.is_connected()
    assert np.isinf(G.distances_from(0)[2])
    assert graph_radius(G, 0) == 1


def test_round_trip(tmp_path):
    for G in (build_star(2, 3), build_tree(4), graph_from_edges([1, 2, 3], [[0, 1], [1, 2]])):
        save_graph(G, tmp_path / "g.json")
        H = load_graph(tmp_path / "g.json")
        assert np.array_equal(H.weights, G.weights)
        assert np.array_equal(H.edges, G.edges)
        assert np.array_equal(H.conductance, G.conductance)
        assert H.lumped == G.lumped and H.labels == G.labels


def test_graph_file_errors():
    with pytest.raises(ValueError):
        graph_from_dict({"vertices": []})
    with pytest.raises(ValueError):
        graph_from_dict({"vertices": [{"id": 0, "weight": 1}, {"id": 0, "weight": 1}], "edges": []})
    with pytest.raises(ValueError):
        graph_from_dict({"vertices": [{"id": 0, "weight": 1}], "edges": [[0, 5]]})


def test_induced_subgraph():
    G = build_star(2, 4)
    sub = G.induced(G.ball(G.root(), 2))
    assert sub.n == 5 and len(sub.edges) == 4
    assert sub.labels[0] == ROOT_LABEL


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 30))
def test_star_volumes(d, L):
    G = build_star(d, L)
    vols = ball_volumes(G, G.root(), L + 3)
    r = np.arange(L + 4)
    assert np.array_equal(vols, 1 + d * np.minimum(r, L))
