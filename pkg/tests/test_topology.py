import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cosched.topology import (
    GraphGenerationError,
    NetworkSchedule,
    WeightedGraph,
    algebraic_connectivity,
    build_erdos_renyi,
    build_exponential,
    erdos_renyi_schedule,
    graph_at,
    laplacian,
)


def test_two_nodes_full_probability_gives_single_edge():
    g = build_erdos_renyi(2, 1.0, seed=11)
    assert g.num_edges == 1
    assert 0 < g.weights[0, 1] <= 1


def test_paper_scale_graph_connected_and_symmetric():
    g = build_erdos_renyi(20, 0.4, seed=7)
    assert g.is_connected()
    assert np.array_equal(g.weights, g.weights.T)


def test_complete_graph_edge_count():
    assert build_erdos_renyi(5, 1.0, seed=3).num_edges == 10


def test_generation_failure_names_parameters():
    with pytest.raises(GraphGenerationError, match=r"n=30.*p=0.01.*seed=4"):
        build_erdos_renyi(30, 0.01, seed=4, max_retries=3)


@pytest.mark.parametrize("n, p", [(1, 0.5), (4, 0.0), (4, 1.5)])
def test_erdos_renyi_rejects_bad_arguments(n, p):
    with pytest.raises(ValueError):
        build_erdos_renyi(n, p, seed=0)


@given(n=st.integers(2, 25), p=st.floats(0.3, 1.0), seed=st.integers(0, 10_000))
def test_generated_graphs_are_valid(n, p, seed):
    g = build_erdos_renyi(n, p, seed=seed)
    w = g.weights
    assert np.array_equal(w, w.T)
    assert np.all(np.diag(w) == 0)
    assert w.min() >= 0 and w.max() <= 1
    assert g.is_connected()


def test_same_seed_same_graph():
    assert build_erdos_renyi(12, 0.4, seed=5) == build_erdos_renyi(12, 0.4, seed=5)


@pytest.mark.parametrize(
    "n, expected_degree", [(2, 1), (4, 3), (8, 5), (16, 7)]
)
def test_exponential_graph_degree(n, expected_degree):
    # offsets +-2^j collapse when 2^j = n/2, so degree is 2k - 1
    g = build_exponential(n)
    assert all(g.degree(i) == expected_degree for i in range(n))
    assert g.is_connected()
    assert np.allclose(g.weights[g.weights > 0], 1.0 / (expected_degree + 1))


def test_exponential_neighbours_of_node_zero():
    assert build_exponential(4).neighbors(0) == [1, 2, 3]


@pytest.mark.parametrize("n", [3, 6, 12, 1])
def test_exponential_rejects_non_power_of_two(n):
    with pytest.raises(ValueError):
        build_exponential(n)


def test_laplacian_examples():
    assert np.array_equal(laplacian(WeightedGraph([[0, 1], [1, 0]])), [[-1, 1], [1, -1]])
    assert np.array_equal(laplacian(WeightedGraph(np.zeros((3, 3)))), np.zeros((3, 3)))


@given(seed=st.integers(0, 5000), n=st.integers(2, 15))
def test_laplacian_rows_sum_to_zero_and_spectrum_nonpositive(seed, n):
    g = build_erdos_renyi(n, 0.6, seed=seed)
    L = laplacian(g)
    assert np.abs(L.sum(axis=0)).max() < 1e-12
    assert np.abs(L.sum(axis=1)).max() < 1e-12
    ev = np.linalg.eigvalsh(L)
    assert ev.max() < 1e-10
    assert np.sum(np.abs(ev) < 1e-9) == 1
    assert np.all(ev[np.abs(ev) >= 1e-9] < -1e-9)


@pytest.mark.parametrize(
    "weights, expected",
    [
        ([[0, 1], [1, 0]], 2.0),
        ([[0, 1, 1], [1, 0, 1], [1, 1, 0]], 3.0),
        ([[0, 0], [0, 0]], 0.0),
    ],
)
def test_algebraic_connectivity(weights, expected):
    assert algebraic_connectivity(laplacian(WeightedGraph(weights))) == pytest.approx(expected, abs=1e-12)


def test_graph_at_cyclic_indexing():
    g = [build_erdos_renyi(4, 1.0, seed=k) for k in range(3)]
    one = NetworkSchedule((g[0],), switch_period=7)
    assert all(graph_at(one, k) is g[0] for k in (0, 6, 7, 1000))
    two = NetworkSchedule((g[0], g[1]), switch_period=10)
    assert graph_at(two, 10) is g[1]
    three = NetworkSchedule(tuple(g), switch_period=5)
    assert graph_at(three, 14) is g[2]


def test_random_switching_is_seeded():
    a = erdos_renyi_schedule(6, 0.6, 4, seed=2, switch_period=3, mode="random")
    b = erdos_renyi_schedule(6, 0.6, 4, seed=2, switch_period=3, mode="random")
    seq = [a.index_at(k) for k in range(300)]
    assert seq == [b.index_at(k) for k in range(300)]
    assert len(set(seq)) > 1
    # constant within each switching period
    assert all(seq[k] == seq[k - k % 3] for k in range(300))


def test_schedule_rejects_disconnected_graph():
    with pytest.raises(ValueError, match="not connected"):
        NetworkSchedule((WeightedGraph(np.zeros((3, 3))),))


@pytest.mark.parametrize(
    "weights",
    [
        [[0, 1], [0.5, 0]],
        [[1, 0], [0, 0]],
        [[0, -1], [-1, 0]],
        [[0, 1, 0], [1, 0, 1]],
    ],
)
def test_weighted_graph_validation(weights):
    with pytest.raises(ValueError):
        WeightedGraph(weights)


def test_edge_list_round_trip(tmp_path):
    g = build_erdos_renyi(9, 0.5, seed=1)
    path = tmp_path / "g.txt"
    g.save(path)
    text = path.read_text()
    assert text.splitlines()[0] == "n 9"
    assert len(text.splitlines()) == 1 + g.num_edges
    assert WeightedGraph.load(path) == g


def test_edge_list_rejects_bad_header():
    with pytest.raises(ValueError, match="header"):
        WeightedGraph.from_edge_list("0 1 0.5\n")
