# type: ignore

"""
Unit tests for tsp.py

Tests the deterministic Dijkstra search, the simplified graph costs, the
open tour heuristic and the stitching of the full path.
"""

import itertools
import math
import pytest
import sys
import os

import networkx as nx
import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from errors import GraphError
from sampling import MustPassNodeSet
from tsp import (
    TspGraph,
    build_tsp_graph,
    dijkstra_shortest_path,
    nearest_fragment_tour,
    open_tour_cost,
    or_opt_open,
    solve_open_tsp,
    stitch_full_path,
    two_opt_open,
)


def chain_graph(xs, costs):
    """Nodes 1..n on the x axis joined in sequence with the given edge costs."""
    graph = nx.Graph(lam=1.0)
    for node, x in enumerate(xs, start=1):
        graph.add_node(node, centroid=np.array([float(x), 0.0, 0.0]))
    for node, cost in enumerate(costs, start=1):
        graph.add_edge(node, node + 1, cost_total=float(cost))
    return graph


def point_tsp_graph(points):
    """TspGraph with Euclidean costs; row 0 is start and row 1 is end."""
    points = np.asarray(points, dtype=float)
    distances = np.linalg.norm(points[:, None] - points[None, :], axis=2)
    return TspGraph(
        nodes=list(range(100, 100 + len(points))),
        centroids_mm=points,
        distances_mm=distances,
        costs=distances.copy(),
    )


def brute_force_open_cost(costs):
    interior = range(2, len(costs))
    return min(
        open_tour_cost(costs, [0, *perm, 1]) for perm in itertools.permutations(interior)
    )


class TestDijkstra:
    """Test suite for dijkstra_shortest_path"""

    def test_same_node(self):
        """Test that src == dst gives an empty path of cost zero"""
        graph = chain_graph([0, 1], [1.0])
        assert dijkstra_shortest_path(graph, 1, 1) == ([], 0.0)

    def test_triangle(self):
        """Test that the cheaper two-edge route beats the direct edge"""
        graph = chain_graph([0, 1, 2], [1.0, 1.0])
        graph.add_edge(1, 3, cost_total=3.0)
        path, cost = dijkstra_shortest_path(graph, 1, 3)
        assert path == [1, 2, 3]
        assert cost == pytest.approx(2.0)

    def test_unreachable(self):
        """Test that a disconnected destination gives (None, inf)"""
        graph = chain_graph([0, 1, 5], [1.0])
        path, cost = dijkstra_shortest_path(graph, 1, 3)
        assert path is None
        assert math.isinf(cost)

    def test_unknown_node(self):
        """Test that ids outside the graph raise GraphError"""
        with pytest.raises(GraphError):
            dijkstra_shortest_path(chain_graph([0, 1], [1.0]), 1, 9)

    def test_ties_prefer_fewer_hops(self):
        """Test that among equal costs the path with fewer edges wins"""
        graph = chain_graph([0, 1, 2], [1.0, 1.0])
        graph.add_edge(1, 3, cost_total=2.0)
        assert dijkstra_shortest_path(graph, 1, 3)[0] == [1, 3]

    def test_ties_prefer_smaller_predecessor(self):
        """Test that equal labels keep the predecessor with the smaller id"""
        graph = nx.Graph()
        graph.add_edge(1, 3, cost_total=1.0)
        graph.add_edge(1, 2, cost_total=1.0)
        graph.add_edge(3, 4, cost_total=1.0)
        graph.add_edge(2, 4, cost_total=1.0)
        assert dijkstra_shortest_path(graph, 1, 4)[0] == [1, 2, 4]

    def test_matches_bellman_ford(self):
        """Test optimal costs and valid paths on random graphs against Bellman-Ford"""
        rng = np.random.default_rng(12)
        for trial in range(100):
            graph = nx.gnp_random_graph(50, 0.08, seed=trial)
            for u, v in graph.edges:
                graph.edges[u, v]["cost_total"] = float(rng.uniform(0.0, 2.0))
            src, dst = (int(v) for v in rng.choice(50, size=2, replace=False))
            path, cost = dijkstra_shortest_path(graph, src, dst)
            if not nx.has_path(graph, src, dst):
                assert path is None
                continue
            expected = nx.bellman_ford_path_length(graph, src, dst, weight="cost_total")
            assert cost == pytest.approx(expected)
            assert path[0] == src and path[-1] == dst
            walked = sum(graph.edges[a, b]["cost_total"] for a, b in zip(path[:-1], path[1:]))
            assert walked == pytest.approx(cost)


class TestBuildTspGraph:
    """Test suite for the simplified graph over start, end and must-pass nodes"""

    def test_hand_computed_costs(self):
        """Test normalized Dijkstra costs for near pairs and d / delta for far pairs"""
        graph = chain_graph([0, 10, 20, 30, 40], [1, 2, 3, 4])
        tg = build_tsp_graph(graph, [3], start=1, end=5, delta_mm=25.0)
        assert tg.nodes == [1, 5, 3]
        assert tg.normalizer == pytest.approx(7.0)
        expected = np.array(
            [
                [0.0, 1.6, 3.0 / 7.0],
                [1.6, 0.0, 1.0],
                [3.0 / 7.0, 1.0, 0.0],
            ]
        )
        np.testing.assert_allclose(tg.costs, expected)

    def test_distant_pair_scaled_by_delta(self):
        """Test that centroids 100 mm apart with delta 50 cost 2"""
        graph = chain_graph([0, 50, 100], [1, 1])
        tg = build_tsp_graph(graph, [], start=1, end=3, delta_mm=50.0)
        assert tg.costs[0, 1] == pytest.approx(2.0)
        assert tg.paths == {}

    def test_largest_near_cost_is_one(self):
        """Test that the most expensive near pair is normalized to 1"""
        graph = chain_graph([0, 10, 20, 30], [5, 1, 1])
        tg = build_tsp_graph(graph, [2, 3], start=1, end=4, delta_mm=100.0)
        near = tg.costs[~np.eye(4, dtype=bool)]
        assert near.max() == pytest.approx(1.0)
        assert tg.normalizer == pytest.approx(7.0)

    def test_unreachable_near_pair(self):
        """Test that a disconnected pair within delta costs d / delta + 1"""
        graph = chain_graph([0, 10, 20], [1.0])
        tg = build_tsp_graph(graph, [], start=1, end=3, delta_mm=50.0)
        assert tg.costs[0, 1] == pytest.approx(20.0 / 50.0 + 1.0)

    def test_symmetric_with_zero_diagonal(self):
        """Test that C' is symmetric with a zero diagonal"""
        graph = chain_graph([0, 7, 15, 30, 44, 60], [1, 3, 2, 5, 1])
        tg = build_tsp_graph(graph, [4, 2, 3], start=1, end=6, delta_mm=30.0)
        np.testing.assert_allclose(tg.costs, tg.costs.T)
        assert np.all(np.diag(tg.costs) == 0)

    def test_must_pass_set_and_duplicates(self):
        """Test that a MustPassNodeSet is accepted and start/end are not repeated"""
        graph = chain_graph([0, 10, 20], [1, 1])
        must_pass = MustPassNodeSet(node_ids=(1, 2, 3))
        tg = build_tsp_graph(graph, must_pass, start=1, end=3, delta_mm=50.0)
        assert tg.nodes == [1, 3, 2]

    def test_cached_path_orientation(self):
        """Test that cached paths are returned in the requested direction"""
        graph = chain_graph([0, 10, 20, 30], [1, 1, 1])
        tg = build_tsp_graph(graph, [], start=1, end=4, delta_mm=50.0)
        assert tg.cached_path(1, 4) == [1, 2, 3, 4]
        assert tg.cached_path(4, 1) == [4, 3, 2, 1]

    def test_invalid_arguments(self):
        """Test rejection of a bad delta, equal endpoints and unknown nodes"""
        graph = chain_graph([0, 10], [1])
        with pytest.raises(ValueError):
            build_tsp_graph(graph, [], 1, 2, 0.0)
        with pytest.raises(ValueError):
            build_tsp_graph(graph, [], 1, 1, 50.0)
        with pytest.raises(GraphError):
            build_tsp_graph(graph, [7], 1, 2, 50.0)


class TestOpenTour:
    """Test suite for the nearest-fragment open tour"""

    def test_only_start_and_end(self):
        """Test that two nodes give the order start, end"""
        tg = point_tsp_graph([[0, 0, 0], [10, 0, 0]])
        assert solve_open_tsp(tg) == [100, 101]

    def test_collinear_points_visited_in_order(self):
        """Test that points on a line are visited monotonically"""
        tg = point_tsp_graph([[0, 0, 0], [100, 0, 0], [60, 0, 0], [20, 0, 0], [40, 0, 0]])
        assert solve_open_tsp(tg) == [100, 103, 104, 102, 101]

    def test_closed_tour_is_permutation(self):
        """Test that nearest_fragment_tour visits every node once from node 0"""
        rng = np.random.default_rng(2)
        points = rng.uniform(0, 100, size=(12, 3))
        matrix = np.linalg.norm(points[:, None] - points[None, :], axis=2)
        tour = nearest_fragment_tour(matrix)
        assert tour[0] == 0
        assert sorted(tour) == list(range(12))

    def test_open_order_is_permutation(self):
        """Test that every V' node appears once between start and end"""
        rng = np.random.default_rng(3)
        for _ in range(20):
            tg = point_tsp_graph(rng.uniform(0, 100, size=(9, 3)))
            order = solve_open_tsp(tg)
            assert order[0] == tg.start and order[-1] == tg.end
            assert sorted(order) == sorted(tg.nodes)

    def test_quality_against_brute_force(self):
        """Test that tours stay within 1.3x of the optimum and usually reach it"""
        rng = np.random.default_rng(7)
        ratios = []
        for _ in range(50):
            tg = point_tsp_graph(rng.uniform(0, 100, size=(8, 3)))
            optimum = brute_force_open_cost(tg.costs)
            position = {node: i for i, node in enumerate(tg.nodes)}
            plain = [position[n] for n in solve_open_tsp(tg, improve=False)]
            improved = [position[n] for n in solve_open_tsp(tg)]
            plain_cost = open_tour_cost(tg.costs, plain)
            improved_cost = open_tour_cost(tg.costs, improved)
            assert improved_cost <= plain_cost + 1e-9
            assert improved_cost >= optimum - 1e-9
            ratios.append(improved_cost / optimum)
        ratios = np.array(ratios)
        assert ratios.max() <= 1.3
        assert np.sum(ratios <= 1.0 + 1e-9) >= 40

    def test_scaling_costs_keeps_order(self):
        """Test that multiplying all costs by a constant does not change the order"""
        rng = np.random.default_rng(5)
        tg = point_tsp_graph(rng.uniform(0, 100, size=(10, 3)))
        order = solve_open_tsp(tg)
        tg.costs = tg.costs * 4.0
        assert solve_open_tsp(tg) == order

    def test_two_opt_keeps_endpoints(self):
        """Test that 2-opt leaves the first and last positions fixed"""
        matrix = np.array(
            [
                [0, 9, 1, 5],
                [9, 0, 5, 1],
                [1, 5, 0, 2],
                [5, 1, 2, 0],
            ],
            dtype=float,
        )
        assert two_opt_open(matrix, [0, 3, 2, 1]) == [0, 2, 3, 1]

    def test_or_opt_sorts_line_with_fixed_ends(self):
        """Test that Or-opt moves misplaced nodes until the path runs along the line"""
        xs = np.array([0.0, 10.0, 2.0, 3.0, 4.0, 1.0])
        matrix = np.abs(xs[:, None] - xs[None, :])
        # row 1 is the end point at x = 10
        order = or_opt_open(matrix, [0, 2, 3, 4, 5, 1])
        assert order[0] == 0 and order[-1] == 1
        assert open_tour_cost(matrix, order) == pytest.approx(10.0)
        assert order == [0, 5, 2, 3, 4, 1]


class TestStitch:
    """Test suite for stitching the full RAG path"""

    def test_chain_stitched_without_repeats(self):
        """Test that junction nodes appear once and the cost adds up"""
        graph = chain_graph([0, 10, 20, 30, 40], [1, 2, 3, 4])
        tg = build_tsp_graph(graph, [3], start=1, end=5, delta_mm=25.0)
        path = stitch_full_path(graph, tg, [1, 3, 5])
        assert path.node_ids == (1, 2, 3, 4, 5)
        assert path.total_cost == pytest.approx(10.0)
        np.testing.assert_allclose(path.points_mm[:, 0], [0, 10, 20, 30, 40])

    def test_uncached_pair_searched(self):
        """Test that pairs beyond delta get a fresh shortest path"""
        graph = chain_graph([0, 10, 20, 30, 40], [1, 2, 3, 4])
        tg = build_tsp_graph(graph, [], start=1, end=5, delta_mm=5.0)
        assert tg.paths == {}
        assert stitch_full_path(graph, tg, [1, 5]).node_ids == (1, 2, 3, 4, 5)

    def test_disconnected_pair_raises(self):
        """Test that a consecutive pair without a RAG path raises GraphError"""
        graph = chain_graph([0, 10, 20], [1.0])
        tg = build_tsp_graph(graph, [], start=1, end=3, delta_mm=50.0)
        with pytest.raises(GraphError, match="no path between nodes 1 and 3"):
            stitch_full_path(graph, tg, solve_open_tsp(tg))
