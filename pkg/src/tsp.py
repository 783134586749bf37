"""
Path search through the must-pass nodes.

Pairs of V' = {start, end} + must-pass nodes are connected on a simplified graph whose costs
are normalized Dijkstra costs for nearby pairs and scaled Euclidean distances for distant
pairs. The open tour from start to end is built with the nearest-fragment heuristic after
adding a dummy node joined at zero cost to start and end.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from errors import GraphError
from utils import progress_enabled

logger = logging.getLogger(__name__)

DUMMY_COST = 1e9


@dataclass(frozen=True)
class TrackedPath:
    """Ordered RAG node ids, their centroid polyline and the summed edge cost."""

    node_ids: tuple
    points_mm: np.ndarray
    total_cost: float

    def __len__(self):
        return len(self.node_ids)


@dataclass
class TspGraph:
    """Dense simplified graph over V'.

    Attributes:
        nodes: RAG ids of V'; index 0 is start, index 1 is end.
        centroids_mm: (k, 3) centroid positions.
        distances_mm: (k, k) Euclidean centroid distances.
        costs: (k, k) simplified-graph costs C'.
        paths: Cached shortest RAG paths keyed by (m, n) with m < n, as RAG id lists from m to n.
        path_costs: Raw Dijkstra costs of the cached paths.
        normalizer: M, the largest Dijkstra cost over reachable pairs within delta.
        delta_mm: Distance threshold delta.
    """

    nodes: list
    centroids_mm: np.ndarray
    distances_mm: np.ndarray
    costs: np.ndarray
    paths: dict = field(default_factory=dict)
    path_costs: dict = field(default_factory=dict)
    normalizer: float = 0.0
    delta_mm: float = 50.0

    @property
    def start(self):
        return self.nodes[0]

    @property
    def end(self):
        return self.nodes[1]

    def cached_path(self, a, b):
        """Cached RAG path between two V' node ids, oriented from a to b, or None."""
        m, n = self.nodes.index(a), self.nodes.index(b)
        path = self.paths.get((min(m, n), max(m, n)))
        if path is None:
            return None
        return list(path) if m < n else list(reversed(path))


def _check_node(graph, node):
    if node not in graph:
        raise GraphError(f"node {node} is not in the graph")


def _dijkstra(graph, source, targets=None, weight="cost_total"):
    """
    Single-source Dijkstra with deterministic tie-breaking.

    Labels compare by (cost, hops); among equal labels the smaller predecessor id wins.
    Stops once every target is settled.

    Returns:
        tuple[dict, dict]: Settled (cost, hops) per node and predecessor per node.
    """
    remaining = set(targets) if targets is not None else None
    labels = {source: (0.0, 0)}
    predecessor = {source: None}
    settled = {}
    heap = [(0.0, 0, source)]
    while heap:
        cost, hops, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled[node] = (cost, hops)
        if remaining is not None:
            remaining.discard(node)
            if not remaining:
                break
        for neighbour, data in graph.adj[node].items():
            if neighbour in settled:
                continue
            label = (cost + data[weight], hops + 1)
            current = labels.get(neighbour)
            if current is None or label < current:
                labels[neighbour] = label
                predecessor[neighbour] = node
                heapq.heappush(heap, (label[0], label[1], neighbour))
            elif label == current and node < predecessor[neighbour]:
                predecessor[neighbour] = node
    return settled, predecessor


def _walk_back(predecessor, source, target):
    path = [target]
    while path[-1] != source:
        path.append(predecessor[path[-1]])
    path.reverse()
    return path


def dijkstra_shortest_path(graph, src, dst, weight="cost_total"):
    """
    Minimum-cost path between two RAG nodes.

    Args:
        graph (networkx.Graph): RAG with non-negative edge costs.
        src: Source node id.
        dst: Destination node id.
        weight (str): Edge attribute used as cost.

    Returns:
        tuple[list | None, float]: (node list from src to dst, cost). src == dst gives
        ([], 0.0); an unreachable dst gives (None, inf).
    """
    _check_node(graph, src)
    _check_node(graph, dst)
    if src == dst:
        return [], 0.0
    settled, predecessor = _dijkstra(graph, src, targets={dst}, weight=weight)
    if dst not in settled:
        return None, math.inf
    return _walk_back(predecessor, src, dst), settled[dst][0]


def build_tsp_graph(graph, must_pass, start, end, delta_mm):
    """
    Build the simplified graph over start, end and the must-pass nodes.

    For pairs whose centroids are at most delta apart, C' is the Dijkstra cost divided by M,
    the largest such cost; unreachable pairs get d / delta + 1 and distant pairs d / delta.
    Must-pass nodes equal to start or end are not repeated.

    Args:
        graph (networkx.Graph): RAG with cost_total on every edge.
        must_pass (MustPassNodeSet | Iterable[int]): Must-pass node ids.
        start, end: Start and end node ids.
        delta_mm (float): Distance threshold delta.

    Returns:
        TspGraph: Dense costs with cached shortest paths.
    """
    if delta_mm <= 0:
        raise ValueError("delta_mm must be > 0")
    if start == end:
        raise ValueError("start and end must be different nodes")
    node_ids = getattr(must_pass, "node_ids", must_pass)
    nodes = [start, end]
    for node in node_ids:
        if node not in nodes:
            nodes.append(int(node))
    for node in nodes:
        _check_node(graph, node)

    k = len(nodes)
    centroids = np.array([graph.nodes[node]["centroid"] for node in nodes], dtype=float)
    distances = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    near = distances <= delta_mm

    paths, path_costs, unreachable = {}, {}, []
    for m in tqdm(range(k), desc="shortest paths", disable=not progress_enabled() or k < 3):
        targets = [n for n in range(m + 1, k) if near[m, n]]
        if not targets:
            continue
        settled, predecessor = _dijkstra(graph, nodes[m], targets={nodes[n] for n in targets})
        for n in targets:
            if nodes[n] in settled:
                paths[(m, n)] = _walk_back(predecessor, nodes[m], nodes[n])
                path_costs[(m, n)] = settled[nodes[n]][0]
            else:
                unreachable.append((m, n))

    normalizer = max(path_costs.values(), default=0.0)
    costs = distances / delta_mm
    for (m, n), cost in path_costs.items():
        costs[m, n] = costs[n, m] = cost / normalizer if normalizer > 0 else 0.0
    for m, n in unreachable:
        costs[m, n] = costs[n, m] = distances[m, n] / delta_mm + 1.0
    np.fill_diagonal(costs, 0.0)

    if unreachable:
        logger.warning("%d nearby node pairs are not connected in the graph", len(unreachable))
    logger.debug("simplified graph: %d nodes, %d cached paths, M=%.4f", k, len(paths), normalizer)
    return TspGraph(
        nodes=nodes,
        centroids_mm=centroids,
        distances_mm=distances,
        costs=costs,
        paths=paths,
        path_costs=path_costs,
        normalizer=normalizer,
        delta_mm=delta_mm,
    )


def open_tour_cost(matrix, order):
    """Sum of matrix entries along consecutive positions of an index order."""
    matrix = np.asarray(matrix, dtype=float)
    return float(sum(matrix[a, b] for a, b in zip(order[:-1], order[1:])))


def nearest_fragment_tour(matrix):
    """
    Closed tour by nearest-fragment merging.

    Every node starts as its own fragment; the cheapest connection between endpoints of two
    different fragments is added until one fragment remains, which is then closed. Ties are
    broken by the lowest (i, j) index pair.

    Args:
        matrix (np.ndarray): Symmetric (n, n) cost matrix.

    Returns:
        list[int]: Tour starting at node 0, without repeating it at the end.
    """
    n = len(matrix)
    if n <= 2:
        return list(range(n))
    rows, cols = np.triu_indices(n, k=1)
    order = np.lexsort((cols, rows, matrix[rows, cols]))

    parent = list(range(n))

    def find(node):
        while parent[node] != node:
            parent[node] = parent[parent[node]]
            node = parent[node]
        return node

    degree = [0] * n
    adjacency = [[] for _ in range(n)]
    merged = 0
    for index in order:
        i, j = int(rows[index]), int(cols[index])
        if degree[i] >= 2 or degree[j] >= 2:
            continue
        root_i, root_j = find(i), find(j)
        if root_i == root_j:
            continue
        parent[root_j] = root_i
        degree[i] += 1
        degree[j] += 1
        adjacency[i].append(j)
        adjacency[j].append(i)
        merged += 1
        if merged == n - 1:
            break

    # Close the single remaining fragment
    ends = [node for node in range(n) if degree[node] < 2]
    adjacency[ends[0]].append(ends[-1])
    adjacency[ends[-1]].append(ends[0])

    tour, previous, node = [0], None, 0
    while len(tour) < n:
        step = adjacency[node][0] if adjacency[node][0] != previous else adjacency[node][1]
        previous, node = node, step
        tour.append(node)
    return tour


def two_opt_open(matrix, order):
    """First-improvement 2-opt on an open path whose endpoints stay fixed."""
    order = list(order)
    improved = True
    while improved:
        improved = False
        for i in range(1, len(order) - 2):
            for j in range(i + 1, len(order) - 1):
                a, b = order[i - 1], order[i]
                c, d = order[j], order[j + 1]
                delta = matrix[a, c] + matrix[b, d] - matrix[a, b] - matrix[c, d]
                if delta < -1e-12:
                    order[i : j + 1] = reversed(order[i : j + 1])
                    improved = True
    return order


def or_opt_open(matrix, order, max_segment=3):
    """
    First-improvement Or-opt on an open path whose endpoints stay fixed.

    Moves runs of up to max_segment interior nodes to another gap, in either orientation.
    """
    order = list(order)
    n = len(order)
    improved = True
    while improved:
        improved = False
        for length in range(1, max_segment + 1):
            for i in range(1, n - length):
                end = i + length
                prev, nxt = order[i - 1], order[end]
                first, last = order[i], order[end - 1]
                removal = matrix[prev, first] + matrix[last, nxt] - matrix[prev, nxt]
                rest = order[:i] + order[end:]
                for k in range(len(rest) - 1):
                    if k == i - 1:
                        continue
                    a, b = rest[k], rest[k + 1]
                    forward = matrix[a, first] + matrix[last, b] - matrix[a, b]
                    backward = matrix[a, last] + matrix[first, b] - matrix[a, b]
                    if min(forward, backward) < removal - 1e-12:
                        segment = order[i:end] if forward <= backward else order[i:end][::-1]
                        order = rest[: k + 1] + segment + rest[k + 1 :]
                        improved = True
                        break
                if improved:
                    break
            if improved:
                break
    return order


def improve_open_tour(matrix, order):
    """Alternate 2-opt and Or-opt until neither shortens the fixed-endpoint path."""
    order = two_opt_open(matrix, order)
    cost = open_tour_cost(matrix, order)
    while True:
        moved = two_opt_open(matrix, or_opt_open(matrix, order))
        moved_cost = open_tour_cost(matrix, moved)
        if moved_cost >= cost - 1e-12:
            return order
        order, cost = moved, moved_cost


def solve_open_tsp(tg, dummy_cost=DUMMY_COST, improve=True):
    """
    Order of V' from start to end visiting every node once.

    Args:
        tg (TspGraph): Simplified graph.
        dummy_cost (float): Cost between the dummy node and every node except start and end.
        improve (bool): Refine the nearest-fragment order with fixed-endpoint 2-opt and Or-opt.

    Returns:
        list[int]: RAG node ids, starting at start and ending at end.
    """
    k = len(tg.nodes)
    if k < 2:
        raise ValueError("the simplified graph needs at least start and end")

    # Dummy node at index 0, V' index m at m + 1
    augmented = np.full((k + 1, k + 1), float(dummy_cost))
    augmented[1:, 1:] = tg.costs
    augmented[0, 1] = augmented[1, 0] = 0.0
    augmented[0, 2] = augmented[2, 0] = 0.0
    augmented[0, 0] = 0.0

    tour = nearest_fragment_tour(augmented)
    # The dummy sits between start and end; drop it and read the rest from start
    body = tour[1:]
    if body[0] != 1:
        body.reverse()
    order = [index - 1 for index in body]
    if order[0] != 0 or order[-1] != 1:
        raise GraphError("tour does not connect start and end through the dummy node")

    if improve and k > 3:
        order = improve_open_tour(tg.costs, order)
    logger.debug("open tour cost %.4f over %d nodes", open_tour_cost(tg.costs, order), k)
    return [tg.nodes[index] for index in order]


def _edge_cost(graph, path):
    return float(sum(graph.edges[a, b]["cost_total"] for a, b in zip(path[:-1], path[1:])))


def stitch_full_path(graph, tg, order):
    """
    Concatenate shortest RAG paths between consecutive nodes of a tour order.

    Cached paths are reused; other pairs get a fresh Dijkstra search. Junction nodes appear
    once.

    Raises:
        GraphError: If a consecutive pair is not connected in the RAG.

    Returns:
        TrackedPath: Node ids and centroid polyline from start to end.
    """
    if len(order) < 2:
        raise ValueError("order must hold at least start and end")
    nodes = [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        segment = tg.cached_path(a, b)
        if segment is None:
            segment, _ = dijkstra_shortest_path(graph, a, b)
            if segment is None:
                raise GraphError(f"no path between nodes {a} and {b}")
        nodes.extend(segment[1:])

    points = np.array([graph.nodes[node]["centroid"] for node in nodes], dtype=float)
    return TrackedPath(node_ids=tuple(nodes), points_mm=points, total_cost=_edge_cost(graph, nodes))
