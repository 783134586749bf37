"""
Region adjacency graph over supervoxels and its edge costs.

The total cost of an edge is C = C_wall + lam * C_cyl where C_wall is the mean wall response
along the shared boundary and C_cyl = 1 - |cos| of the angle between the edge and the axis
of the local cylinder containing it.
"""

import logging

import networkx as nx
import numpy as np

from cylinders import points_in_cylinder

logger = logging.getLogger(__name__)

DEFAULT_CYL_COST = 0.5


def _face_pairs(labels):
    """All face-adjacent voxel pairs carrying two different non-zero ids."""
    flat_index = np.arange(labels.size).reshape(labels.shape)
    lows, highs, first, second = [], [], [], []
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        a, b = labels[tuple(lo)], labels[tuple(hi)]
        differs = (a != b) & (a > 0) & (b > 0)
        lows.append(np.minimum(a[differs], b[differs]))
        highs.append(np.maximum(a[differs], b[differs]))
        first.append(flat_index[tuple(lo)][differs])
        second.append(flat_index[tuple(hi)][differs])
    return (
        np.concatenate(lows).astype(np.int64),
        np.concatenate(highs).astype(np.int64),
        np.concatenate(first),
        np.concatenate(second),
    )


def build_rag(labeling, lam=1.0):
    """
    Build the region adjacency graph of a supervoxel labeling.

    Nodes are supervoxel ids 1..N with a ``centroid`` attribute. An edge joins two
    supervoxels sharing at least one face-adjacent voxel pair; it stores the flat indices of
    the boundary voxels on both sides (``boundary``) and the cost attributes ``cost_wall``,
    ``cost_cyl`` and ``cost_total``.

    Args:
        labeling (SupervoxelLabeling): Supervoxels.
        lam (float): Weight of the cylindrical cost term.

    Returns:
        networkx.Graph: Simple undirected graph.
    """
    labels = np.asarray(labeling.labels.data)
    graph = nx.Graph(lam=float(lam), grid_shape=labels.shape)
    for node in range(1, labeling.count + 1):
        graph.add_node(node, centroid=labeling.centroids_mm[node])

    low, high, first, second = _face_pairs(labels)
    if low.size:
        keys = low * (labeling.count + 1) + high
        keys = np.concatenate([keys, keys])
        voxels = np.concatenate([first, second])
        order = np.argsort(keys, kind="stable")
        keys, voxels = keys[order], voxels[order]
        unique_keys, starts = np.unique(keys, return_index=True)
        for key, group in zip(unique_keys, np.split(voxels, starts[1:])):
            u, v = divmod(int(key), labeling.count + 1)
            graph.add_edge(
                u,
                v,
                boundary=np.unique(group),
                cost_wall=0.0,
                cost_cyl=DEFAULT_CYL_COST,
                cost_total=lam * DEFAULT_CYL_COST,
            )
    logger.debug("RAG built: %d nodes, %d edges", graph.number_of_nodes(), graph.number_of_edges())
    return graph


def update_total_costs(graph, lam=None):
    """
    Recompute cost_total = cost_wall + lam * cost_cyl on a copy of the graph.

    Args:
        graph (networkx.Graph): RAG.
        lam (float | None): New weight; None keeps the graph's current one.

    Returns:
        networkx.Graph: Updated copy.
    """
    graph = graph.copy()
    if lam is not None:
        if lam < 0:
            raise ValueError("lam must be >= 0")
        graph.graph["lam"] = float(lam)
    lam = graph.graph["lam"]
    for _, _, data in graph.edges(data=True):
        data["cost_total"] = data["cost_wall"] + lam * data["cost_cyl"]
    return graph


def compute_wall_costs(graph, walls):
    """
    Set cost_wall to the mean wall response over each edge's boundary voxels.

    Args:
        graph (networkx.Graph): RAG from build_rag.
        walls (Volume): Wall detection map on the labeling grid.

    Returns:
        networkx.Graph: Copy with cost_wall and cost_total updated.
    """
    if tuple(walls.dims) != tuple(graph.graph["grid_shape"]):
        raise ValueError("wall map grid does not match the labeling grid")
    values = np.asarray(walls.data, dtype=float).ravel()
    graph = graph.copy()
    for _, _, data in graph.edges(data=True):
        data["cost_wall"] = float(values[data["boundary"]].mean())
    return update_total_costs(graph)


def cylinder_edge_cost(p_i, p_j, axis, default=DEFAULT_CYL_COST):
    """1 - |cos| of the angle between p_j - p_i and the axis; default for zero-length edges."""
    direction = np.asarray(p_j, dtype=float) - np.asarray(p_i, dtype=float)
    length = np.linalg.norm(direction)
    axis = np.asarray(axis, dtype=float)
    if length == 0:
        return default
    cosine = direction.dot(axis) / (length * np.linalg.norm(axis))
    return float(1.0 - min(abs(cosine), 1.0))


def compute_cylinder_costs(graph, cylinders, default=DEFAULT_CYL_COST):
    """
    Set cost_cyl for every edge from the fitted local cylinders.

    An edge is steered by a cylinder only when both endpoint centroids lie inside that finite
    cylinder; with several candidates the one whose centre is nearest to the edge midpoint
    wins. Other edges get the default cost. Invalid cylinders are ignored.

    Args:
        graph (networkx.Graph): RAG.
        cylinders (list[Cylinder]): Fitted cylinders.
        default (float): Cost for edges outside every cylinder.

    Returns:
        networkx.Graph: Copy with cost_cyl and cost_total updated.
    """
    valid = [c for c in cylinders if c.valid]
    graph = graph.copy()
    nodes = np.array(sorted(graph.nodes), dtype=int)
    position = {node: row for row, node in enumerate(nodes)}

    if valid and nodes.size:
        centroids = np.array([graph.nodes[node]["centroid"] for node in nodes], dtype=float)
        inside = np.stack([points_in_cylinder(centroids, c) for c in valid], axis=1)
        centers = np.array([c.center_mm for c in valid])
    else:
        inside = np.zeros((nodes.size, 0), dtype=bool)

    steered = 0
    for u, v, data in graph.edges(data=True):
        candidates = np.flatnonzero(inside[position[u]] & inside[position[v]])
        if candidates.size == 0:
            data["cost_cyl"] = default
            continue
        p_u, p_v = graph.nodes[u]["centroid"], graph.nodes[v]["centroid"]
        midpoint = (np.asarray(p_u) + np.asarray(p_v)) / 2.0
        nearest = candidates[np.argmin(np.linalg.norm(centers[candidates] - midpoint, axis=1))]
        data["cost_cyl"] = cylinder_edge_cost(p_u, p_v, valid[nearest].axis, default)
        steered += 1
    logger.debug("cylinder costs: %d of %d edges steered", steered, graph.number_of_edges())
    return update_total_costs(graph)


def edge_list_lines(graph):
    """Rows ``node_i node_j cost_wall cost_cyl cost_total`` sorted by node ids."""
    lines = []
    for u, v in sorted(tuple(sorted(edge)) for edge in graph.edges):
        data = graph.edges[u, v]
        lines.append(
            f"{u} {v} {data['cost_wall']:.9g} {data['cost_cyl']:.9g} {data['cost_total']:.9g}"
        )
    return lines
