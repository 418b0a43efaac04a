import logging
from typing import Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial.distance import pdist, squareform

from ..errors import DegenerateDistances, Disconnected, TooFewPoints
from ..models.flattening import FlatteningReport, NeighborhoodGraph
from ..models.representation import RepresentationMatrix

logger = logging.getLogger(__name__)

DEFAULT_KNN = 10
DEGENERATE_NORM = 1e-15
# Relative floor on edge weights so coincident points stay adjacent.
EDGE_FLOOR = 1e-12

PointCloud = Union[RepresentationMatrix, np.ndarray]


def _as_points(X: PointCloud) -> np.ndarray:
    data = X.data if isinstance(X, RepresentationMatrix) else np.asarray(X, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"Point cloud must be 2-D, got shape {data.shape}")
    return data


def _edge_weights(distances: np.ndarray) -> np.ndarray:
    finite = distances[np.isfinite(distances)]
    scale = float(finite.max()) if finite.size else 1.0
    return np.maximum(distances, EDGE_FLOOR * max(scale, 1e-300))


def build_knn_graph(X: PointCloud, k_nn: int = DEFAULT_KNN) -> NeighborhoodGraph:
    """
    Symmetric k-nearest-neighbor graph with Euclidean edge weights.

    Each vertex is joined to its k_nn nearest points and the edge sets are
    united. Disconnected components are then bridged, one at a time, by
    the shortest edge between two different components.

    Raises:
        TooFewPoints: Fewer than k_nn + 1 points
    """
    if k_nn < 1:
        raise ValueError(f"k_nn must be at least 1, got {k_nn}")
    data = _as_points(X)
    N = data.shape[0]
    if N < k_nn + 1:
        raise TooFewPoints(N, k_nn)

    distances = squareform(pdist(data))
    weights = _edge_weights(distances)
    np.fill_diagonal(distances, np.inf)
    neighbors = np.argsort(distances, axis=1, kind='stable')[:, :k_nn]

    W = np.zeros((N, N))
    rows = np.repeat(np.arange(N), k_nn)
    cols = neighbors.ravel()
    W[rows, cols] = weights[rows, cols]
    W = np.maximum(W, W.T)

    repairs = 0
    n_components, labels = connected_components(sparse.csr_matrix(W), directed=False)
    while n_components > 1:
        across = np.where(labels[:, None] != labels[None, :], distances, np.inf)
        i, j = np.unravel_index(int(np.argmin(across)), across.shape)
        W[i, j] = W[j, i] = weights[i, j]
        repairs += 1
        n_components, labels = connected_components(sparse.csr_matrix(W), directed=False)
    if repairs:
        logger.info(f"Neighborhood graph was disconnected; added {repairs} bridge edge(s)")

    return NeighborhoodGraph(
        n_vertices=N, adjacency=sparse.csr_matrix(W), k_nn=k_nn, repair_edges_added=repairs,
    )


def geodesic_distances(graph: NeighborhoodGraph) -> np.ndarray:
    """
    All-pairs shortest path lengths over the neighborhood graph.

    Raises:
        Disconnected: Some pair has no connecting path
    """
    G = dijkstra(graph.adjacency, directed=False)
    if not np.all(np.isfinite(G)):
        raise Disconnected("Neighborhood graph has unreachable vertex pairs")
    G = np.minimum(G, G.T)
    np.fill_diagonal(G, 0.0)
    return G


def flattening_metric(G: np.ndarray, E: np.ndarray,
                      graph: Optional[NeighborhoodGraph] = None) -> FlatteningReport:
    """
    c = 1 - cos(r_G, r_E) over the upper triangles of the geodesic and
    Euclidean distance matrices. Zero when every geodesic is a straight line.

    Raises:
        DegenerateDistances: All points coincide
    """
    G = np.asarray(G, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape != E.shape:
        raise ValueError(f"Need two equal square matrices, got {G.shape} and {E.shape}")
    N = G.shape[0]
    upper = np.triu_indices(N, k=1)
    r_G, r_E = G[upper], E[upper]
    norm_G, norm_E = np.linalg.norm(r_G), np.linalg.norm(r_E)
    if norm_G < DEGENERATE_NORM or norm_E < DEGENERATE_NORM:
        raise DegenerateDistances("All pairwise distances vanish; the points coincide")
    c = 1.0 - float(r_G @ r_E) / (norm_G * norm_E)
    c = min(max(c, 0.0), 2.0)
    return FlatteningReport(
        c=c, N=N,
        k_nn=graph.k_nn if graph is not None else None,
        repair_edges_added=graph.repair_edges_added if graph is not None else 0,
    )


def flatten_point_cloud(X: PointCloud, k_nn: int = DEFAULT_KNN) -> FlatteningReport:
    """kNN graph, geodesics and the flattening metric in one call."""
    data = _as_points(X)
    graph = build_knn_graph(data, k_nn)
    E = squareform(pdist(data))
    report = flattening_metric(geodesic_distances(graph), E, graph)
    logger.debug(f"Flattening metric c={report.c:.6g} on {report.N} points (k_nn={k_nn})")
    return report
