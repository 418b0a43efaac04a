from dataclasses import dataclass
from typing import Optional

from scipy import sparse


@dataclass(frozen=True, eq=False)
class NeighborhoodGraph:
    """Symmetric k-nearest-neighbor graph weighted by Euclidean distance."""
    n_vertices: int
    adjacency: sparse.csr_matrix
    k_nn: int
    repair_edges_added: int = 0

    @property
    def n_edges(self) -> int:
        return int(sparse.triu(self.adjacency, k=1).nnz)


@dataclass(frozen=True)
class FlatteningReport:
    """Geodesic vs. Euclidean discrepancy of a point cloud."""
    c: float
    N: int
    k_nn: Optional[int] = None
    repair_edges_added: int = 0

    def to_dict(self) -> dict:
        return {
            'c': self.c,
            'N': self.N,
            'k_nn': self.k_nn,
            'repair_edges_added': self.repair_edges_added,
        }
