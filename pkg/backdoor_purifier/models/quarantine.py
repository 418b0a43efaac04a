from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    """Two-way split of scalar weights; labels are 0/1 per sample."""
    labels: np.ndarray
    centers: Tuple[float, float]
    iterations: int
    inertia: float
    values: np.ndarray
    inertia_trace: Tuple[float, ...] = field(default=(), repr=False)
    refined: bool = False

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)

    @property
    def sizes(self) -> Tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))


@dataclass(frozen=True)
class QuarantineResult:
    """Poisoned / clean split of one infected class, in original row indices."""
    class_id: str
    poisoned_indices: Tuple[int, ...]
    clean_indices: Tuple[int, ...]
    cluster_size_ratio: float
    poisoned_cluster: int
    poisoned_weights: Tuple[float, ...] = field(default=(), repr=False)
    tie_broken: bool = False
    suspicious_singleton: bool = False

    @property
    def flags(self) -> Tuple[str, ...]:
        flags = []
        if self.tie_broken:
            flags.append('tie_broken')
        if self.suspicious_singleton:
            flags.append('suspicious_singleton')
        return tuple(flags)


@dataclass(frozen=True)
class ManifestEntry:
    """One removed sample in the quarantine manifest."""
    sample_id: str
    class_id: str
    weight: float
    cluster: int
    flag: str = ''
