from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class Spectrum:
    """
    Eigen-decomposition of a class scatter matrix.

    eigenvalues has one entry per feature (non-increasing, clamped at 0).
    eigenvectors holds the computed columns paired with the leading
    eigenvalues; when the scatter is formed through the sample Gram
    matrix only min(m, n) columns are materialized and the remaining
    eigenvalues are exactly zero.
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sample_count: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.eigenvalues, dtype=np.float64)
        vectors = np.array(self.eigenvectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != values.shape[0]:
            raise ValueError(
                f"Eigenvector block {vectors.shape} does not match "
                f"{values.shape[0]} eigenvalues"
            )
        scale = max(1.0, float(values.max(initial=0.0)))
        if np.any(np.diff(values) > 1e-12 * scale):
            raise ValueError("Eigenvalues must be sorted non-increasing")
        values.flags.writeable = False
        vectors.flags.writeable = False
        object.__setattr__(self, 'eigenvalues', values)
        object.__setattr__(self, 'eigenvectors', vectors)

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def rank_computed(self) -> int:
        return self.eigenvectors.shape[1]

    @property
    def total_variance(self) -> float:
        return float(self.eigenvalues.sum())


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal basis P of the latent subspace."""
    P: np.ndarray
    k: int
    cpv: float

    def __post_init__(self):
        basis = np.array(self.P, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[1] != self.k:
            raise ValueError(f"Basis shape {basis.shape} does not match k={self.k}")
        basis.flags.writeable = False
        object.__setattr__(self, 'P', basis)

    @property
    def n(self) -> int:
        return self.P.shape[0]
