from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True, eq=False)
class WeightVector:
    """
    Coherence-maximizing sample weights of one class.

    a is the unit top eigenvector of the residual Gram matrix, sign
    normalized so that its entries sum to a non-negative value.
    lambda_star is the matching eigenvalue (the objective value).
    """
    a: np.ndarray
    lambda_star: float
    class_id: str
    row_map: Tuple[int, ...]
    spectral_gap: float = float('inf')
    degenerate_top_space: bool = False

    def __post_init__(self):
        weights = np.array(self.a, dtype=np.float64)
        if weights.ndim != 1:
            raise ValueError(f"Weight vector must be 1-d, got shape {weights.shape}")
        if abs(np.linalg.norm(weights) - 1.0) > 1e-9:
            raise ValueError("Weight vector must have unit norm")
        if self.lambda_star < 0:
            raise ValueError("lambda_star must be non-negative")
        if len(self.row_map) != weights.shape[0]:
            raise ValueError("row_map length does not match the weight vector")
        weights.flags.writeable = False
        object.__setattr__(self, 'a', weights)
        object.__setattr__(self, 'row_map', tuple(int(i) for i in self.row_map))

    @property
    def m(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True, eq=False)
class GroupingReport:
    """Pairwise check of |a_i - a_j| <= sqrt(2(1 - rho_ij) / lambda_star)."""
    max_violation: float
    worst_pair: Tuple[int, int]
    bound_slack: np.ndarray
    degenerate_top_space: bool = False
    warnings: Tuple[str, ...] = field(default=())

    @property
    def holds(self) -> bool:
        return self.max_violation <= 1e-9

    def slack(self, i: int, j: int) -> float:
        return float(self.bound_slack[i, j])


@dataclass(frozen=True, eq=False)
class ClassWeights:
    """Outcome of the weighting stage for one class; weights is None when it failed."""
    class_id: str
    m: int
    weights: Optional[WeightVector] = None
    k: Optional[int] = None
    cpv: Optional[float] = None
    warnings: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.weights is not None
