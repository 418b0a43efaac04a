import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import InfeasibleConfig
from ..utils.seeding import class_sort_key
from .representation import CleanReference, LabeledDataset, RepresentationMatrix


@dataclass(frozen=True)
class SubspaceModelConfig:
    """Parameters of the low-rank-subspace-plus-noise class model."""
    n: int = 64
    T: int = 10
    d: int = 5
    m_per_class: int = 200
    infected_class: Optional[int] = 0
    m_poison: int = 100
    noise_sigma: float = 0.01
    subspace_angle: float = 0.2
    seed: int = 0
    variance_ratio: float = 1.0
    trigger_strength: float = 0.0
    poison_sources: int = 1
    clean_rate: float = 0.10
    min_latent_norm: float = 0.5

    def validate(self) -> None:
        """Raise InfeasibleConfig when the model cannot be realized."""
        if self.n < 1 or self.T < 1 or self.d < 1 or self.m_per_class < 1:
            raise InfeasibleConfig("n, T, d and m_per_class must be positive")
        if self.d > self.n:
            raise InfeasibleConfig(f"Subspace rank d={self.d} exceeds n={self.n}")
        if self.noise_sigma < 0:
            raise InfeasibleConfig("noise_sigma must be non-negative")
        if self.variance_ratio <= 0:
            raise InfeasibleConfig("variance_ratio must be positive")
        if self.trigger_strength < 0:
            raise InfeasibleConfig("trigger_strength must be non-negative")
        if not 0 < self.clean_rate <= 1:
            raise InfeasibleConfig("clean_rate must lie in (0, 1]")
        if not 0 <= self.min_latent_norm < 1:
            raise InfeasibleConfig("min_latent_norm must lie in [0, 1)")
        if not self.is_poisoned:
            return
        if not 0 <= self.infected_class < self.T:
            raise InfeasibleConfig(
                f"infected_class {self.infected_class} outside 0..{self.T - 1}"
            )
        if not 0 < self.subspace_angle <= math.pi / 2:
            raise InfeasibleConfig("subspace_angle must lie in (0, pi/2]")
        if self.poison_sources < 1 or self.poison_sources > self.m_poison:
            raise InfeasibleConfig("poison_sources must lie in 1..m_poison")
        if 2 * self.d > self.n:
            raise InfeasibleConfig(
                f"Two {self.d}-dimensional subspaces do not fit in R^{self.n}"
            )
        needed = self.d * (1 + self.poison_sources) + (1 if self.trigger_strength > 0 else 0)
        if needed > self.n:
            raise InfeasibleConfig(
                f"{self.poison_sources} poison source(s) with a trigger direction "
                f"need n >= {needed}, got n={self.n}"
            )

    @property
    def is_poisoned(self) -> bool:
        return self.infected_class is not None and self.m_poison > 0

    @property
    def clean_per_class(self) -> int:
        return max(5, int(round(self.clean_rate * self.m_per_class)))


@dataclass(eq=False)
class GroundTruth:
    """What the generator did, for scoring detection and identification."""
    poisoned_indices: Dict[str, List[int]] = field(default_factory=dict)
    bases: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    poison_bases: Dict[str, List[np.ndarray]] = field(default_factory=dict, repr=False)
    principal_angles: Dict[str, List[List[float]]] = field(default_factory=dict)
    class_spans: Dict[str, Tuple[int, int]] = field(default_factory=dict)

    @property
    def infected_classes(self) -> List[str]:
        return sorted((c for c, rows in self.poisoned_indices.items() if rows), key=class_sort_key)

    def to_dict(self) -> dict:
        return {
            'infected_classes': self.infected_classes,
            'poisoned_indices': {c: list(rows) for c, rows in self.poisoned_indices.items()},
            'principal_angles': self.principal_angles,
            'class_spans': {c: [start, stop] for c, (start, stop) in self.class_spans.items()},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> 'GroundTruth':
        return cls(
            poisoned_indices={
                str(c): [int(i) for i in rows]
                for c, rows in payload.get('poisoned_indices', {}).items()
            },
            principal_angles=payload.get('principal_angles', {}),
            class_spans={
                str(c): (int(span[0]), int(span[1]))
                for c, span in payload.get('class_spans', {}).items()
            },
        )


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Generated training set, held-out clean samples and what was planted."""
    dataset: LabeledDataset
    clean: RepresentationMatrix
    reference: CleanReference
    ground_truth: GroundTruth
    config: SubspaceModelConfig
