from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional


@dataclass
class ClassRecord:
    """One row of the detection report."""
    class_id: str
    m: int
    k: Optional[int] = None
    cpv_achieved: Optional[float] = None
    lambda_star: Optional[float] = None
    J: Optional[float] = None
    J_hat: Optional[float] = None
    infected: bool = False
    p_value: Optional[float] = None
    warnings: List[str] = field(default_factory=list)


@dataclass
class DetectionReport:
    """Per-run output of the detection stage."""
    tau: float
    confidence_level: float
    cpv_threshold: float
    seed: int
    median_J: Optional[float] = None
    apd: Optional[float] = None
    classes: List[ClassRecord] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    runtime_seconds: Dict[str, float] = field(default_factory=dict)

    @property
    def infected_classes(self) -> List[str]:
        return [record.class_id for record in self.classes if record.infected]

    def record(self, class_id: str) -> ClassRecord:
        for record in self.classes:
            if record.class_id == class_id:
                return record
        raise KeyError(class_id)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload['infected_classes'] = self.infected_classes
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> 'DetectionReport':
        classes = [ClassRecord(**record) for record in payload.get('classes', [])]
        return cls(
            tau=payload['tau'],
            confidence_level=payload['confidence_level'],
            cpv_threshold=payload['cpv_threshold'],
            seed=payload['seed'],
            median_J=payload.get('median_J'),
            apd=payload.get('apd'),
            classes=classes,
            warnings=list(payload.get('warnings', [])),
            runtime_seconds=dict(payload.get('runtime_seconds', {})),
        )


@dataclass(frozen=True)
class DetectionRates:
    """Infected-class recall and clean-class false-flag rate of one run."""
    tpr: Optional[float]
    fpr: Optional[float]
    true_positives: List[str] = field(default_factory=list)
    false_positives: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class IdentificationRates:
    """Share of poisoned samples quarantined and of authentic samples lost."""
    tpr: Optional[float]
    fpr: Optional[float]
    quarantined: int = 0
    poisoned: int = 0
    authentic: int = 0
