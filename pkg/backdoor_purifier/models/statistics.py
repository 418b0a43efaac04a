from dataclasses import dataclass, field
from typing import Optional, Tuple


@dataclass(frozen=True)
class GaussianFit:
    """Single-Gaussian (null hypothesis) fit of the weight entries."""
    mu: float
    sigma2: float
    loglik: float


@dataclass(frozen=True)
class MixtureFit:
    """Two-component Gaussian mixture (alternative hypothesis) fit."""
    pi: float
    mu1: float
    mu2: float
    sigma2_1: float
    sigma2_2: float
    loglik: float
    iterations: int
    converged: bool
    restarts_used: int
    loglik_trace: Tuple[float, ...] = field(default=(), repr=False)
    collapsed: bool = False


@dataclass(frozen=True)
class ClassStatistics:
    """Per-class detection outcome."""
    class_id: str
    J: float
    J_hat: float
    infected: bool
    p_value: Optional[float] = None
    above_threshold: bool = False
    above_median: bool = False
