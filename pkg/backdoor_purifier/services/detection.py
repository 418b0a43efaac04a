import logging
import math
from dataclasses import dataclass, replace
from typing import List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import special, stats

from ..config import EMSettings
from ..errors import TooFewClasses, TooFewSamples
from ..models.statistics import ClassStatistics, GaussianFit, MixtureFit
from ..utils.seeding import class_sort_key

logger = logging.getLogger(__name__)

APD_CONSTANT = 1.1926
DEFAULT_TAU = 3.0
MIXTURE_DOF = 3
SHARED_VARIANCE_DOF = 2
MIN_COMPONENT_MASS = 2.0
PI_BOUNDS = (1e-6, 1.0 - 1e-6)


@dataclass(frozen=True)
class _Seed:
    pi: float
    mu1: float
    mu2: float
    sigma2_1: float
    sigma2_2: float


def fit_gaussian(a: Sequence[float], variance_floor: float = 1e-12) -> GaussianFit:
    """
    Maximum-likelihood single Gaussian.

    Raises:
        TooFewSamples: Fewer than two entries
    """
    a = np.asarray(a, dtype=np.float64)
    if a.size < 2:
        raise TooFewSamples(a.size, 2)
    mu = float(a.mean())
    sigma2 = max(float(np.mean((a - mu) ** 2)), variance_floor)
    loglik = float(stats.norm.logpdf(a, loc=mu, scale=math.sqrt(sigma2)).sum())
    return GaussianFit(mu=mu, sigma2=sigma2, loglik=loglik)


def _component_logs(a: np.ndarray, seed: _Seed) -> Tuple[np.ndarray, np.ndarray]:
    log1 = math.log(seed.pi) + stats.norm.logpdf(a, seed.mu1, math.sqrt(seed.sigma2_1))
    log2 = math.log(1.0 - seed.pi) + stats.norm.logpdf(a, seed.mu2, math.sqrt(seed.sigma2_2))
    return log1, log2


def _run_em(a: np.ndarray, seed: _Seed, settings: EMSettings) -> MixtureFit:
    """One EM run; `collapsed` marks runs where a component fell below two points."""
    m = a.size
    log1, log2 = _component_logs(a, seed)
    log_total = np.logaddexp(log1, log2)
    trace = [float(log_total.sum())]
    converged = False
    collapsed = False
    iterations = 0
    params = seed
    for iterations in range(1, settings.max_iter + 1):
        r1 = np.exp(log1 - log_total)
        r2 = np.exp(log2 - log_total)
        n1, n2 = float(r1.sum()), float(r2.sum())
        if n1 < MIN_COMPONENT_MASS or n2 < MIN_COMPONENT_MASS:
            collapsed = True
            break
        mu1 = float(r1 @ a / n1)
        mu2 = float(r2 @ a / n2)
        ss1 = float(r1 @ (a - mu1) ** 2)
        ss2 = float(r2 @ (a - mu2) ** 2)
        if settings.shared_variance:
            s1 = s2 = max((ss1 + ss2) / m, settings.variance_floor)
        else:
            s1 = max(ss1 / n1, settings.variance_floor)
            s2 = max(ss2 / n2, settings.variance_floor)
        pi = float(np.clip(n1 / m, *PI_BOUNDS))
        params = _Seed(pi, mu1, mu2, s1, s2)
        log1, log2 = _component_logs(a, params)
        log_total = np.logaddexp(log1, log2)
        trace.append(float(log_total.sum()))
        if abs(trace[-1] - trace[-2]) < settings.tol:
            converged = True
            break
    return MixtureFit(
        pi=params.pi, mu1=params.mu1, mu2=params.mu2,
        sigma2_1=params.sigma2_1, sigma2_2=params.sigma2_2,
        loglik=trace[-1], iterations=iterations, converged=converged,
        restarts_used=1, loglik_trace=tuple(trace), collapsed=collapsed,
    )


def _split_seed(a: np.ndarray, q: float, settings: EMSettings) -> Optional[_Seed]:
    threshold = np.quantile(a, q)
    low, high = a[a <= threshold], a[a > threshold]
    if low.size < 2 or high.size < 2:
        return None
    s1 = max(float(low.var()), settings.variance_floor)
    s2 = max(float(high.var()), settings.variance_floor)
    if settings.shared_variance:
        s1 = s2 = max((low.size * s1 + high.size * s2) / a.size, settings.variance_floor)
    pi = float(np.clip(low.size / a.size, *PI_BOUNDS))
    return _Seed(pi, float(low.mean()), float(high.mean()), s1, s2)


def _restart_quantiles(restarts: int, seed: int) -> List[float]:
    # Quantiles come in q / 1-q pairs so that negating the data maps the
    # set of starting partitions onto itself.
    rng = np.random.default_rng(seed)
    quantiles: List[float] = []
    for q in rng.uniform(0.1, 0.9, size=(restarts + 1) // 2):
        quantiles.extend([float(q), float(1.0 - q)])
    return quantiles[:restarts]


def fit_gmm2(a: Sequence[float], settings: Optional[EMSettings] = None,
             seed: Optional[int] = None) -> MixtureFit:
    """
    Two-component Gaussian mixture by EM with several starts.

    Candidates are the null fit embedded as a mixture of two identical
    components (so the result never scores below the single Gaussian), a
    run split +-0.5 sigma around the null mean, a median split, and
    `settings.restarts` runs split at seeded random quantiles. Runs whose
    components collapse are discarded; if every run collapses the
    embedded null fit is returned with `collapsed=True`.

    Raises:
        TooFewSamples: Fewer than four entries
    """
    settings = settings or EMSettings()
    seed = settings.seed if seed is None else seed
    a = np.asarray(a, dtype=np.float64)
    if a.size < 4:
        raise TooFewSamples(a.size, 4)
    null = fit_gaussian(a, settings.variance_floor)
    embedded = MixtureFit(
        pi=0.5, mu1=null.mu, mu2=null.mu, sigma2_1=null.sigma2, sigma2_2=null.sigma2,
        loglik=null.loglik, iterations=0, converged=True, restarts_used=0,
        loglik_trace=(null.loglik,),
    )

    sigma = math.sqrt(null.sigma2)
    seeds = [_Seed(0.5, null.mu - 0.5 * sigma, null.mu + 0.5 * sigma, null.sigma2, null.sigma2)]
    seeds.append(_split_seed(a, 0.5, settings))
    seeds.extend(_split_seed(a, q, settings) for q in _restart_quantiles(settings.restarts, seed))

    runs = [_run_em(a, s, settings) for s in seeds if s is not None]
    usable = [run for run in runs if not run.collapsed]
    if not usable:
        logger.debug("Every EM run collapsed; falling back to the null fit")
        return replace(embedded, restarts_used=len(runs), collapsed=True)
    best = max(usable, key=lambda run: run.loglik)
    if best.loglik < embedded.loglik:
        best = embedded
    logger.debug(
        f"Mixture fit: loglik {best.loglik:.6g} after {best.iterations} iterations "
        f"({len(usable)}/{len(runs)} usable runs)"
    )
    return replace(best, restarts_used=len(runs))


def likelihood_ratio(g: GaussianFit, mix: MixtureFit) -> float:
    """J = -2 log(L0 / L1), clamped at zero."""
    return max(0.0, 2.0 * (mix.loglik - g.loglik))


def apd(values: Sequence[float]) -> float:
    """
    Absolute pairwise difference scale: low median over i of the high
    median over j of |v_i - v_j| (j ranges over every class, i included).

    Raises:
        TooFewClasses: Fewer than three values
    """
    v = np.asarray(values, dtype=np.float64)
    T = v.size
    if T < 3:
        raise TooFewClasses(T)
    differences = np.abs(v[:, None] - v[None, :])
    inner = np.sort(differences, axis=1)[:, T // 2]
    return float(np.sort(inner)[(T + 1) // 2 - 1])


def anomaly_index(values: Sequence[float]) -> Tuple[np.ndarray, List[str]]:
    """
    Robust standardization |J_t - med(J)| / (c * APD(J)), c = 1.1926.

    Returns:
        (indices, warnings); all indices are 0 with a DegenerateSpread
        warning when the APD is zero
    """
    v = np.asarray(values, dtype=np.float64)
    scale = apd(v)
    if scale <= 0:
        logger.warning("All likelihood ratios coincide; anomaly indices set to 0")
        return np.zeros_like(v), ['DegenerateSpread']
    return np.abs(v - np.median(v)) / (APD_CONSTANT * scale), []


def detect_infected(stats_by_class: Sequence[ClassStatistics], tau: float = DEFAULT_TAU) -> Set[str]:
    """Classes with anomaly index above tau and J above the median J."""
    if len(stats_by_class) < 3:
        raise TooFewClasses(len(stats_by_class))
    median = float(np.median([s.J for s in stats_by_class]))
    return {s.class_id for s in stats_by_class if s.J_hat > tau and s.J > median}


def chi2_pvalue(J: float, dof: int = MIXTURE_DOF) -> float:
    """Upper-tail chi-square probability via the regularized incomplete gamma."""
    if J < 0 or dof < 1:
        raise ValueError(f"Need J >= 0 and dof >= 1, got J={J}, dof={dof}")
    return float(special.gammaincc(dof / 2.0, J / 2.0))


def confidence_level(tau: float) -> float:
    """One-sided normal confidence attached to an anomaly-index threshold."""
    return float(stats.norm.cdf(tau))


def score_classes(J_by_class: Mapping[str, float], tau: float = DEFAULT_TAU,
                  dof: int = MIXTURE_DOF) -> Tuple[List[ClassStatistics], float, float, List[str]]:
    """
    Anomaly indices, p-values and infected flags for every class.

    Returns:
        (statistics in sorted class order, median J, APD of J, warnings)
    """
    class_ids = sorted(J_by_class, key=class_sort_key)
    J = np.array([J_by_class[c] for c in class_ids], dtype=np.float64)
    J_hat, warnings = anomaly_index(J)
    median = float(np.median(J))
    scored = [
        ClassStatistics(
            class_id=c, J=float(j), J_hat=float(jh), infected=False,
            p_value=chi2_pvalue(float(j), dof),
            above_threshold=bool(jh > tau), above_median=bool(j > median),
        )
        for c, j, jh in zip(class_ids, J, J_hat)
    ]
    infected = detect_infected(scored, tau)
    scored = [
        replace(s, infected=s.class_id in infected) for s in scored
    ]
    for s in scored:
        if s.infected:
            logger.info(f"Class {s.class_id} flagged: J={s.J:.4g}, anomaly index {s.J_hat:.3f}")
    return scored, median, apd(J), warnings
