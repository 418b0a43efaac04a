import logging
from typing import Tuple

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from ..errors import DegenerateObjective, IndexOutOfRange, NumericalFailure, TooFewSamples
from ..models.representation import PreprocessedClass
from ..models.subspace import SubspaceBasis
from ..models.weights import GroupingReport, WeightVector
from . import subspace

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4096
DEGENERATE_OBJECTIVE = 1e-12
TIE_GAP = 1e-10
ITERATIVE_TOL = 1e-12
ITERATIVE_MAX_ITER = 10000


def _top_two(M: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Two largest eigenpairs of a symmetric matrix, largest last."""
    m = M.shape[0]
    try:
        if m <= DENSE_LIMIT:
            return linalg.eigh(M, subset_by_index=[m - 2, m - 1], check_finite=False)
        values, vectors = eigsh(M, k=2, which='LA', tol=ITERATIVE_TOL,
                                maxiter=ITERATIVE_MAX_ITER, v0=np.ones(m))
    except (linalg.LinAlgError, ArpackNoConvergence) as e:
        raise NumericalFailure(f"Top eigenpair of the residual Gram failed: {e}") from e
    order = np.argsort(values)
    return values[order], vectors[:, order]


def _sign_normalize(a: np.ndarray) -> np.ndarray:
    total = a.sum()
    if abs(total) <= 1e-12:
        # Sum is zero up to round-off: orient by the first clearly nonzero entry.
        nonzero = np.flatnonzero(np.abs(a) > 1e-12)
        return -a if nonzero.size and a[nonzero[0]] < 0 else a
    return -a if total < 0 else a


def optimize_weights(X: PreprocessedClass, P: SubspaceBasis) -> WeightVector:
    """
    Sample weights maximizing the coherence of the weighted class outside span(P).

    The maximizer of a^T M a over unit vectors, M = residual_gram(X, P),
    is the top eigenvector of M and the maximum is its eigenvalue.

    Raises:
        TooFewSamples: Fewer than two samples
        NumericalFailure: The eigensolver did not converge
        DegenerateObjective: The class lies entirely inside span(P)
    """
    if X.m < 2:
        raise TooFewSamples(X.m, 2)
    M = subspace.residual_gram(X, P)
    values, vectors = _top_two(M)
    lambda_star = float(max(values[-1], 0.0))
    if lambda_star < DEGENERATE_OBJECTIVE:
        raise DegenerateObjective(lambda_star)
    gap = float(values[-1] - values[-2])
    a = vectors[:, -1] / np.linalg.norm(vectors[:, -1])
    a = _sign_normalize(a)
    degenerate = gap < TIE_GAP
    if degenerate:
        logger.debug(f"Class {X.class_id}: leading eigenspace is degenerate (gap {gap:.2e})")
    logger.debug(f"Class {X.class_id}: lambda*={lambda_star:.6g} with k={P.k}")
    return WeightVector(
        a=a,
        lambda_star=lambda_star,
        class_id=X.class_id,
        row_map=X.row_map,
        spectral_gap=gap,
        degenerate_top_space=degenerate,
    )


def weigh_class(X: PreprocessedClass,
                cpv_threshold: float = subspace.DEFAULT_CPV) -> Tuple[WeightVector, SubspaceBasis]:
    """Latent basis by CPV selection, then the optimal weights against it."""
    spectrum = subspace.covariance_eigen(X)
    k, _ = subspace.select_components(spectrum, cpv_threshold)
    basis = subspace.build_basis(spectrum, k)
    return optimize_weights(X, basis), basis


def pairwise_coherence(X: PreprocessedClass, i: int, j: int) -> float:
    """Inner product of two unit-length samples, clamped to [-1, 1]."""
    for index in (i, j):
        if not 0 <= index < X.m:
            raise IndexOutOfRange(index, X.m)
    return float(np.clip(X.X[i] @ X.X[j], -1.0, 1.0))


def grouping_bound_report(X: PreprocessedClass, P: SubspaceBasis,
                          w: WeightVector) -> GroupingReport:
    """
    Check |a_i - a_j| <= sqrt(2(1 - rho_ij) / lambda*) over every pair.

    bound_slack[i, j] is bound minus observed difference, so negative
    entries are violations.
    """
    if w.m != X.m:
        raise ValueError(f"Weight vector has {w.m} entries for {X.m} samples")
    warnings = []
    residual = X.X - (X.X @ P.P) @ P.P.T
    objective = float(np.sum((residual.T @ w.a) ** 2))
    if abs(objective - w.lambda_star) > 1e-8 * max(1.0, w.lambda_star):
        warnings.append('weights_inconsistent_with_inputs')
        logger.warning(
            f"Class {X.class_id}: a^T M a = {objective:.6g} but lambda* = {w.lambda_star:.6g}"
        )
    rho = np.clip(X.X @ X.X.T, -1.0, 1.0)
    bound = np.sqrt(np.maximum(0.0, 2.0 * (1.0 - rho)) / w.lambda_star)
    difference = np.abs(w.a[:, None] - w.a[None, :])
    slack = bound - difference
    if X.m < 2:
        return GroupingReport(0.0, (0, 0), slack, w.degenerate_top_space, tuple(warnings))
    upper_i, upper_j = np.triu_indices(X.m, k=1)
    violations = -slack[upper_i, upper_j]
    worst = int(np.argmax(violations))
    return GroupingReport(
        max_violation=float(violations[worst]),
        worst_pair=(int(upper_i[worst]), int(upper_j[worst])),
        bound_slack=slack,
        degenerate_top_space=w.degenerate_top_space,
        warnings=tuple(warnings),
    )
