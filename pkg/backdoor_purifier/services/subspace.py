import logging
from typing import Tuple

import numpy as np
from scipy import linalg

from ..errors import NumericalFailure, TooFewSamples, ZeroVariance
from ..models.representation import PreprocessedClass
from ..models.subspace import Spectrum, SubspaceBasis

logger = logging.getLogger(__name__)

DEFAULT_CPV = 0.95
NEGATIVE_EIGEN_TOLERANCE = 1e-10
ZERO_VARIANCE = 1e-15


def _orient_columns(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so that its largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _eigh(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    try:
        values, vectors = linalg.eigh(matrix, check_finite=False)
    except linalg.LinAlgError as e:
        raise NumericalFailure(f"Symmetric eigensolver did not converge: {e}") from e
    return values[::-1], vectors[:, ::-1]


def covariance_eigen(X: PreprocessedClass) -> Spectrum:
    """
    Eigen-decomposition of the scatter (1/m) X^T X of preprocessed rows.

    The feature-space scatter is decomposed directly when n <= m; otherwise
    the m x m Gram matrix is decomposed and its eigenvectors mapped back to
    feature space, which yields the same nonzero spectrum.

    Raises:
        NumericalFailure: The eigensolver did not converge
    """
    data = X.X
    m, n = data.shape
    if m < 2:
        raise TooFewSamples(m, 2)
    if n <= m:
        scatter = data.T @ data / m
        values, vectors = _eigh((scatter + scatter.T) / 2)
    else:
        gram = data @ data.T / m
        gram_values, gram_vectors = _eigh((gram + gram.T) / 2)
        keep = gram_values > NEGATIVE_EIGEN_TOLERANCE * max(1.0, gram_values[0])
        mapped = data.T @ gram_vectors[:, keep]
        mapped /= np.linalg.norm(mapped, axis=0)
        # Re-orthonormalize against round-off in the mapping.
        vectors, _ = np.linalg.qr(mapped)
        values = np.zeros(n)
        values[:keep.sum()] = gram_values[keep]
    if values.size and values[-1] < -NEGATIVE_EIGEN_TOLERANCE * max(1.0, values[0]):
        logger.warning(f"Scatter of class {X.class_id} has eigenvalue {values[-1]:.3e} < 0")
    values = np.clip(values, 0.0, None)
    logger.debug(
        f"Class {X.class_id}: scatter spectrum of {m}x{n} rows, "
        f"top eigenvalue {values[0]:.4g}"
    )
    return Spectrum(eigenvalues=values, eigenvectors=_orient_columns(vectors), sample_count=m)


def select_components(spectrum: Spectrum, threshold: float = DEFAULT_CPV) -> Tuple[int, float]:
    """
    Smallest k whose cumulative percentage variance reaches the threshold.

    k is capped at min(m - 1, n) when the sample count is known, so that
    the residual space is never empty by construction.

    Returns:
        (k, achieved CPV)

    Raises:
        ZeroVariance: The spectrum carries no variance
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"CPV threshold must lie in (0, 1], got {threshold}")
    cumulative = np.cumsum(spectrum.eigenvalues)
    total = cumulative[-1]
    if total < ZERO_VARIANCE:
        raise ZeroVariance(f"Total variance {total:.3e} is below {ZERO_VARIANCE}")
    cpv = cumulative / total
    k = int(np.argmax(cpv >= threshold)) + 1
    if spectrum.sample_count is not None:
        cap = max(1, min(spectrum.sample_count - 1, spectrum.n))
        if k > cap:
            logger.debug(f"CPV asked for k={k}; capped at {cap}")
            k = cap
    return k, float(cpv[k - 1])


def build_basis(spectrum: Spectrum, k: int) -> SubspaceBasis:
    """First k eigenvectors as the latent basis P."""
    if not 1 <= k <= spectrum.n:
        raise ValueError(f"k must lie in 1..{spectrum.n}, got {k}")
    vectors = spectrum.eigenvectors
    if k > spectrum.rank_computed:
        # Zero-eigenvalue directions were never materialized; any
        # orthonormal completion spans the same null block.
        if spectrum.rank_computed:
            completion = linalg.null_space(vectors.T)
        else:
            completion = np.eye(spectrum.n)
        vectors = np.hstack([vectors, _orient_columns(completion)])
    total = spectrum.total_variance
    cpv = float(spectrum.eigenvalues[:k].sum() / total) if total > 0 else 0.0
    return SubspaceBasis(P=vectors[:, :k], k=k, cpv=cpv)


def residual_gram(X: PreprocessedClass, P: SubspaceBasis) -> np.ndarray:
    """
    M = Y^T Y with Y the sample columns after projecting out span(P).

    Returns:
        Symmetric positive semi-definite m x m matrix
    """
    data = X.X
    if data.shape[1] != P.n:
        raise ValueError(f"{data.shape[1]} features but the basis lives in R^{P.n}")
    residual = data - (data @ P.P) @ P.P.T
    gram = residual @ residual.T
    return (gram + gram.T) / 2
