import json
import logging
import math
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from ..models.representation import LabeledDataset, RepresentationMatrix
from ..models.synthetic import GroundTruth, SubspaceModelConfig, SyntheticDataset
from ..utils.seeding import derive_seed
from . import repr_store

logger = logging.getLogger(__name__)


def principal_angles(B1: np.ndarray, B2: np.ndarray) -> np.ndarray:
    """Principal angles between span(B1) and span(B2), ascending, in radians."""
    B1 = np.atleast_2d(np.asarray(B1, dtype=np.float64))
    B2 = np.atleast_2d(np.asarray(B2, dtype=np.float64))
    if B1.shape[0] != B2.shape[0]:
        raise ValueError(f"Bases live in R^{B1.shape[0]} and R^{B2.shape[0]}")
    return np.sort(linalg.subspace_angles(B1, B2))


def _random_basis(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, d)))
    # Fix the QR sign ambiguity so the draw is uniform on the Stiefel manifold.
    return Q * np.sign(np.diag(R))


def _complement(rng: np.random.Generator, B: np.ndarray, width: int) -> np.ndarray:
    """`width` orthonormal columns orthogonal to span(B)."""
    draw = rng.standard_normal((B.shape[0], width))
    draw -= B @ (B.T @ draw)
    Q, _ = np.linalg.qr(draw)
    Q -= B @ (B.T @ Q)
    Q, _ = np.linalg.qr(Q)
    return Q


def _samples(rng: np.random.Generator, basis: np.ndarray, count: int, scale: float,
             noise_sigma: float, min_norm: float = 0.0) -> np.ndarray:
    """
    count rows of basis @ c + noise, c ~ N(0, scale^2 / d I).

    Coefficient draws shorter than min_norm * scale are redrawn, which
    keeps every latent code away from the class center.
    """
    d = basis.shape[1]
    coefficients = rng.standard_normal((count, d)) * scale / math.sqrt(d)
    short = np.linalg.norm(coefficients, axis=1) < min_norm * scale
    while short.any():
        coefficients[short] = rng.standard_normal((int(short.sum()), d)) * scale / math.sqrt(d)
        short = np.linalg.norm(coefficients, axis=1) < min_norm * scale
    noise = noise_sigma * rng.standard_normal((count, basis.shape[0]))
    return coefficients @ basis.T + noise


def _generate_class(cfg: SubspaceModelConfig, class_index: int) -> Tuple[np.ndarray, np.ndarray, dict]:
    """Rows for one class (authentic first, then poisoned) plus its clean draws."""
    rng = np.random.default_rng(derive_seed(cfg.seed, class_index))
    basis = _random_basis(rng, cfg.n, cfg.d)
    authentic = _samples(rng, basis, cfg.m_per_class, 1.0, cfg.noise_sigma, cfg.min_latent_norm)
    clean = _samples(rng, basis, cfg.clean_per_class, 1.0, cfg.noise_sigma,
                     cfg.min_latent_norm)
    planted = {'basis': basis, 'poison_bases': [], 'angles': [], 'poisoned': 0}
    if not (cfg.is_poisoned and class_index == cfg.infected_class):
        return authentic, clean, planted

    sources = cfg.poison_sources
    with_trigger = cfg.trigger_strength > 0
    directions = _complement(rng, basis, cfg.d * sources + (1 if with_trigger else 0))
    theta = cfg.subspace_angle
    poisoned = []
    for source, count in enumerate(np.array_split(np.arange(cfg.m_poison), sources)):
        U = directions[:, source * cfg.d:(source + 1) * cfg.d]
        rotated = math.cos(theta) * basis + math.sin(theta) * U
        rows = _samples(rng, rotated, count.size, math.sqrt(cfg.variance_ratio), cfg.noise_sigma,
                        cfg.min_latent_norm)
        if with_trigger:
            rows += cfg.trigger_strength * directions[:, -1]
        poisoned.append(rows)
        planted['poison_bases'].append(rotated)
        planted['angles'].append(principal_angles(basis, rotated).tolist())
    planted['poisoned'] = cfg.m_poison
    return np.vstack([authentic] + poisoned), clean, planted


def generate(cfg: SubspaceModelConfig) -> SyntheticDataset:
    """
    Draw a labeled dataset from the low-rank-subspace-plus-noise model.

    Every class gets a uniformly random d-dimensional basis and its own
    seed derived from cfg.seed, so classes can be generated in any order.
    The infected class additionally receives m_poison samples from
    subspaces rotated by subspace_angle away from its authentic basis,
    shifted by a shared trigger offset when trigger_strength > 0.

    Raises:
        InfeasibleConfig: The requested geometry does not fit in R^n
    """
    cfg.validate()
    blocks: List[np.ndarray] = []
    clean_blocks: List[np.ndarray] = []
    labels: List[str] = []
    truth = GroundTruth()
    offset = 0
    for class_index in range(cfg.T):
        rows, clean, planted = _generate_class(cfg, class_index)
        class_id = str(class_index)
        blocks.append(rows)
        clean_blocks.append(clean)
        labels.extend([class_id] * rows.shape[0])
        first_poisoned = offset + rows.shape[0] - planted['poisoned']
        truth.poisoned_indices[class_id] = list(range(first_poisoned, offset + rows.shape[0]))
        truth.class_spans[class_id] = (offset, offset + rows.shape[0])
        truth.bases[class_id] = planted['basis']
        if planted['poison_bases']:
            truth.poison_bases[class_id] = planted['poison_bases']
            truth.principal_angles[class_id] = planted['angles']
        offset += rows.shape[0]

    matrix = RepresentationMatrix(np.vstack(blocks))
    dataset = LabeledDataset(
        matrix=matrix, labels=tuple(labels), sample_ids=tuple(str(i) for i in range(matrix.m)),
    )
    clean = RepresentationMatrix(np.vstack(clean_blocks))
    logger.info(
        f"Generated {dataset.m} samples in {cfg.T} classes "
        f"({sum(len(v) for v in truth.poisoned_indices.values())} poisoned), "
        f"{clean.m} clean references"
    )
    return SyntheticDataset(
        dataset=dataset, clean=clean, reference=repr_store.compute_clean_mean(clean),
        ground_truth=truth, config=cfg,
    )


def save_synthetic(synthetic: SyntheticDataset, out_dir: str,
                   fmt: Optional[str] = None) -> Dict[str, str]:
    """
    Write train matrix, labels, clean matrix and ground truth into out_dir.

    Returns:
        Mapping of artifact name to the path written
    """
    ext = 'csv' if (fmt or 'csv') == 'csv' else 'bin'
    fmt = fmt or 'csv'
    paths = {
        'train': os.path.join(out_dir, f"train.{ext}"),
        'labels': os.path.join(out_dir, "labels.csv"),
        'clean': os.path.join(out_dir, f"clean.{ext}"),
        'ground_truth': os.path.join(out_dir, "ground_truth.json"),
    }
    repr_store.save_dataset(synthetic.dataset, paths['train'], paths['labels'], fmt)
    repr_store.save_matrix(synthetic.clean, paths['clean'], fmt)
    with open(paths['ground_truth'], 'w', encoding='utf-8') as f:
        json.dump(synthetic.ground_truth.to_dict(), f, indent=2, sort_keys=True)
    logger.info(f"Synthetic dataset written to {out_dir}")
    return paths


def load_ground_truth(path: str) -> GroundTruth:
    with open(path, encoding='utf-8') as f:
        return GroundTruth.from_dict(json.load(f))
