import csv
import logging
import os
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..config import KMeansSettings
from ..errors import DegenerateInput, IndexOutOfRange, TooFewSamples
from ..models.quarantine import ClusterAssignment, ManifestEntry, QuarantineResult
from ..models.representation import LabeledDataset

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = ['sample_id', 'class_id', 'weight', 'cluster', 'flag']


def _inertia(a: np.ndarray, labels: np.ndarray) -> Tuple[float, float, float]:
    c0 = float(a[labels == 0].mean())
    c1 = float(a[labels == 1].mean())
    inertia = float(np.sum((a[labels == 0] - c0) ** 2) + np.sum((a[labels == 1] - c1) ** 2))
    return c0, c1, inertia


def optimal_split(a: Sequence[float]) -> Tuple[float, float]:
    """
    Global 1-D 2-means optimum by scanning contiguous splits of the sorted values.

    Returns:
        (threshold, inertia); values <= threshold form the lower cluster
    """
    values = np.sort(np.asarray(a, dtype=np.float64))
    m = values.size
    # Splits between equal values never beat the tie-respecting ones.
    cuts = np.flatnonzero(values[:-1] < values[1:]) + 1
    if cuts.size == 0:
        raise DegenerateInput("All entries are equal; no two-cluster split exists")
    prefix = np.concatenate([[0.0], np.cumsum(values)])
    prefix_sq = np.concatenate([[0.0], np.cumsum(values ** 2)])
    left_n = cuts.astype(np.float64)
    right_n = m - left_n
    left_sse = prefix_sq[cuts] - prefix[cuts] ** 2 / left_n
    right_sse = (prefix_sq[m] - prefix_sq[cuts]) - (prefix[m] - prefix[cuts]) ** 2 / right_n
    best = cuts[int(np.argmin(left_sse + right_sse))]
    threshold = float(values[best - 1])
    labels = (np.asarray(a) > threshold).astype(np.intp)
    return threshold, _inertia(np.asarray(a, dtype=np.float64), labels)[2]


def kmeans_1d(a: Sequence[float], settings: Optional[KMeansSettings] = None) -> ClusterAssignment:
    """
    Lloyd's algorithm on scalar weights, started at the 25th/75th percentiles.

    Label 0 is the lower-valued cluster. If the Lloyd fixpoint is worse
    than the contiguous-split optimum, the optimum is adopted and the
    result is marked `refined`.

    Raises:
        TooFewSamples: Fewer than two entries
        DegenerateInput: All entries equal within 1e-15
    """
    settings = settings or KMeansSettings()
    a = np.asarray(a, dtype=np.float64)
    if a.size < 2:
        raise TooFewSamples(a.size, 2)
    if np.ptp(a) <= 1e-15:
        raise DegenerateInput("All entries are equal; no two-cluster split exists")

    c0, c1 = (float(x) for x in np.percentile(a, [25, 75]))
    if c1 <= c0:
        c0, c1 = float(a.min()), float(a.max())
    labels = (np.abs(a - c1) < np.abs(a - c0)).astype(np.intp)
    trace: List[float] = []
    iterations = 0
    for iterations in range(1, settings.max_iter + 1):
        c0, c1, inertia = _inertia(a, labels)
        trace.append(inertia)
        updated = (np.abs(a - c1) < np.abs(a - c0)).astype(np.intp)
        if np.array_equal(updated, labels):
            break
        labels = updated

    refined = False
    threshold, best_inertia = optimal_split(a)
    if best_inertia < trace[-1] - 1e-12 * max(1.0, trace[-1]):
        logger.debug(
            f"Lloyd stopped at inertia {trace[-1]:.6g}; adopting the optimal split "
            f"({best_inertia:.6g})"
        )
        labels = (a > threshold).astype(np.intp)
        refined = True
    c0, c1, inertia = _inertia(a, labels)
    return ClusterAssignment(
        labels=labels, centers=(c0, c1), iterations=iterations, inertia=inertia,
        values=a, inertia_trace=tuple(trace), refined=refined,
    )


def identify_poisoned(assign: ClusterAssignment, row_map: Sequence[int],
                      class_id: str = '') -> QuarantineResult:
    """
    The strictly smaller cluster is poisoned; on a size tie, the cluster
    whose center has the larger absolute value.
    """
    if len(row_map) != assign.labels.size:
        raise ValueError("row_map length does not match the cluster labels")
    size0, size1 = assign.sizes
    tie = size0 == size1
    if size0 != size1:
        poisoned = 0 if size0 < size1 else 1
    else:
        c0, c1 = assign.centers
        poisoned = 1 if (abs(c1), c1) >= (abs(c0), c0) else 0
    members = assign.members(poisoned)
    others = assign.members(1 - poisoned)
    result = QuarantineResult(
        class_id=str(class_id),
        poisoned_indices=tuple(int(row_map[i]) for i in members),
        clean_indices=tuple(int(row_map[i]) for i in others),
        cluster_size_ratio=members.size / assign.labels.size,
        poisoned_cluster=poisoned,
        poisoned_weights=tuple(float(assign.values[i]) for i in members),
        tie_broken=tie,
        suspicious_singleton=members.size == 1,
    )
    if result.flags:
        logger.warning(f"Class {class_id}: quarantine flagged {', '.join(result.flags)}")
    logger.info(
        f"Class {class_id}: {members.size} of {assign.labels.size} samples quarantined"
    )
    return result


def emit_cleaned(ds: LabeledDataset,
                 quarantines: Iterable[QuarantineResult]) -> Tuple[LabeledDataset, List[ManifestEntry]]:
    """
    Drop every quarantined sample and list the removed ones.

    Raises:
        IndexOutOfRange: A quarantined index does not exist in ds
    """
    entries = []
    removed = set()
    for result in quarantines:
        flag = ';'.join(result.flags)
        weights = result.poisoned_weights or (float('nan'),) * len(result.poisoned_indices)
        for index, weight in zip(result.poisoned_indices, weights):
            if not 0 <= index < ds.m:
                raise IndexOutOfRange(index, ds.m)
            if ds.labels[index] != result.class_id:
                logger.warning(
                    f"Sample {index} is labeled {ds.labels[index]} but quarantined "
                    f"from class {result.class_id}"
                )
            removed.add(index)
            entries.append((index, ManifestEntry(
                sample_id=ds.sample_ids[index], class_id=result.class_id,
                weight=weight, cluster=result.poisoned_cluster, flag=flag,
            )))
    if not removed:
        return ds, []
    keep = [i for i in range(ds.m) if i not in removed]
    entries.sort(key=lambda pair: pair[0])
    return ds.take(keep), [entry for _, entry in entries]


def write_manifest(path: str, entries: Sequence[ManifestEntry]) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_FIELDS)
        for entry in entries:
            writer.writerow([entry.sample_id, entry.class_id, repr(entry.weight),
                             entry.cluster, entry.flag])


def read_manifest(path: str) -> List[ManifestEntry]:
    with open(path, newline='') as f:
        return [
            ManifestEntry(
                sample_id=row['sample_id'], class_id=row['class_id'],
                weight=float(row['weight']), cluster=int(row['cluster']),
                flag=row.get('flag') or '',
            )
            for row in csv.DictReader(f)
        ]
