import json
import logging
import math
import os
from typing import Dict, Mapping, Optional

from ..errors import MalformedFile
from ..models.report import DetectionReport
from ..models.representation import RepresentationMatrix
from ..models.weights import ClassWeights, WeightVector
from ..utils.seeding import class_sort_key
from . import repr_store

logger = logging.getLogger(__name__)

WEIGHTS_INDEX = "index.json"


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def weights_filename(class_id: str) -> str:
    safe = ''.join(ch if ch.isalnum() or ch in '-_.' else '_' for ch in class_id)
    return f"class_{safe}.bin"


def save_weights(directory: str, outcomes: Mapping[str, ClassWeights]) -> str:
    """
    Write one m x 1 binary matrix per weighted class plus an index.

    Returns:
        Path of the index file
    """
    os.makedirs(directory, exist_ok=True)
    index = []
    for class_id in sorted(outcomes, key=class_sort_key):
        outcome = outcomes[class_id]
        entry = {
            'class_id': class_id,
            'm': outcome.m,
            'k': outcome.k,
            'cpv': outcome.cpv,
            'warnings': list(outcome.warnings),
            'file': None,
        }
        w = outcome.weights
        if w is not None:
            entry['file'] = weights_filename(class_id)
            repr_store.save_matrix(
                RepresentationMatrix(w.a[:, None]), os.path.join(directory, entry['file']), 'binary'
            )
            entry.update(
                lambda_star=w.lambda_star,
                row_map=list(w.row_map),
                spectral_gap=_finite_or_none(w.spectral_gap),
                degenerate_top_space=w.degenerate_top_space,
            )
        index.append(entry)
    path = os.path.join(directory, WEIGHTS_INDEX)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump({'classes': index}, f, indent=2)
    logger.info(f"Wrote weights for {len(index)} classes to {directory}")
    return path


def load_weights(directory: str) -> Dict[str, ClassWeights]:
    """Inverse of save_weights."""
    path = os.path.join(directory, WEIGHTS_INDEX)
    try:
        with open(path, encoding='utf-8') as f:
            index = json.load(f)['classes']
    except (OSError, ValueError, KeyError) as e:
        raise MalformedFile(path, f"unreadable weights index: {e}") from e

    outcomes: Dict[str, ClassWeights] = {}
    for entry in index:
        class_id = str(entry['class_id'])
        weights = None
        if entry.get('file'):
            column = repr_store.load_matrix(os.path.join(directory, entry['file']), 'binary')
            if column.n != 1:
                raise MalformedFile(entry['file'], f"expected one column, got {column.n}")
            gap = entry.get('spectral_gap')
            weights = WeightVector(
                a=column.data[:, 0],
                lambda_star=float(entry['lambda_star']),
                class_id=class_id,
                row_map=entry['row_map'],
                spectral_gap=float('inf') if gap is None else float(gap),
                degenerate_top_space=bool(entry.get('degenerate_top_space', False)),
            )
        outcomes[class_id] = ClassWeights(
            class_id=class_id, m=int(entry['m']), weights=weights,
            k=entry.get('k'), cpv=entry.get('cpv'), warnings=tuple(entry.get('warnings', [])),
        )
    return {c: outcomes[c] for c in sorted(outcomes, key=class_sort_key)}


def report_json(report: DetectionReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + '\n'


def save_report(path: str, report: DetectionReport) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(report_json(report))


def load_report(path: str) -> DetectionReport:
    try:
        with open(path, encoding='utf-8') as f:
            return DetectionReport.from_dict(json.load(f))
    except (ValueError, KeyError, TypeError) as e:
        raise MalformedFile(path, f"not a detection report: {e}") from e
