import logging
from dataclasses import asdict
from typing import Dict, Iterable, List, Sequence

from ..errors import ConfigError
from ..models.quarantine import ManifestEntry
from ..models.report import DetectionRates, DetectionReport, IdentificationRates
from ..models.synthetic import GroundTruth
from ..utils.seeding import class_sort_key

logger = logging.getLogger(__name__)


def _ratio(numerator: int, denominator: int):
    return numerator / denominator if denominator else None


def detection_rates(flagged: Iterable[str], infected: Iterable[str],
                    all_classes: Sequence[str]) -> DetectionRates:
    """
    Args:
        flagged: Classes the detector flagged
        infected: Classes that really carry poisoned samples
        all_classes: Every class that was scored

    Returns:
        DetectionRates; a rate is None when its denominator is empty
    """
    flagged = {str(c) for c in flagged}
    infected = {str(c) for c in infected}
    clean = {str(c) for c in all_classes} - infected
    hits = sorted(flagged & infected, key=class_sort_key)
    false_alarms = sorted(flagged - infected, key=class_sort_key)
    return DetectionRates(
        tpr=_ratio(len(hits), len(infected)),
        fpr=_ratio(len(false_alarms), len(clean)),
        true_positives=hits,
        false_positives=false_alarms,
    )


def identification_rates(quarantined: Iterable[int], poisoned: Iterable[int],
                         class_rows: Iterable[int]) -> IdentificationRates:
    """
    Args:
        quarantined: Rows removed by mitigation
        poisoned: Rows that really are poisoned
        class_rows: Every row of the classes under consideration
    """
    quarantined = set(quarantined)
    poisoned = set(poisoned)
    authentic = set(class_rows) - poisoned
    return IdentificationRates(
        tpr=_ratio(len(quarantined & poisoned), len(poisoned)),
        fpr=_ratio(len(quarantined & authentic), len(authentic)),
        quarantined=len(quarantined),
        poisoned=len(poisoned),
        authentic=len(authentic),
    )


def _row_index(entry: ManifestEntry) -> int:
    try:
        return int(entry.sample_id)
    except ValueError as e:
        raise ConfigError(
            f"Manifest sample_id {entry.sample_id!r} is not a row index; "
            "evaluation needs the default row-index sample ids"
        ) from e


def evaluate_run(report: DetectionReport, manifest: Sequence[ManifestEntry],
                 truth: GroundTruth) -> Dict[str, dict]:
    """
    Score a run against the generator's ground truth.

    Identification is measured over the rows of the flagged classes, as
    laid out in the ground truth's class spans.

    Raises:
        ConfigError: A manifest id is not a row index, or a flagged class
            has no span in the ground truth
    """
    classes = [record.class_id for record in report.classes]
    detection = detection_rates(report.infected_classes, truth.infected_classes, classes)

    quarantined = {_row_index(entry) for entry in manifest}
    poisoned: List[int] = []
    class_rows: List[int] = []
    for class_id in report.infected_classes:
        if class_id not in truth.class_spans:
            raise ConfigError(f"Ground truth has no rows for flagged class {class_id}")
        start, stop = truth.class_spans[class_id]
        class_rows.extend(range(start, stop))
        poisoned.extend(truth.poisoned_indices.get(class_id, []))
    identification = identification_rates(quarantined, poisoned, class_rows)
    logger.info(
        f"Detection TPR={detection.tpr} FPR={detection.fpr}; "
        f"identification TPR={identification.tpr} FPR={identification.fpr}"
    )
    return {'detection': asdict(detection), 'identification': asdict(identification)}
