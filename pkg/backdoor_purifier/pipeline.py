import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

from .config import RunConfig
from .errors import (
    ConfigError,
    DegenerateInput,
    DegenerateObjective,
    PurifierError,
    TooFewSamples,
    ZeroVariance,
)
from .models.quarantine import ManifestEntry, QuarantineResult
from .models.report import ClassRecord, DetectionReport
from .models.representation import ClassPartition, CleanReference, LabeledDataset
from .models.weights import ClassWeights
from .services import artifacts, coherence, detection, mitigation, repr_store
from .utils.logging_config import setup_logging
from .utils.seeding import class_sort_key, derive_seed
from .utils.time_utils import StageTimer

try:
    import prometheus_client as prom
    METRICS_AVAILABLE = True
except ImportError:
    METRICS_AVAILABLE = False

T = TypeVar('T')
R = TypeVar('R')

# Per-class failures that leave the rest of the run meaningful.
RECOVERABLE = (DegenerateObjective, TooFewSamples, ZeroVariance, DegenerateInput)


@dataclass
class AnalysisResult:
    """Everything one analyze run produced."""
    report: DetectionReport
    weights: Dict[str, ClassWeights]
    quarantines: List[QuarantineResult] = field(default_factory=list)
    manifest: List[ManifestEntry] = field(default_factory=list)
    cleaned: Optional[LabeledDataset] = None
    outputs: Dict[str, str] = field(default_factory=dict)


class PurifierPipeline:
    """Detects backdoor-infected classes and quarantines their poisoned samples."""

    def __init__(self, config: RunConfig):
        """
        Initialize the pipeline with configuration.

        Args:
            config: RunConfig holding paths, thresholds and stage settings
        """
        self.config = config.validate()

        # Set up logging
        setup_logging(
            level=config.get_log_level(),
            log_file=config.monitoring.log_file
        )
        self.logger = logging.getLogger(__name__)
        self.timer = StageTimer()

        # Set up metrics if enabled
        self.metrics = self._setup_metrics() if (
            config.monitoring.enable_metrics and METRICS_AVAILABLE
        ) else None
        if config.monitoring.enable_metrics and not METRICS_AVAILABLE:
            self.logger.warning("Metrics requested but prometheus_client is not installed")

    def _setup_metrics(self) -> Dict[str, Any]:
        """Set up Prometheus metrics in a private registry."""
        registry = prom.CollectorRegistry()
        return {
            'registry': registry,
            'stage_seconds': prom.Histogram(
                'purifier_stage_seconds',
                'Time spent in each pipeline stage',
                ['stage'],
                registry=registry
            ),
            'classes_flagged': prom.Gauge(
                'purifier_classes_flagged',
                'Number of classes flagged as infected',
                registry=registry
            ),
            'samples_quarantined': prom.Counter(
                'purifier_samples_quarantined_total',
                'Total number of samples removed from the training set',
                registry=registry
            ),
        }

    def _write_metrics(self) -> None:
        if not self.metrics:
            return
        for stage, seconds in self.timer.as_dict().items():
            self.metrics['stage_seconds'].labels(stage=stage).observe(seconds)
        path = self.config.monitoring.metrics_file
        prom.write_to_textfile(path, self.metrics['registry'])
        self.logger.info(f"Metrics written to {path}")

    def _map_classes(self, func: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """Run func over per-class items; results come back in input order."""
        threads = min(self.config.threads, max(1, len(items)))
        if threads == 1:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))

    def _require(self, **paths: Optional[str]) -> None:
        missing = [name for name, value in paths.items() if not value]
        if missing:
            raise ConfigError(
                "Missing required input(s): " + ", ".join(f"--{name}" for name in missing)
            )

    def load_inputs(self) -> Tuple[LabeledDataset, CleanReference]:
        """Load the training set and the clean reference mean."""
        cfg = self.config
        self._require(train=cfg.train, labels=cfg.labels, clean=cfg.clean)
        with self.timer.stage('load'):
            dataset = repr_store.load_dataset(cfg.train, cfg.labels, cfg.format)
            clean = repr_store.load_matrix(cfg.clean, cfg.format)
            reference = repr_store.compute_clean_mean(clean)
        if reference.mean.shape[0] != dataset.matrix.n:
            raise ConfigError(
                f"Clean matrix has {reference.mean.shape[0]} features, "
                f"training matrix has {dataset.matrix.n}"
            )
        return dataset, reference

    def _weigh(self, partition: ClassPartition, reference: CleanReference) -> ClassWeights:
        class_id = partition.class_id
        try:
            X = repr_store.preprocess(partition, reference)
            weights, basis = coherence.weigh_class(X, self.config.cpv_threshold)
        except RECOVERABLE as e:
            self.logger.warning(f"Class {class_id} skipped: {e}")
            return ClassWeights(
                class_id=class_id, m=partition.matrix.m, warnings=(type(e).__name__,)
            )
        except PurifierError as e:
            raise e.with_class(class_id)
        warnings = ('degenerate_top_space',) if weights.degenerate_top_space else ()
        return ClassWeights(
            class_id=class_id, m=X.m, weights=weights, k=basis.k, cpv=basis.cpv,
            warnings=warnings,
        )

    def compute_weights(self, dataset: LabeledDataset,
                        reference: CleanReference) -> Dict[str, ClassWeights]:
        """
        Per class: preprocess, pick the latent basis and optimize the weights.

        Returns:
            ClassWeights keyed by class id, in sorted class order
        """
        partitions = list(repr_store.partition_by_class(dataset).values())
        with self.timer.stage('weights'):
            outcomes = self._map_classes(partial(self._weigh, reference=reference), partitions)
        self.logger.info(
            f"Weighted {sum(o.ok for o in outcomes)} of {len(outcomes)} classes"
        )
        return {outcome.class_id: outcome for outcome in outcomes}

    def _fit(self, outcome: ClassWeights) -> Tuple[str, float, List[str]]:
        a = outcome.weights.a
        seed = derive_seed(self.config.seed, outcome.class_id)
        try:
            null = detection.fit_gaussian(a, self.config.em.variance_floor)
            mixture = detection.fit_gmm2(a, self.config.em, seed=seed)
        except PurifierError as e:
            raise e.with_class(outcome.class_id)
        warnings = ['CollapsedMixture'] if mixture.collapsed else []
        J = detection.likelihood_ratio(null, mixture)
        self.logger.debug(
            f"Class {outcome.class_id}: J={J:.6g} ({mixture.iterations} EM iterations)"
        )
        return outcome.class_id, J, warnings

    def detect(self, outcomes: Dict[str, ClassWeights]) -> DetectionReport:
        """Likelihood-ratio statistics, anomaly indices and infected flags."""
        cfg = self.config
        dof = detection.SHARED_VARIANCE_DOF if cfg.em.shared_variance else detection.MIXTURE_DOF
        class_ids = sorted(outcomes, key=class_sort_key)
        with self.timer.stage('detect'):
            fitted = self._map_classes(
                self._fit, [outcomes[c] for c in class_ids if outcomes[c].ok]
            )
            J_by_class = {class_id: J for class_id, J, _ in fitted}
            fit_warnings = {class_id: w for class_id, _, w in fitted}
            scored, median, spread, warnings = detection.score_classes(J_by_class, cfg.tau, dof)
        by_class = {s.class_id: s for s in scored}

        records = []
        for class_id in class_ids:
            outcome = outcomes[class_id]
            record = ClassRecord(
                class_id=class_id, m=outcome.m, k=outcome.k, cpv_achieved=outcome.cpv,
                warnings=list(outcome.warnings) + fit_warnings.get(class_id, []),
            )
            if outcome.ok:
                stats = by_class[class_id]
                record.lambda_star = outcome.weights.lambda_star
                record.J = stats.J
                record.J_hat = stats.J_hat
                record.infected = stats.infected
                record.p_value = stats.p_value
            records.append(record)

        report = DetectionReport(
            tau=cfg.tau,
            confidence_level=detection.confidence_level(cfg.tau),
            cpv_threshold=cfg.cpv_threshold,
            seed=cfg.seed,
            median_J=median,
            apd=spread,
            classes=records,
            warnings=warnings,
        )
        self.logger.info(
            f"Flagged {len(report.infected_classes)} of {len(records)} classes: "
            f"{', '.join(report.infected_classes) or 'none'}"
        )
        if self.metrics:
            self.metrics['classes_flagged'].set(len(report.infected_classes))
        return report

    def mitigate(self, dataset: LabeledDataset, outcomes: Dict[str, ClassWeights],
                 report: DetectionReport) -> Tuple[LabeledDataset, List[ManifestEntry], List[QuarantineResult]]:
        """Split each flagged class in two and drop the poisoned cluster."""
        quarantines = []
        with self.timer.stage('mitigate'):
            for class_id in report.infected_classes:
                outcome = outcomes.get(class_id)
                if outcome is None or not outcome.ok:
                    raise ConfigError(f"No weights for flagged class {class_id}")
                w = outcome.weights
                try:
                    assignment = mitigation.kmeans_1d(w.a, self.config.kmeans)
                except RECOVERABLE as e:
                    self.logger.warning(f"Class {class_id} not quarantined: {e}")
                    continue
                result = mitigation.identify_poisoned(assignment, w.row_map, class_id)
                quarantines.append(result)
            cleaned, manifest = mitigation.emit_cleaned(dataset, quarantines)
        if self.metrics:
            self.metrics['samples_quarantined'].inc(len(manifest))
        self.logger.info(f"Quarantined {len(manifest)} of {dataset.m} samples")
        return cleaned, manifest, quarantines

    def write_outputs(self, result: AnalysisResult) -> Dict[str, str]:
        """Lay out report, weights, manifest and cleaned dataset under config.out."""
        out = self.config.out
        os.makedirs(out, exist_ok=True)
        fmt = self.config.format or repr_store.infer_format(self.config.train or '')
        ext = 'csv' if fmt == 'csv' else 'bin'
        paths = {
            'report': os.path.join(out, 'report.json'),
            'weights': os.path.join(out, 'weights'),
            'manifest': os.path.join(out, 'manifest.csv'),
            'cleaned': os.path.join(out, f'cleaned.{ext}'),
            'cleaned_labels': os.path.join(out, 'cleaned_labels.csv'),
        }
        artifacts.save_report(paths['report'], result.report)
        artifacts.save_weights(paths['weights'], result.weights)
        mitigation.write_manifest(paths['manifest'], result.manifest)
        repr_store.save_dataset(result.cleaned, paths['cleaned'], paths['cleaned_labels'], fmt)
        self.logger.info(f"Outputs written to {out}")
        return paths

    def analyze(self) -> AnalysisResult:
        """
        Run the whole pipeline: load, weigh, detect, mitigate and, when an
        output directory is configured, write every artifact.

        Returns:
            AnalysisResult with the report and the quarantine outcome
        """
        self.logger.info(
            f"Analyzing {self.config.train} (cpv={self.config.cpv_threshold}, "
            f"tau={self.config.tau}, threads={self.config.threads})"
        )
        dataset, reference = self.load_inputs()
        outcomes = self.compute_weights(dataset, reference)
        report = self.detect(outcomes)
        cleaned, manifest, quarantines = self.mitigate(dataset, outcomes, report)
        report.runtime_seconds = self.timer.as_dict()
        result = AnalysisResult(
            report=report, weights=outcomes, quarantines=quarantines,
            manifest=manifest, cleaned=cleaned,
        )
        if self.config.out:
            result.outputs = self.write_outputs(result)
        self._write_metrics()
        return result

    def finish(self, report: Optional[DetectionReport] = None) -> None:
        """Stamp stage runtimes on a staged run's report and flush metrics."""
        if report is not None:
            report.runtime_seconds = self.timer.as_dict()
        self._write_metrics()
