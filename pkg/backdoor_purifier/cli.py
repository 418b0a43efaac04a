import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace
from typing import Any, Callable, Dict, List, Optional

from . import __version__
from .config import RunConfig
from .errors import ConfigError, PurifierError, TooFewPoints
from .models.synthetic import SubspaceModelConfig
from .pipeline import PurifierPipeline
from .services import artifacts, evaluation, flattening, mitigation, repr_store, synthetic
from .utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2
EXIT_DETECTED = 3

# argparse dest -> RunConfig field
FLAG_FIELDS = {
    'train': 'train',
    'labels': 'labels',
    'clean': 'clean',
    'out': 'out',
    'format': 'format',
    'cpv': 'cpv_threshold',
    'tau': 'tau',
    'knn': 'k_nn',
    'seed': 'seed',
    'threads': 'threads',
    'fail_on_detect': 'fail_on_detect',
    'weights': 'weights',
    'report': 'report',
    'manifest': 'manifest',
    'ground_truth': 'ground_truth',
    'log_file': 'log_file',
    'log_level': 'log_level',
}

# Flags whose value must name an existing file or directory.
INPUT_FLAGS = ('train', 'labels', 'clean', 'weights', 'report', 'manifest', 'ground_truth')

SYNTH_FLAGS = {f.name for f in fields(SubspaceModelConfig)} - {'seed'}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='YAML or JSON config file; flags override it')
    parser.add_argument('--seed', type=int, help='Global seed (default: 0)')
    parser.add_argument('--format', choices=repr_store.FORMATS,
                        help='Matrix file format (default: inferred from the extension)')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'])
    parser.add_argument('--log-file', help='Also write logs to this file')


def _add_inputs(parser: argparse.ArgumentParser, clean: bool = True) -> None:
    parser.add_argument('--train', help='Training representation matrix')
    parser.add_argument('--labels', help='Label file (sample_index,class_id[,sample_id])')
    if clean:
        parser.add_argument('--clean', help='Clean reference representation matrix')


def _add_detection(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--tau', type=float, help='Anomaly index threshold (default: 3.0)')
    parser.add_argument('--fail-on-detect', action='store_true', default=None,
                        help=f'Exit with {EXIT_DETECTED} when a class is flagged')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='backdoor-purifier',
        description='Detect backdoor-poisoned classes from last-layer representations '
                    'and quarantine the poisoned samples.',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    analyze = commands.add_parser('analyze', help='Run the whole pipeline')
    _add_inputs(analyze)
    analyze.add_argument('--out', help='Output directory for report, weights, manifest and cleaned data')
    analyze.add_argument('--cpv', type=float, help='CPV threshold for the latent basis (default: 0.95)')
    _add_detection(analyze)
    analyze.add_argument('--threads', type=int, help='Classes processed in parallel')

    weights = commands.add_parser('weights', help='Compute per-class weight vectors')
    _add_inputs(weights)
    weights.add_argument('--weights', help='Directory to write the weight vectors to')
    weights.add_argument('--cpv', type=float, help='CPV threshold for the latent basis (default: 0.95)')
    weights.add_argument('--threads', type=int, help='Classes processed in parallel')

    detect = commands.add_parser('detect', help='Flag infected classes from stored weights')
    detect.add_argument('--weights', help='Directory written by the weights command')
    detect.add_argument('--report', help='Write the report here instead of stdout')
    _add_detection(detect)
    detect.add_argument('--threads', type=int, help='Classes processed in parallel')

    mitigate = commands.add_parser('mitigate', help='Quarantine poisoned samples of flagged classes')
    _add_inputs(mitigate, clean=False)
    mitigate.add_argument('--weights', help='Directory written by the weights command')
    mitigate.add_argument('--report', help='Report written by the detect command')
    mitigate.add_argument('--out', help='Output directory for the manifest and cleaned data')

    flatten = commands.add_parser('flatten', help='Flattening metric of a point cloud')
    _add_inputs(flatten, clean=False)
    flatten.add_argument('--knn', type=int, help='Neighbors per point (default: 10)')

    synth = commands.add_parser('synth', help='Generate a synthetic dataset with ground truth')
    synth.add_argument('--out', help='Output directory')
    synth.add_argument('--n', type=int, help='Ambient dimension')
    synth.add_argument('--T', type=int, help='Number of classes')
    synth.add_argument('--d', type=int, help='Subspace rank per class')
    synth.add_argument('--m-per-class', type=int, help='Authentic samples per class')
    synth.add_argument('--infected-class', type=int, help='Index of the infected class')
    synth.add_argument('--m-poison', type=int, help='Poisoned samples (0 for a clean dataset)')
    synth.add_argument('--noise-sigma', type=float, help='Global noise standard deviation')
    synth.add_argument('--subspace-angle', type=float, help='Poisoned subspace angle in radians')
    synth.add_argument('--variance-ratio', type=float, help='Poisoned / authentic coefficient variance')
    synth.add_argument('--trigger-strength', type=float, help='Norm of the shared trigger offset')
    synth.add_argument('--poison-sources', type=int, help='Number of poisoned source subspaces')
    synth.add_argument('--clean-rate', type=float, help='Held-out clean samples per class, as a fraction')
    synth.add_argument('--min-latent-norm', type=float,
                       help='Smallest latent code norm, as a fraction of the class scale')

    evaluate = commands.add_parser('evaluate', help='Score a run against synthetic ground truth')
    evaluate.add_argument('--report', help='Detection report')
    evaluate.add_argument('--manifest', help='Quarantine manifest')
    evaluate.add_argument('--ground-truth', help='ground_truth.json written by synth')

    for sub in (analyze, weights, detect, mitigate, flatten, synth, evaluate):
        _add_common(sub)
    return parser


def build_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> RunConfig:
    """File config first, then flags; configuration problems are usage errors."""
    flags = {
        field_name: getattr(args, dest)
        for dest, field_name in FLAG_FIELDS.items() if hasattr(args, dest)
    }
    try:
        config = RunConfig.from_file(args.config).with_overrides(**flags)
        synth_flags = {
            name: getattr(args, name) for name in SYNTH_FLAGS
            if getattr(args, name, None) is not None
        }
        if args.command == 'synth' and args.seed is not None:
            synth_flags['seed'] = args.seed
        if synth_flags:
            config = replace(config, synth=replace(config.synth, **synth_flags))
        return config.validate()
    except ConfigError as e:
        parser.error(str(e))


def _require(parser: argparse.ArgumentParser, config: RunConfig, *names: str) -> None:
    """Exit with a usage error naming the flag of any missing or unreadable input."""
    for name in names:
        value = getattr(config, FLAG_FIELDS.get(name, name))
        flag = '--' + name.replace('_', '-')
        if not value:
            parser.error(f"{flag} is required")
        if name in INPUT_FLAGS and not os.path.exists(value):
            parser.error(f"{flag}: no such file or directory: {value}")


def _emit(payload: Any) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True, allow_nan=False)
    sys.stdout.write('\n')


def _detected_exit(config: RunConfig, infected: List[str]) -> int:
    return EXIT_DETECTED if config.fail_on_detect and infected else EXIT_OK


def run_analyze(parser, config: RunConfig) -> int:
    _require(parser, config, 'train', 'labels', 'clean')
    result = PurifierPipeline(config).analyze()
    if not config.out:
        sys.stdout.write(artifacts.report_json(result.report))
    return _detected_exit(config, result.report.infected_classes)


def run_weights(parser, config: RunConfig) -> int:
    _require(parser, config, 'train', 'labels', 'clean')
    if not config.weights:
        parser.error("--weights is required")
    pipeline = PurifierPipeline(config)
    dataset, reference = pipeline.load_inputs()
    outcomes = pipeline.compute_weights(dataset, reference)
    artifacts.save_weights(config.weights, outcomes)
    pipeline.finish()
    return EXIT_OK


def run_detect(parser, config: RunConfig) -> int:
    _require(parser, config, 'weights')
    pipeline = PurifierPipeline(config)
    report = pipeline.detect(artifacts.load_weights(config.weights))
    pipeline.finish(report)
    if config.report:
        artifacts.save_report(config.report, report)
    else:
        sys.stdout.write(artifacts.report_json(report))
    return _detected_exit(config, report.infected_classes)


def run_mitigate(parser, config: RunConfig) -> int:
    _require(parser, config, 'train', 'labels', 'weights', 'report')
    if not config.out:
        parser.error("--out is required")
    pipeline = PurifierPipeline(config)
    dataset = repr_store.load_dataset(config.train, config.labels, config.format)
    report = artifacts.load_report(config.report)
    cleaned, manifest, _ = pipeline.mitigate(dataset, artifacts.load_weights(config.weights), report)
    fmt = config.format or repr_store.infer_format(config.train)
    ext = 'csv' if fmt == 'csv' else 'bin'
    mitigation.write_manifest(os.path.join(config.out, 'manifest.csv'), manifest)
    repr_store.save_dataset(
        cleaned, os.path.join(config.out, f'cleaned.{ext}'),
        os.path.join(config.out, 'cleaned_labels.csv'), fmt,
    )
    pipeline.finish()
    _emit({'quarantined': len(manifest), 'remaining': cleaned.m})
    return EXIT_OK


def run_flatten(parser, config: RunConfig) -> int:
    _require(parser, config, 'train')
    setup_logging(config.get_log_level(), config.monitoring.log_file)
    if config.labels:
        _require(parser, config, 'labels')
        dataset = repr_store.load_dataset(config.train, config.labels, config.format)
        per_class: Dict[str, Any] = {}
        for class_id, partition in repr_store.partition_by_class(dataset).items():
            try:
                per_class[class_id] = flattening.flatten_point_cloud(
                    partition.matrix, config.k_nn).to_dict()
            except TooFewPoints as e:
                logger.warning(f"Class {class_id} skipped: {e}")
                per_class[class_id] = {'error': type(e).__name__}
        _emit({'k_nn': config.k_nn, 'classes': per_class})
    else:
        matrix = repr_store.load_matrix(config.train, config.format)
        _emit(flattening.flatten_point_cloud(matrix, config.k_nn).to_dict())
    return EXIT_OK


def run_synth(parser, config: RunConfig) -> int:
    if not config.out:
        parser.error("--out is required")
    setup_logging(config.get_log_level(), config.monitoring.log_file)
    generated = synthetic.generate(config.synth)
    paths = synthetic.save_synthetic(generated, config.out, config.format)
    _emit({'files': paths, 'infected_classes': generated.ground_truth.infected_classes})
    return EXIT_OK


def run_evaluate(parser, config: RunConfig) -> int:
    _require(parser, config, 'report', 'manifest', 'ground_truth')
    setup_logging(config.get_log_level(), config.monitoring.log_file)
    scores = evaluation.evaluate_run(
        artifacts.load_report(config.report),
        mitigation.read_manifest(config.manifest),
        synthetic.load_ground_truth(config.ground_truth),
    )
    _emit(scores)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.ArgumentParser, RunConfig], int]] = {
    'analyze': run_analyze,
    'weights': run_weights,
    'detect': run_detect,
    'mitigate': run_mitigate,
    'flatten': run_flatten,
    'synth': run_synth,
    'evaluate': run_evaluate,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = build_config(parser, args)
        return COMMANDS[args.command](parser, config)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except PurifierError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_DATA_ERROR
