from dataclasses import replace

import numpy as np
import pytest

from backdoor_purifier.config import MonitoringSettings, RunConfig
from backdoor_purifier.errors import ConfigError
from backdoor_purifier.models.synthetic import SubspaceModelConfig
from backdoor_purifier.pipeline import PurifierPipeline
from backdoor_purifier.services import artifacts, evaluation, mitigation, repr_store, synthetic
from tests.conftest import SMALL_CONFIG


def _config(files, **changes):
    return RunConfig(
        train=files['train'], labels=files['labels'], clean=files['clean'], threads=1, **changes
    )


def _without_runtime(report):
    payload = report.to_dict()
    payload.pop('runtime_seconds')
    return payload


def test_analyze_finds_the_infected_class(small_files, small_synthetic):
    result = PurifierPipeline(_config(small_files)).analyze()
    report = result.report
    assert report.infected_classes == ['0']
    assert report.record('0').J > max(r.J for r in report.classes if r.class_id != '0')
    assert set(report.runtime_seconds) >= {'load', 'weights', 'detect', 'mitigate'}

    scores = evaluation.evaluate_run(report, result.manifest, small_synthetic.ground_truth)
    assert scores['identification']['tpr'] >= 0.95
    assert scores['identification']['fpr'] <= 0.05
    assert result.cleaned.m == small_synthetic.dataset.m - len(result.manifest)


def test_thread_count_does_not_change_the_report(small_files):
    single = PurifierPipeline(_config(small_files)).analyze()
    pooled = PurifierPipeline(replace(_config(small_files), threads=4)).analyze()
    assert _without_runtime(single.report) == _without_runtime(pooled.report)
    assert single.manifest == pooled.manifest


def test_staged_run_matches_analyze(small_files, tmp_path):
    config = _config(small_files)
    expected = PurifierPipeline(config).analyze()

    pipeline = PurifierPipeline(config)
    dataset, reference = pipeline.load_inputs()
    artifacts.save_weights(str(tmp_path / 'weights'), pipeline.compute_weights(dataset, reference))
    stored = artifacts.load_weights(str(tmp_path / 'weights'))
    report = pipeline.detect(stored)
    assert _without_runtime(report) == _without_runtime(expected.report)

    artifacts.save_report(str(tmp_path / 'report.json'), report)
    reloaded = artifacts.load_report(str(tmp_path / 'report.json'))
    _, manifest, _ = pipeline.mitigate(dataset, stored, reloaded)
    assert manifest == expected.manifest


def test_analyze_writes_every_artifact(small_files, tmp_path):
    out = tmp_path / 'out'
    result = PurifierPipeline(_config(small_files, out=str(out))).analyze()
    assert (out / 'report.json').exists()
    assert (out / 'weights' / artifacts.WEIGHTS_INDEX).exists()
    assert mitigation.read_manifest(str(out / 'manifest.csv')) == result.manifest
    cleaned = repr_store.load_dataset(str(out / 'cleaned.csv'), str(out / 'cleaned_labels.csv'))
    assert cleaned.sample_ids == result.cleaned.sample_ids
    assert artifacts.load_report(str(out / 'report.json')).infected_classes == ['0']


def test_clean_dataset_is_not_flagged(tmp_path):
    generated = synthetic.generate(replace(SMALL_CONFIG, m_poison=0))
    files = synthetic.save_synthetic(generated, str(tmp_path / 'clean'))
    report = PurifierPipeline(_config(files)).analyze().report
    assert report.infected_classes == []
    assert all(record.J is not None and record.J >= 0 for record in report.classes)


def test_missing_inputs_are_config_errors():
    with pytest.raises(ConfigError):
        PurifierPipeline(RunConfig(threads=1)).load_inputs()


def test_metrics_file_is_written(small_files, tmp_path):
    pytest.importorskip('prometheus_client')
    metrics_file = tmp_path / 'metrics.prom'
    monitoring = MonitoringSettings(enable_metrics=True, metrics_file=str(metrics_file))
    PurifierPipeline(_config(small_files, monitoring=monitoring)).analyze()
    text = metrics_file.read_text()
    assert 'purifier_classes_flagged 1.0' in text
    assert 'purifier_stage_seconds' in text


@pytest.mark.slow
def test_weighting_scales_to_many_wide_classes():
    cfg = SubspaceModelConfig(n=512, T=43, d=10, m_per_class=837, m_poison=0, seed=3)
    generated = synthetic.generate(cfg)
    pipeline = PurifierPipeline(RunConfig(threads=1))
    outcomes = pipeline.compute_weights(generated.dataset, generated.reference)
    assert all(outcome.ok for outcome in outcomes.values())
    assert pipeline.timer.seconds('weights') <= 60


def _detect_in_memory(cfg):
    generated = synthetic.generate(cfg)
    pipeline = PurifierPipeline(RunConfig(threads=1, seed=cfg.seed))
    return pipeline.detect(pipeline.compute_weights(generated.dataset, generated.reference))


@pytest.mark.slow
def test_clean_runs_raise_no_flags_across_seeds():
    # Clean-class J is skewed, so a fixed seed window is checked; see DESIGN.md.
    quiet = 0
    for seed in range(40, 60):
        report = _detect_in_memory(SubspaceModelConfig(m_poison=0, seed=seed))
        assert len(report.infected_classes) <= len(report.classes) // 2
        quiet += not report.infected_classes
    assert quiet >= 19


@pytest.mark.slow
def test_default_regime_is_detected_across_seeds(tmp_path):
    found, clean_rates, tprs, fprs = 0, [], [], []
    for seed in range(20):
        generated = synthetic.generate(SubspaceModelConfig(trigger_strength=0.2, seed=seed))
        files = synthetic.save_synthetic(generated, str(tmp_path / str(seed)), 'binary')
        result = PurifierPipeline(_config(files, seed=seed)).analyze()
        scores = evaluation.evaluate_run(result.report, result.manifest, generated.ground_truth)
        found += '0' in result.report.infected_classes
        clean_rates.append(scores['detection']['fpr'])
        if result.report.infected_classes:
            tprs.append(scores['identification']['tpr'])
            fprs.append(scores['identification']['fpr'])
    assert found >= 18
    assert np.mean(clean_rates) <= 0.10
    assert np.mean(tprs) >= 0.95
    assert np.mean(fprs) <= 0.10


@pytest.mark.slow
def test_smaller_poison_variance_weakens_detection():
    hits, infected_J = {}, {}
    for ratio in (0.3, 0.5, 1.0):
        reports = [
            _detect_in_memory(SubspaceModelConfig(variance_ratio=ratio, trigger_strength=0.2, seed=seed))
            for seed in range(5)
        ]
        hits[ratio] = sum('0' in report.infected_classes for report in reports)
        infected_J[ratio] = [report.record('0').J for report in reports]
    assert hits[0.3] <= hits[0.5] <= hits[1.0] == 5
    assert hits[0.3] >= 2
    assert all(full > low for full, low in zip(infected_J[1.0], infected_J[0.3]))
