import json

import numpy as np
import pytest

from backdoor_purifier import cli


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    """Keep the repository's config.yaml out of CLI runs."""
    monkeypatch.chdir(tmp_path)


def _inputs(files):
    return ['--train', files['train'], '--labels', files['labels'], '--clean', files['clean']]


def _report(path):
    with open(path) as f:
        payload = json.load(f)
    payload.pop('runtime_seconds')
    return payload


def test_synth_writes_a_dataset(tmp_path, capsys):
    out = tmp_path / 'synth'
    code = cli.main([
        'synth', '--out', str(out), '--n', '32', '--T', '6', '--d', '3',
        '--m-per-class', '60', '--m-poison', '30', '--seed', '7',
    ])
    assert code == cli.EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary['infected_classes'] == ['0']
    assert (out / 'train.csv').exists()
    assert (out / 'ground_truth.json').exists()


def test_analyze_and_fail_on_detect(small_files, tmp_path):
    out = tmp_path / 'out'
    assert cli.main(['analyze', *_inputs(small_files), '--out', str(out), '--threads', '2']) == 0
    assert _report(out / 'report.json')['infected_classes'] == ['0']

    code = cli.main(['analyze', *_inputs(small_files), '--out', str(tmp_path / 'again'),
                     '--fail-on-detect'])
    assert code == cli.EXIT_DETECTED


def test_analyze_prints_the_report_without_out(small_files, capsys):
    assert cli.main(['analyze', *_inputs(small_files), '--threads', '1']) == 0
    report = json.loads(capsys.readouterr().out)
    assert report['infected_classes'] == ['0']
    assert report['tau'] == 3.0


def test_staged_commands_match_analyze(small_files, tmp_path, capsys):
    assert cli.main(['analyze', *_inputs(small_files), '--out', str(tmp_path / 'full')]) == 0
    weights = str(tmp_path / 'weights')
    report = str(tmp_path / 'report.json')
    assert cli.main(['weights', *_inputs(small_files), '--weights', weights]) == 0
    assert cli.main(['detect', '--weights', weights, '--report', report]) == 0
    assert _report(report) == _report(tmp_path / 'full' / 'report.json')

    capsys.readouterr()
    code = cli.main([
        'mitigate', '--train', small_files['train'], '--labels', small_files['labels'],
        '--weights', weights, '--report', report, '--out', str(tmp_path / 'staged'),
    ])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    staged = (tmp_path / 'staged' / 'manifest.csv').read_text()
    assert staged == (tmp_path / 'full' / 'manifest.csv').read_text()
    assert summary['quarantined'] == len(staged.strip().splitlines()) - 1


def test_evaluate_scores_a_run(small_files, tmp_path, capsys):
    out = tmp_path / 'out'
    assert cli.main(['analyze', *_inputs(small_files), '--out', str(out)]) == 0
    capsys.readouterr()
    code = cli.main([
        'evaluate', '--report', str(out / 'report.json'), '--manifest', str(out / 'manifest.csv'),
        '--ground-truth', small_files['ground_truth'],
    ])
    assert code == 0
    scores = json.loads(capsys.readouterr().out)
    assert scores['detection']['tpr'] == 1.0
    assert scores['identification']['tpr'] >= 0.95


def test_missing_label_file_is_a_usage_error(small_files, tmp_path, capsys):
    code = cli.main([
        'analyze', '--train', small_files['train'], '--labels', str(tmp_path / 'missing.csv'),
        '--clean', small_files['clean'],
    ])
    assert code == cli.EXIT_USAGE
    assert '--labels' in capsys.readouterr().err


def test_missing_subcommand_is_a_usage_error():
    assert cli.main([]) == cli.EXIT_USAGE


def test_bad_threshold_is_a_usage_error(small_files):
    assert cli.main(['analyze', *_inputs(small_files), '--cpv', '1.5']) == cli.EXIT_USAGE


def test_malformed_matrix_is_a_data_error(small_files, tmp_path):
    bad = tmp_path / 'bad.csv'
    bad.write_text('1.0,2.0\nnot,numbers\n')
    code = cli.main([
        'analyze', '--train', str(bad), '--labels', small_files['labels'],
        '--clean', small_files['clean'],
    ])
    assert code == cli.EXIT_DATA_ERROR


def test_flatten_a_line(tmp_path, capsys):
    path = tmp_path / 'line.csv'
    points = np.linspace(0, 1, 30)[:, None] * np.array([[1.0, 2.0, -0.5]])
    np.savetxt(path, points, delimiter=',', fmt='%.17g')
    assert cli.main(['flatten', '--train', str(path), '--knn', '2']) == 0
    result = json.loads(capsys.readouterr().out)
    assert result['c'] <= 1e-6
    assert result['N'] == 30
    assert result['k_nn'] == 2
