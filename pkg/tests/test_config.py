import json
import logging

import pytest

from backdoor_purifier.config import EMSettings, RunConfig
from backdoor_purifier.errors import ConfigError


def _write(tmp_path, text, name='config.yaml'):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults_without_a_config_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    config = RunConfig.from_file()
    assert config.cpv_threshold == 0.95
    assert config.tau == 3.0
    assert config.k_nn == 10
    assert config.em == EMSettings()
    assert config.monitoring.enable_metrics is False
    assert config.threads >= 1


def test_missing_default_file_is_quiet(tmp_path, monkeypatch, caplog):
    monkeypatch.chdir(tmp_path)
    with caplog.at_level(logging.DEBUG, logger='backdoor_purifier.config'):
        RunConfig.from_file()
    assert not [r for r in caplog.records if r.levelno >= logging.WARNING]
    assert any('No config file' in r.getMessage() for r in caplog.records)


def test_unparsable_default_file_warns(tmp_path, monkeypatch, caplog):
    monkeypatch.chdir(tmp_path)
    _write(tmp_path, 'detection: [unclosed\n')
    with caplog.at_level(logging.DEBUG, logger='backdoor_purifier.config'):
        config = RunConfig.from_file()
    assert config.tau == 3.0
    assert any(r.levelno == logging.WARNING for r in caplog.records)


def test_sections_are_read(tmp_path):
    path = _write(tmp_path, """
paths:
  train: data/train.csv
  out: results
detection:
  tau: 2.5
  threads: 2
em:
  restarts: 3
  shared_variance: true
flatten:
  k_nn: 6
synth:
  T: 4
  m_poison: 0
monitoring:
  log_level: DEBUG
  enable_metrics: true
""")
    config = RunConfig.from_file(path)
    assert config.train == 'data/train.csv'
    assert config.out == 'results'
    assert config.tau == 2.5
    assert config.threads == 2
    assert config.em.restarts == 3
    assert config.em.shared_variance
    assert config.k_nn == 6
    assert config.synth.T == 4
    assert not config.synth.is_poisoned
    assert config.get_log_level() == logging.DEBUG
    assert config.monitoring.enable_metrics


def test_json_config_is_accepted(tmp_path):
    path = _write(tmp_path, json.dumps({'detection': {'cpv_threshold': 0.9}}), 'config.json')
    assert RunConfig.from_file(path).cpv_threshold == 0.9


@pytest.mark.parametrize('text', [
    'detection:\n  tua: 2.0\n',
    'em:\n  iterations: 10\n',
    'detection: 3\n',
    '- just\n- a list\n',
    'detection:\n  em: 1\n',
])
def test_bad_files_are_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        RunConfig.from_file(_write(tmp_path, text))


def test_explicit_missing_file_is_an_error(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_file(str(tmp_path / 'nope.yaml'))


def test_flags_override_file_values(tmp_path):
    path = _write(tmp_path, 'detection:\n  tau: 2.5\n  seed: 4\n')
    config = RunConfig.from_file(path).with_overrides(
        tau=None, seed=9, log_level='WARNING', train='x.csv'
    )
    assert config.tau == 2.5
    assert config.seed == 9
    assert config.em.seed == 9
    assert config.monitoring.log_level == 'WARNING'
    assert config.train == 'x.csv'
    with pytest.raises(ConfigError):
        config.with_overrides(bogus=1)


@pytest.mark.parametrize('changes', [
    {'cpv_threshold': 0.0},
    {'cpv_threshold': 1.5},
    {'tau': 0.0},
    {'k_nn': 0},
    {'threads': 0},
    {'format': 'parquet'},
])
def test_validate_rejects_out_of_range_values(changes):
    with pytest.raises(ConfigError):
        RunConfig(**changes).validate()


def test_unknown_log_level_falls_back_to_info():
    config = RunConfig().with_overrides(log_level='chatty')
    assert config.get_log_level() == logging.INFO
