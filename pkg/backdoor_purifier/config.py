import logging
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Optional

import yaml

from .errors import ConfigError
from .models.synthetic import SubspaceModelConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "config.yaml"


@dataclass(frozen=True)
class EMSettings:
    """EM settings for the two-component mixture fit."""
    max_iter: int = 200
    tol: float = 1e-8
    restarts: int = 5
    variance_floor: float = 1e-12
    shared_variance: bool = False
    seed: int = 0


@dataclass(frozen=True)
class KMeansSettings:
    max_iter: int = 100


@dataclass(frozen=True)
class MonitoringSettings:
    """Logging and metrics configuration."""
    log_level: str = "INFO"
    log_file: Optional[str] = None
    enable_metrics: bool = False
    metrics_file: str = "purifier_metrics.prom"


def _section(payload: Dict[str, Any], name: str) -> Dict[str, Any]:
    section = payload.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"Config section '{name}' must be a mapping")
    return section


def _build(settings_cls, values: Dict[str, Any], section: str):
    known = {f.name for f in fields(settings_cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in config section '{section}': {', '.join(unknown)}")
    try:
        return settings_cls(**values)
    except TypeError as e:
        raise ConfigError(f"Bad config section '{section}': {e}") from e


@dataclass(frozen=True)
class RunConfig:
    """Run configuration: input paths, thresholds and per-stage settings."""
    # Inputs and outputs
    train: Optional[str] = None
    labels: Optional[str] = None
    clean: Optional[str] = None
    out: Optional[str] = None
    format: Optional[str] = None

    # Staged artifacts
    weights: Optional[str] = None
    report: Optional[str] = None
    manifest: Optional[str] = None
    ground_truth: Optional[str] = None

    # Detection settings
    cpv_threshold: float = 0.95
    tau: float = 3.0
    k_nn: int = 10
    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    fail_on_detect: bool = False

    em: EMSettings = field(default_factory=EMSettings)
    kmeans: KMeansSettings = field(default_factory=KMeansSettings)
    synth: SubspaceModelConfig = field(default_factory=SubspaceModelConfig)
    monitoring: MonitoringSettings = field(default_factory=MonitoringSettings)

    @classmethod
    def load_yaml_config(cls, config_path: str = DEFAULT_CONFIG_PATH,
                         required: bool = False) -> Dict[str, Any]:
        """
        Load a YAML (or JSON) config file.

        A missing default file yields an empty config; a file the user
        asked for explicitly must exist and parse.
        """
        if not required and not os.path.exists(config_path):
            logger.debug(f"No config file at {config_path}; using defaults")
            return {}
        try:
            with open(config_path, 'r') as f:
                payload = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            if required:
                raise ConfigError(f"Cannot read config file {config_path}: {e}") from e
            logger.warning(f"Failed to load YAML config: {e}")
            return {}
        if payload is None:
            return {}
        if not isinstance(payload, dict):
            raise ConfigError(f"Config file {config_path} must hold a mapping")
        return payload

    @classmethod
    def from_file(cls, config_path: Optional[str] = None) -> 'RunConfig':
        """
        Create a RunConfig from a config file.

        Sections:
            paths: train, labels, clean, out, format
            detection: cpv_threshold, tau, seed, threads, fail_on_detect
            em / kmeans / synth / monitoring: the matching settings
            flatten: k_nn

        Returns:
            RunConfig; defaults everywhere when no file is found
        """
        payload = cls.load_yaml_config(
            config_path or DEFAULT_CONFIG_PATH, required=config_path is not None
        )
        paths = _section(payload, 'paths')
        detection = _section(payload, 'detection')
        flatten = _section(payload, 'flatten')
        top_level = {**paths, **detection, **flatten}
        nested = {
            'em': _build(EMSettings, _section(payload, 'em'), 'em'),
            'kmeans': _build(KMeansSettings, _section(payload, 'kmeans'), 'kmeans'),
            'synth': _build(SubspaceModelConfig, _section(payload, 'synth'), 'synth'),
            'monitoring': _build(MonitoringSettings, _section(payload, 'monitoring'), 'monitoring'),
        }
        reserved = set(nested)
        clashing = sorted(set(top_level) & reserved)
        if clashing:
            raise ConfigError(f"Misplaced config keys: {', '.join(clashing)}")
        return _build(cls, {**top_level, **nested}, 'paths/detection/flatten')

    def with_overrides(self, **flags: Any) -> 'RunConfig':
        """Apply command-line flags; a flag left as None keeps the file value."""
        flags = {key: value for key, value in flags.items() if value is not None}
        monitoring_keys = {f.name for f in fields(MonitoringSettings)}
        monitoring = {key: flags.pop(key) for key in list(flags) if key in monitoring_keys}
        config = self
        if monitoring:
            config = replace(config, monitoring=replace(config.monitoring, **monitoring))
        if 'seed' in flags:
            config = replace(config, em=replace(config.em, seed=flags['seed']))
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(flags) - known)
        if unknown:
            raise ConfigError(f"Unknown settings: {', '.join(unknown)}")
        return replace(config, **flags)

    def validate(self) -> 'RunConfig':
        """Check thresholds against the ranges the pipeline stages accept."""
        if not 0 < self.cpv_threshold <= 1:
            raise ConfigError(f"cpv_threshold must lie in (0, 1], got {self.cpv_threshold}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.k_nn < 1:
            raise ConfigError(f"k_nn must be at least 1, got {self.k_nn}")
        if self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")
        if self.em.max_iter < 1 or self.em.tol <= 0 or self.em.restarts < 0:
            raise ConfigError("em needs max_iter >= 1, tol > 0 and restarts >= 0")
        if self.kmeans.max_iter < 1:
            raise ConfigError("kmeans.max_iter must be at least 1")
        if self.format is not None and self.format not in ('csv', 'binary'):
            raise ConfigError(f"format must be csv or binary, got {self.format}")
        return self

    def get_log_level(self) -> int:
        """Get logging level from config."""
        level_map = {
            'DEBUG': logging.DEBUG,
            'INFO': logging.INFO,
            'WARNING': logging.WARNING,
            'ERROR': logging.ERROR,
            'CRITICAL': logging.CRITICAL
        }
        return level_map.get(str(self.monitoring.log_level).upper(), logging.INFO)
