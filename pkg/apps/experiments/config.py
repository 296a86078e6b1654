"""
Experiment configuration: a YAML file validated by ConfigForm, with
command-line flags layered on top.
"""
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml
from django.conf import settings

from apps.backends.exceptions import OracleConfigError
from apps.backends.generators import build_generator
from apps.backends.ledger import INFERENCE, QueryLedger
from apps.backends.oracle import CorruptionModel, OracleConfig

from .exceptions import ConfigError
from .forms import CORRUPTION_KEYS, PROBABILITY_KEYS, ConfigForm


def build_oracle_config(preset=None, rates=None):
    rates = rates or {}
    probabilities = {key: float(rates[key]) for key in PROBABILITY_KEYS if key in rates}
    corruption = CorruptionModel(**{key: int(rates[key]) for key in CORRUPTION_KEYS if key in rates})
    if preset:
        return OracleConfig.from_preset(preset, corruption=corruption, **probabilities)
    return OracleConfig(corruption=corruption, **probabilities)


@dataclass
class ExperimentConfig:
    backend: str = 'oracle'
    endpoint: str | None = None
    model: str | None = None
    temperature: float | None = None
    budget: int | None = field(default_factory=lambda: settings.THOUGHTGRAPH['QUERY_BUDGET'])
    ensemble_size: int = field(default_factory=lambda: settings.THOUGHTGRAPH['ENSEMBLE_SIZE'])
    epsilon: int | None = None
    seeds: list = field(default_factory=list)
    retries: int | None = None
    timeout: float | None = None
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def to_dict(self):
        return {
            'backend': self.backend,
            'endpoint': self.endpoint,
            'model': self.model,
            'temperature': self.temperature,
            'budget': self.budget,
            'ensemble_size': self.ensemble_size,
            'epsilon': self.epsilon,
            'seeds': list(self.seeds),
            'retries': self.retries,
            'timeout': self.timeout,
            'oracle': self.oracle.to_dict(),
        }

    def digest(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def ledger(self, phase=INFERENCE):
        return QueryLedger(phase=phase, cap=self.budget)

    def generator(self, phase=INFERENCE, seed=0, ledger=None):
        """A generator for one seeded run; pass ``ledger`` to share one budget across runs."""
        return build_generator(
            self.backend,
            oracle=self.oracle.with_seed(seed),
            phase=phase,
            budget=self.budget,
            ledger=ledger,
            **self._http_options(),
        )

    def _http_options(self):
        if self.backend != 'http':
            return {}
        options = {'endpoint': self.endpoint, 'model': self.model, 'timeout': self.timeout,
                   'retries': self.retries, 'temperature': self.temperature}
        return {key: value for key, value in options.items() if value is not None}


def load_config(path=None, **overrides):
    """Read and validate a YAML config; non-None ``overrides`` replace file values."""
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a mapping of config keys")
    data.update({key: value for key, value in overrides.items() if value is not None})

    form = ConfigForm(data)
    unknown = set(data) - set(form.fields)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(sorted(unknown))}")
    if not form.is_valid():
        raise ConfigError(f"Invalid config: {form.errors.as_text()}")
    cleaned = form.cleaned_data
    try:
        oracle = build_oracle_config(cleaned['oracle_preset'], cleaned['oracle'])
    except OracleConfigError as exc:
        raise ConfigError(str(exc)) from exc

    config = ExperimentConfig(
        backend=cleaned['backend'] or 'oracle',
        endpoint=cleaned['endpoint'] or None,
        model=cleaned['model'] or None,
        temperature=cleaned['temperature'],
        budget=cleaned['budget'] if cleaned['budget'] is not None else settings.THOUGHTGRAPH['QUERY_BUDGET'],
        epsilon=cleaned['epsilon'],
        seeds=cleaned['seeds'],
        retries=cleaned['retries'],
        timeout=cleaned['timeout'],
        oracle=oracle,
    )
    if cleaned['ensemble_size'] is not None:
        config.ensemble_size = cleaned['ensemble_size']
    return config
