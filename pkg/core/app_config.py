#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Run Configuration
إعدادات التشغيل
"""

import copy
import hashlib
import json
import logging
import os
from typing import Any, Dict, Mapping, Optional

import psutil
from dotenv import load_dotenv

from .errors import ConfigError

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"

LAMBDA_GRID = [round(0.1 + 0.05 * i, 2) for i in range(19)] + ["epoch_varying"]

# loss presets for the baseline ablations
LOSS_PRESETS: Dict[str, Dict[str, Any]] = {
    "full": {},
    "no_adaptation": {"lambda_mode": "fixed", "lambda_value": 0.0},
    "unweighted": {"minority_weight": 0.5},
    "dnn": {"lambda_mode": "fixed", "lambda_value": 0.0, "minority_weight": 0.5},
}

# runtime keys that may come from TCNET_* environment variables
ENVIRONMENT_KEYS = ("seed", "threshold", "max_workers")

# section left out of the config digest
DIGEST_EXCLUDED_SECTION = "paths"


def default_worker_count() -> int:
    """Physical core count, falling back to logical cores."""
    return max(1, psutil.cpu_count(logical=False) or psutil.cpu_count() or 1)


def _default_sections() -> Dict[str, Dict[str, Any]]:
    return {
        'train': {
            'max_epochs': 250,
            'batch_size': 256,
            'initial_lr': 0.1,
            'lr_decay_gamma': 0.96,
            'early_stop_patience': 15,
            'momentum': 0.0,
            'min_delta': 0.0,
            'train_fraction': 0.8,
        },
        'model': {
            'd_model': 28,
            'heads': 7,
            'encoder_blocks': 1,
            'ffn_hidden': 112,
            'trunk_widths': [256, 128, 64, 32, 16],
            'layer_norm_eps': 1e-5,
        },
        'loss': {
            'preset': 'full',
            'minority_weight': 0.75,
            'lambda_mode': 'epoch_varying',
            'lambda_value': 1.0,
            'clamp_eps': 1e-12,
        },
        'lime': {
            'n_perturbations': 5000,
            'kernel_width': None,  # 0.75 * sqrt(encoded width)
            'categorical_resample_prob': 0.5,
            'ridge_alpha': 1.0,
            'num_features': 10,
            'fidelity_threshold': 0.5,
        },
        'benchmark': {
            'n_categorical': 16,
            'n_numeric': 5,
            'categories_per_feature': 4,
            'source_circles': 40,
            'target_circles': 80,
            'source_samples_per_circle': 100,
            'target_samples_per_circle': 10,
            'source_minority_rate': 0.13,
            'target_minority_rate': 0.11,
            'shift_intensity': 1.0,
            'latent_dim': 4,
            'circle_spread': 0.5,
            'label_noise': 0.5,
            'label_coefficients': None,
            'interaction_features': None,
            'interaction_strength': 0.0,
        },
        'oversample': {
            'strategy': 'conditional_mixture',
            'mode_count': 5,
            'condition_sampling': 'original',
            'count': None,  # source training row count
        },
        'kl': {
            'bins': 16,
            'smoothing': 1.0,
            'group_sizes': [80, 60, 40, 30, 20, 10],
        },
        'sweep': {
            'grid': list(LAMBDA_GRID),
            'max_workers': None,
        },
        'runtime': {
            'seed': None,
            'threshold': 0.5,
            'max_workers': None,
        },
        'paths': {
            'schema': None,
            'source': None,
            'target': None,
            'target_synth': None,
            'groups': None,
            'checkpoint': None,
            'out': None,
        },
    }


def _parse_env_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


class RunConfig:
    """Run configuration manager.

    Values resolve with the precedence flags > config file > TCNET_*
    environment > defaults. Every key must exist in the defaults.
    """

    def __init__(self, config_path: Optional[str] = None,
                 overrides: Optional[Mapping[str, Any]] = None,
                 environ: Optional[Mapping[str, str]] = None):
        self.defaults = _default_sections()
        self.config_path = config_path
        self._apply_environment(os.environ if environ is None else environ)
        if config_path:
            self.load_json_config(config_path)
        for key, value in (overrides or {}).items():
            if value is not None:
                self.set(key, value)
        self._apply_loss_preset()
        logger.info(f"Configuration initialized (digest {self.digest()[:12]})")

    def _apply_environment(self, environ: Mapping[str, str]):
        for key in ENVIRONMENT_KEYS:
            raw = environ.get(f"TCNET_{key.upper()}")
            if raw not in (None, ""):
                self.set(f"runtime.{key}", _parse_env_value(raw))

    def _apply_loss_preset(self):
        preset = self.get('loss.preset')
        if preset not in LOSS_PRESETS:
            raise ConfigError(f"Unknown loss preset {preset!r}; choose from {sorted(LOSS_PRESETS)}")
        for key, value in LOSS_PRESETS[preset].items():
            self.defaults['loss'][key] = value

    def load_json_config(self, path: str):
        """Merge a JSON config file over the current values."""
        try:
            with open(path, "r", encoding="utf-8") as f:
                document = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Error decoding config file {path}: {e}") from e
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        if not isinstance(document, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
        self.merge(document)
        logger.info(f"JSON configuration loaded from: {path}")

    def merge(self, document: Mapping[str, Any], prefix: str = ""):
        for key, value in document.items():
            dotted = f"{prefix}{key}"
            if prefix == "" and isinstance(value, dict):
                if key not in self.defaults:
                    raise ConfigError(f"Unknown config section {key!r}")
                self.merge(value, prefix=f"{key}.")
            else:
                self.set(dotted, value)

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by dotted key."""
        value: Any = self.defaults
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return copy.deepcopy(value)

    def set(self, key: str, value: Any):
        """Set configuration value; unknown keys are rejected."""
        keys = key.split('.')
        if len(keys) != 2 or keys[0] not in self.defaults or keys[1] not in self.defaults[keys[0]]:
            raise ConfigError(f"Unknown config key {key!r}")
        section, name = keys
        self._check_type(key, self.defaults[section][name], value)
        self.defaults[section][name] = value

    @staticmethod
    def _check_type(key: str, current: Any, value: Any):
        if current is None or value is None:
            return
        if isinstance(current, bool) != isinstance(value, bool):
            raise ConfigError(f"Config key {key!r} expects {type(current).__name__}, got {value!r}")
        if isinstance(current, (int, float)) and not isinstance(current, bool):
            if not isinstance(value, (int, float)):
                raise ConfigError(f"Config key {key!r} expects a number, got {value!r}")
        elif isinstance(current, str) and not isinstance(value, str):
            raise ConfigError(f"Config key {key!r} expects a string, got {value!r}")
        elif isinstance(current, list) and not isinstance(value, list):
            raise ConfigError(f"Config key {key!r} expects a list, got {value!r}")

    def section(self, name: str) -> Dict[str, Any]:
        if name not in self.defaults:
            raise ConfigError(f"Unknown config section {name!r}")
        return copy.deepcopy(self.defaults[name])

    def require_seed(self) -> int:
        seed = self.get('runtime.seed')
        if seed is None:
            raise ConfigError("runtime.seed is mandatory (set it in the config file, --seed or TCNET_SEED)")
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"runtime.seed must be a non-negative integer, got {seed!r}")
        return seed

    def worker_count(self, key: str = 'runtime.max_workers') -> int:
        workers = self.get(key)
        return int(workers) if workers else default_worker_count()

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return copy.deepcopy(self.defaults)

    def canonical_json(self) -> str:
        """Sorted-key JSON of every section except file locations."""
        body = {k: v for k, v in self.defaults.items() if k != DIGEST_EXCLUDED_SECTION}
        return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def provenance(self) -> Dict[str, Any]:
        return {
            "tool_version": TOOL_VERSION,
            "seed": self.get('runtime.seed'),
            "config_digest": self.digest(),
        }

    def export_settings(self, file_path: str):
        """Write the effective configuration as JSON."""
        try:
            with open(file_path, 'w', encoding='utf-8') as f:
                json.dump(self.defaults, f, indent=2, ensure_ascii=False, sort_keys=True)
                f.write("\n")
            logger.info(f"Settings exported to: {file_path}")
        except OSError as e:
            logger.error(f"Failed to export settings: {e}", exc_info=True)
            raise
