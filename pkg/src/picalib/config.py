"""TOML run configuration with dotted-key overrides.

The schema below is also the set of accepted keys: anything else is an error.
Flags such as ``--train.epochs 50`` or ``--calibration.levels 0.9,0.95``
override file values and are converted to the type of the default.
"""

from __future__ import annotations

import copy
import sys

from .errors import ConfigError
from .harness import CsvSource, ExperimentConfig, SyntheticSource
from .models import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS = {
    "data": {
        "source": "synthetic",
        "family": "multi1",
        "coefficient_seed": 0,
        "n_train": 800,
        "n_val": 350,
        "n_test": 3000,
        "path": "",
        "target": "y",
        "train_fraction": 0.6,
        "val_fraction": 0.2,
        "test_fraction": 0.2,
    },
    "train": {
        "lambdas": [300.0, 688.0, 1580.0, 3620.0, 8290.0, 19000.0, 43600.0, 100000.0],
        "learning_rate": 0.005,
        "epochs": 100,
        "batch_size": 64,
        "ensemble_size": 3,
        "hidden_sizes": [50, 50],
        "init_seed": 0,
    },
    "calibration": {
        "mode": "normalized",
        "levels": [0.95],
        "beta": 0.1,
        "methods": ["normalized", "unnormalized", "pav"],
        "mc_draws": 200000,
        "mc_seed": 0,
        "width_source": "pooled",
        "fallback": True,
    },
    "experiment": {
        "repetitions": 1,
        "master_seed": 0,
        "standardize": True,
    },
}


def load_file(path):
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def merge(base, over, prefix=""):
    """Deep-merge ``over`` into a copy of ``base``, rejecting keys absent from ``base``."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{prefix}{k}"
        if k not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{key!r} must be a section")
            out[k] = merge(out[k], v, key + ".")
        else:
            out[k] = _coerce(key, out[k], v)
    return out


def _coerce(key, default, value):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ConfigError(f"{key!r} expects a boolean, got {value!r}")
    if isinstance(default, list):
        if isinstance(value, str):
            value = [v for v in (s.strip() for s in value.split(",")) if v]
        if not isinstance(value, list):
            raise ConfigError(f"{key!r} expects a list, got {value!r}")
        elem = default[0] if default else None
        return [_coerce(key, elem, v) if elem is not None else v for v in value]
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} expects a {type(default).__name__}, got {value!r}") from None
    return str(value)


def parse_overrides(tokens):
    """Turn ``["--a.b", "1", "--c.d=2"]`` into a nested mapping."""
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unrecognized argument {tok!r}")
        name = tok[2:]
        if "=" in name:
            name, value = name.split("=", 1)
        else:
            value = next(it, None)
            if value is None:
                raise ConfigError(f"{tok} needs a value")
        node = out
        *parents, leaf = name.replace("-", "_").split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return out


def resolve(path=None, overrides=None):
    cfg = DEFAULTS
    if path:
        cfg = merge(cfg, load_file(path))
    if overrides:
        cfg = merge(cfg, overrides)
    return cfg


def train_config(cfg) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        learning_rate=t["learning_rate"],
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        ensemble_size=t["ensemble_size"],
        hidden_sizes=tuple(t["hidden_sizes"]),
        init_seed=t["init_seed"],
    )


def experiment_config(cfg) -> ExperimentConfig:
    d = cfg["data"]
    try:
        if d["source"] == "csv":
            if not d["path"]:
                raise ConfigError("data.path is required when data.source = 'csv'")
            data = CsvSource(d["path"], d["target"], d["train_fraction"], d["val_fraction"], d["test_fraction"])
            data.split_spec(0)
        elif d["source"] == "synthetic":
            data = SyntheticSource(d["family"], d["coefficient_seed"], d["n_train"], d["n_val"], d["n_test"])
        else:
            raise ConfigError(f"data.source must be 'synthetic' or 'csv', got {d['source']!r}")
        c, e = cfg["calibration"], cfg["experiment"]
        return ExperimentConfig(
            data=data,
            lambda_grid=tuple(cfg["train"]["lambdas"]),
            train=train_config(cfg),
            levels=tuple(c["levels"]),
            beta=c["beta"],
            methods=tuple(c["methods"]),
            repetitions=e["repetitions"],
            master_seed=e["master_seed"],
            mc_draws=c["mc_draws"],
            width_source=c["width_source"],
            standardize=e["standardize"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
