"""Python access to the splitpu C++ core."""

import json

from ._splitpu import (
    ConfigError,
    LabelLeakError,
    djs_loss,
    gaussian_bayes_accuracy,
    kl_divergence,
    nnpu_risk,
    risk_components,
    synth_two_gaussians,
    upu_risk,
)
from ._splitpu import normalize_config as _normalize_config
from ._splitpu import run_experiment as _run_experiment


def normalize_config(config):
    """Fill defaults into a config dict and validate it."""
    return json.loads(_normalize_config(json.dumps(config)))


def run_experiment(config):
    """Run a config dict; returns summary rows as dicts."""
    rows = _run_experiment(json.dumps(config))
    return [dict(cell=c, mean=m, std=s, n=n) for c, m, s, n in rows]


__all__ = [
    "ConfigError",
    "LabelLeakError",
    "djs_loss",
    "gaussian_bayes_accuracy",
    "kl_divergence",
    "nnpu_risk",
    "normalize_config",
    "risk_components",
    "run_experiment",
    "synth_two_gaussians",
    "upu_risk",
]
