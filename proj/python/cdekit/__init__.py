"""Conditional density estimation experiments.

Structured arguments are plain dicts with the same keys as the experiment
config files. Non-finite numbers appear as the strings "inf", "-inf", "nan".
"""

import json
from pathlib import Path

from . import _core
from ._core import ConfigurationError, DomainError, Error, NumericError
from .schema import (
    PROFILE_COLUMNS,
    RISK_COLUMNS,
    SchemaError,
    as_float,
    check_summary,
    read_profile_csv,
    read_risk_csv,
)

__all__ = [
    "ConfigurationError",
    "DomainError",
    "Error",
    "NumericError",
    "PROFILE_COLUMNS",
    "RISK_COLUMNS",
    "SchemaError",
    "as_float",
    "check_summary",
    "divergence",
    "list_classes",
    "load_config",
    "rate_fit",
    "read_profile_csv",
    "read_risk_csv",
    "run_config",
    "validate_config",
]


def _decode(report):
    return {k: {**v, "value": as_float(v["value"])} if isinstance(v, dict) else as_float(v) for k, v in report.items()}


def divergence(p, q, reference, force_numeric=False):
    """Squared Hellinger, KL and L1 between two densities, with the methods used."""
    report = json.loads(_core.divergence(json.dumps(p), json.dumps(q), json.dumps(reference), force_numeric))
    return _decode(report)


def load_config(path):
    """Reads a .toml or .json experiment config into a dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        return json.loads(_core.parse_toml(text))
    if path.suffix == ".json":
        return json.loads(text)
    raise ConfigurationError(f"config '{path}' must end in .toml or .json")


def validate_config(doc):
    """Diagnostics for a config dict; empty when valid. Never runs anything."""
    return _core.validate_config(json.dumps(doc))


def run_config(doc, out_dir=""):
    """Runs a config dict and returns the paths of the artifacts written."""
    return _core.run_config(json.dumps(doc), str(out_dir))


def list_classes():
    return json.loads(_core.list_classes())


def rate_fit(n, risks, burn_in=True):
    """Least-squares slope of log risk against log n."""
    fit = json.loads(_core.rate_fit([float(v) for v in n], [float(v) for v in risks], burn_in))
    for key in ("slope", "intercept"):
        fit[key] = as_float(fit[key])
    return fit


