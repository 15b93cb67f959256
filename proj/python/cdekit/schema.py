"""The CSV and summary JSON layouts written by the experiment driver."""

import csv
import math

RISK_COLUMNS = [
    "experiment_id",
    "class",
    "estimator",
    "n",
    "rep",
    "kl_loss",
    "hellinger_loss",
    "regret",
    "lambda_bar",
    "seed",
    "wall_ms",
]
PROFILE_COLUMNS = ["epsilon", "log_cover", "log_pack", "log_local_pack"]

_INT_COLUMNS = {"n", "rep", "seed"}
_FLOAT_COLUMNS = {"kl_loss", "hellinger_loss", "regret", "lambda_bar", "wall_ms"}
_NON_FINITE = {"inf": math.inf, "+inf": math.inf, "-inf": -math.inf, "nan": math.nan}


class SchemaError(ValueError):
    pass


def as_float(v):
    """A JSON number, or one of the strings used for non-finite values."""
    if isinstance(v, bool) or v is None:
        raise SchemaError(f"expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str) and v in _NON_FINITE:
        return _NON_FINITE[v]
    raise SchemaError(f"expected a number, got {v!r}")


def _read(path, columns, convert):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        rows = []
        for line, row in enumerate(reader, start=2):
            try:
                rows.append({c: convert(c, row[c]) for c in columns})
            except (TypeError, ValueError) as e:
                raise SchemaError(f"{path}:{line}: {e}") from None
        return rows


def _risk_value(column, text):
    if column in _INT_COLUMNS:
        return int(text)
    if column in _FLOAT_COLUMNS:
        return float(text)
    return text


def read_risk_csv(path):
    """Rows of a risk CSV as dicts with typed values; raises SchemaError."""
    return _read(path, RISK_COLUMNS, _risk_value)


def read_profile_csv(path):
    """Rows of an entropy-profile CSV; raises SchemaError."""
    return _read(path, PROFILE_COLUMNS, lambda _, text: float(text))


def _require(cond, msg):
    if not cond:
        raise SchemaError(msg)


def _check_interval(v, where):
    _require(isinstance(v, dict) and set(v) >= {"mean", "ci_halfwidth"}, f"{where}: expected mean and ci_halfwidth")
    as_float(v["mean"])
    as_float(v["ci_halfwidth"])


def check_summary(doc):
    """Checks the layout of a sweep summary JSON; raises SchemaError."""
    for key in ("experiment_id", "experiment", "class", "seed", "replications", "n_grid", "estimators", "overlays"):
        _require(key in doc, f"summary: missing '{key}'")
    _require(isinstance(doc["estimators"], dict) and doc["estimators"], "summary: estimators must be a nonempty object")
    for name, est in doc["estimators"].items():
        where = f"estimators.{name}"
        _require(isinstance(est.get("reports"), list), f"{where}: missing reports")
        for k, rep in enumerate(est["reports"]):
            for key in ("n", "replications", "failures", "infinite"):
                _require(isinstance(rep.get(key), int), f"{where}.reports[{k}]: '{key}' must be an integer")
            for key in ("kl", "hellinger", "regret", "lambda_bar"):
                _check_interval(rep.get(key), f"{where}.reports[{k}].{key}")
        slopes = est.get("slopes")
        _require(isinstance(slopes, dict), f"{where}: missing slopes")
        for key in ("kl", "hellinger", "regret"):
            _require(key in slopes, f"{where}.slopes: missing '{key}'")
            fit = slopes[key]
            if fit is None:
                continue
            for field in ("slope", "intercept", "n", "risks", "first_used_n", "residuals", "warnings"):
                _require(field in fit, f"{where}.slopes.{key}: missing '{field}'")
            as_float(fit["slope"])
    for k, ov in enumerate(doc["overlays"]):
        for key in ("regime", "n", "values"):
            _require(key in ov, f"overlays[{k}]: missing '{key}'")
        _require(len(ov["n"]) == len(ov["values"]), f"overlays[{k}]: n and values differ in length")
    return doc
