import json
import math
import subprocess
from collections import defaultdict

import pytest

import cdekit
from cdekit import _core

MLE_GAP = {
    "experiment": "mle-gap",
    "id": "gap",
    "seed": 7,
    "workers": 1,
    "gamma": 0.25,
    "n_grid": [256, 512, 1024],
    "replications": 3,
}


def test_declared_columns_match_the_writer():
    assert cdekit.RISK_COLUMNS == _core.risk_csv_columns()


@pytest.fixture(scope="module")
def gap_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("gap")
    files = cdekit.run_config(MLE_GAP, out)
    return out, files


def test_mle_gap_csv_matches_the_schema(gap_run):
    out, files = gap_run
    assert sorted(f.split("/")[-1] for f in files) == ["gap.csv", "gap.summary.json"]
    rows = cdekit.read_risk_csv(out / "gap.csv")
    assert len(rows) == 3 * 3 * 2
    assert {r["estimator"] for r in rows} == {"grid-mle", "aggregation"}
    assert all(r["class"] == "appendix_d" and r["experiment_id"] == "gap" for r in rows)
    assert all(0.0 <= r["lambda_bar"] <= 0.25 for r in rows)
    assert all(r["wall_ms"] == 0.0 for r in rows)


def test_summary_agrees_with_the_csv(gap_run):
    out, _ = gap_run
    summary = cdekit.check_summary(json.loads((out / "gap.summary.json").read_text()))
    assert summary["csv"] == "gap.csv"
    assert summary["config"]["gamma"] == 0.25
    by_key = defaultdict(list)
    for r in cdekit.read_risk_csv(out / "gap.csv"):
        by_key[(r["estimator"], r["n"])].append(r["hellinger_loss"])
    for name, est in summary["estimators"].items():
        for rep in est["reports"]:
            values = by_key[(name, rep["n"])]
            assert rep["replications"] == len(values)
            assert cdekit.as_float(rep["hellinger"]["mean"]) == pytest.approx(sum(values) / len(values), rel=1e-12)
        fit = est["slopes"]["hellinger"]
        means = [cdekit.as_float(rep["hellinger"]["mean"]) for rep in est["reports"]]
        assert fit["risks"] == pytest.approx(means, rel=1e-12)
        assert cdekit.rate_fit(fit["n"], fit["risks"])["slope"] == pytest.approx(cdekit.as_float(fit["slope"]), rel=1e-12)


def test_entropy_profile_csv(tmp_path):
    doc = {
        "experiment": "entropy",
        "id": "ent",
        "seed": 1,
        "n": 16,
        "samples": 2,
        "eps_grid": [0.1, 0.2, 0.4],
        "class": {"kind": "gaussian_linear"},
    }
    cdekit.run_config(doc, tmp_path)
    rows = cdekit.read_profile_csv(tmp_path / "ent.csv")
    assert [r["epsilon"] for r in rows] == [0.1, 0.2, 0.4]
    covers = [r["log_cover"] for r in rows]
    assert covers == sorted(covers, reverse=True)


def test_missing_columns_are_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("experiment_id,class,estimator,n\nx,y,z,1\n")
    with pytest.raises(cdekit.SchemaError, match="missing columns"):
        cdekit.read_risk_csv(path)
    with pytest.raises(cdekit.SchemaError):
        cdekit.check_summary({"experiment_id": "x"})


def test_non_finite_strings():
    assert math.isinf(cdekit.as_float("inf"))
    assert math.isnan(cdekit.as_float("nan"))
    with pytest.raises(cdekit.SchemaError):
        cdekit.as_float("many")


def test_cli_output_is_the_same_schema_and_deterministic(cli, tmp_path, root):
    config = tmp_path / "gap.json"
    config.write_text(json.dumps(MLE_GAP))
    for sub in ("a", "b"):
        subprocess.run([cli, "mle-gap", "-q", "--out-dir", str(tmp_path / sub), str(config)], check=True)
    a = (tmp_path / "a" / "gap.csv").read_bytes()
    assert a == (tmp_path / "b" / "gap.csv").read_bytes()
    assert len(cdekit.read_risk_csv(tmp_path / "a" / "gap.csv")) == 18
    cdekit.check_summary(json.loads((tmp_path / "a" / "gap.summary.json").read_text()))
    bad = subprocess.run([cli, "validate", str(root / "configs" / "mle-gap.toml")], capture_output=True, text=True)
    assert bad.returncode == 0
