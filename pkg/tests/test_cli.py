import json
import subprocess
import sys

import pytest

from helpers import FIXTURES
from occlude.cli import main
from occlude.simulation import delayed_effect_scenario, scenario_to_dict

SUBJECTS = str(FIXTURES / "golden_subjects.csv")
SPEC = str(FIXTURES / "golden_spec.json")


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario_to_dict(delayed_effect_scenario(n_per_arm=40))))
    return str(path)


def test_derive_golden_bytes(tmp_path):
    assert main(["derive", "--data", SUBJECTS, "--spec", SPEC, "--out", str(tmp_path), "--format", "csv"]) == 0
    assert (tmp_path / "derived_pfs.csv").read_bytes() == (FIXTURES / "golden_derived_pfs.csv").read_bytes()
    audit = (tmp_path / "audit_pfs.txt").read_text()
    assert "strategy table:" in audit and "[S6] competing day 70" in audit


def test_derive_json(tmp_path):
    assert main(["derive", "--data", SUBJECTS, "--spec", SPEC, "--out", str(tmp_path), "--format", "json"]) == 0
    doc = json.loads((tmp_path / "derived_pfs.json").read_text())
    assert doc["audit"]["n_records"] == 6


def test_validate_reports_and_exits_zero(tmp_path, capsys):
    code = main(["validate", "--data", SUBJECTS, "--spec", SPEC, "--out", str(tmp_path), "--format", "json"])
    assert code == 0
    doc = json.loads((tmp_path / "validation.json").read_text())
    assert doc["n_subjects"] == 6 and doc["violations"] == []
    assert "pfs" in doc["findings"]


def test_analyze_from_derived(tmp_path, capsys):
    main(["derive", "--data", SUBJECTS, "--spec", SPEC, "--out", str(tmp_path), "--format", "csv"])
    out = tmp_path / "an"
    code = main(["analyze", "--data", str(tmp_path / "derived_pfs.csv"), "--out", str(out), "--landmark", "60",
                 "--format", "json"])
    assert code == 0
    rep = json.loads((out / "analysis_pfs.json").read_text())
    assert "cif" in rep  # the fixture has a competing exit
    assert (out / "curves_pfs.csv").exists() and (out / "curves_pfs.png").stat().st_size > 0


def test_analyze_rmst_text(tmp_path, capsys):
    code = main(["analyze", "--data", SUBJECTS, "--spec", SPEC, "--out", str(tmp_path), "--tau", "40"])
    assert code == 0
    assert "RMST horizon tau: 40" in (tmp_path / "analysis_pfs.txt").read_text()


@pytest.mark.parametrize("variant", ["dual", "redate", "target"])
def test_sensitivity_outputs(tmp_path, variant):
    code = main(["sensitivity", "--data", SUBJECTS, "--spec", SPEC, "--out", str(tmp_path), "--variant", variant,
                 "--tau", "40", "--landmark", "30"])
    assert code == 0
    stem = f"sensitivity_{variant}_pfs"
    assert json.loads((tmp_path / f"{stem}.json").read_text())["variants"]["primary"]
    assert (tmp_path / f"{stem}.png").exists()


def test_simulate_is_reproducible(tmp_path, scenario_file):
    for name in ("a", "b"):
        assert main(["simulate", "--spec", scenario_file, "--seed", "3", "--out", str(tmp_path / name),
                     "--format", "csv"]) == 0
    assert (tmp_path / "a" / "subjects.csv").read_bytes() == (tmp_path / "b" / "subjects.csv").read_bytes()


def test_simulate_cutoff_in_months(tmp_path, scenario_file):
    assert main(["simulate", "--spec", scenario_file, "--seed", "3", "--out", str(tmp_path), "--cutoff", "6m",
                 "--format", "json"]) == 0
    doc = json.loads((tmp_path / "subjects.json").read_text())
    subjects = doc["subjects"] if isinstance(doc, dict) else doc
    assert len(subjects) < 80


def test_opchar_outputs(tmp_path, scenario_file, capsys):
    code = main(["opchar", "--spec", scenario_file, "--seed", "1", "--out", str(tmp_path), "--cutoff", "12m,24m",
                 "--reps", "100", "--analysis", "cox"])
    assert code == 0
    rows = (tmp_path / "opchar.csv").read_text().splitlines()
    assert rows[0].startswith("cutoff_day,cutoff_months") and len(rows) == 3
    assert json.loads((tmp_path / "opchar.json").read_text())["n_reps"] == 100


@pytest.mark.parametrize(
    "doc, code",
    [
        ("{", 3),
        ('{"estimand_id": "x", "components": [], "strategy_table": [{"ie_type": "a", "strategy": "nope"}]}', 4),
        ('{"estimand_id": "x"}', 5),
        ('{"estimand_id": "x", "components": [], "weird": 1}', 6),
    ],
)
def test_spec_error_exit_codes(tmp_path, capsys, doc, code):
    bad = tmp_path / "spec.json"
    bad.write_text(doc)
    assert main(["derive", "--data", SUBJECTS, "--spec", str(bad), "--out", str(tmp_path), "--format", "json"]) == code
    err = capsys.readouterr().err
    mirror = json.loads(err.strip().splitlines()[-1])
    assert mirror["exit_code"] == code and mirror["category"] == "spec"


def test_usage_errors_exit_two(tmp_path, capsys):
    assert main(["derive", "--data", SUBJECTS, "--out", str(tmp_path)]) == 2
    assert "requires --spec" in capsys.readouterr().err
    assert main(["opchar", "--spec", SPEC, "--seed", "1", "--out", str(tmp_path), "--cutoff", "abc"]) == 2
    assert main(["sensitivity", "--data", SUBJECTS, "--spec", SPEC, "--out", str(tmp_path), "--variant", "x"]) == 2


def test_data_error_exit_one(tmp_path, capsys):
    assert main(["derive", "--data", str(tmp_path / "missing.csv"), "--spec", SPEC, "--out", str(tmp_path)]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "occlude.cli", "derive", "--data", SUBJECTS, "--spec", SPEC,
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "derived_pfs.csv").exists()
