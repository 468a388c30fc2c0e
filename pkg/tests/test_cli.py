import json

import jsonschema
import pytest

from tiltlab.cli import main
from tiltlab.reports import (
    Report,
    Table,
    CheckResult,
    config_from_dict,
    config_to_dict,
    default_config,
    render_csv,
    report_to_json,
    validate_report_dict,
)


# ------------------------------------------------------------------- config


def test_config_round_trip_through_json():
    for experiment in ("dice", "bernoulli", "windows", "gsm", "cf-check", "dice-concentration", "theorem1"):
        config = default_config(experiment)
        wire = json.dumps(config_to_dict(config))
        assert config_from_dict(json.loads(wire)) == config


def test_config_rejects_unknown_experiment():
    with pytest.raises(ValueError, match="unknown experiment"):
        default_config("siege")


def test_config_rejects_unknown_keys():
    raw = config_to_dict(default_config("dice"))
    raw["typo"] = 1
    with pytest.raises(ValueError, match="unknown config keys"):
        config_from_dict(raw)


def test_config_requires_nonempty_grid():
    raw = config_to_dict(default_config("bernoulli"))
    raw["n_grid"] = []
    with pytest.raises(ValueError, match="nonempty"):
        config_from_dict(raw)


# ------------------------------------------------------------------ renders


def test_csv_uses_twelve_significant_digits():
    table = Table(columns=("a", "b"), rows=((1 / 3, "x"), (2.0, "y")))
    text = render_csv(table)
    lines = text.splitlines()
    assert lines[0] == "a,b"
    assert lines[1].startswith("0.333333333333,")
    assert len(lines[1].split(",")[0].replace("0.", "")) == 12


def test_report_json_validates_against_schema():
    report = Report(
        experiment="dice",
        config=default_config("dice"),
        tables={"t": Table(columns=("x",), rows=((1.0,),))},
        checks=(CheckResult(name="c", invariant="i", passed=True, margin=0.5),),
        primary_table="t",
    )
    raw = json.loads(report_to_json(report))
    validate_report_dict(raw)
    del raw["version"]
    with pytest.raises(jsonschema.ValidationError):
        validate_report_dict(raw)


# ---------------------------------------------------------------------- CLI


def test_dice_default_passes(capsys, tmp_path):
    out = tmp_path / "dice.json"
    code = main(["dice", "--out", str(out)])
    assert code == 0
    raw = json.loads(out.read_text())
    validate_report_dict(raw)
    tilt = dict(zip(raw["tables"]["tilt"]["columns"], zip(*raw["tables"]["tilt"]["rows"])))
    assert [round(v, 3) for v in tilt["probability"]] == [0.054, 0.079, 0.114, 0.165, 0.240, 0.347]
    err = capsys.readouterr().err
    assert "PASS" in err and "FAIL" not in err


def test_dice_uniform_target(tmp_path):
    out = tmp_path / "dice.json"
    assert main(["dice", "--target", "3.5", "--out", str(out)]) == 0
    raw = json.loads(out.read_text())
    summary = dict(zip(raw["tables"]["summary"]["columns"], raw["tables"]["summary"]["rows"][0]))
    assert summary["status"] == "interior"
    assert summary["multiplier"] == 0.0
    assert abs(summary["entropy"] - 1.791759469228055) < 1e-12


def test_dice_infeasible_target_exits_2(capsys):
    assert main(["dice", "--target", "6.5"]) == 2
    assert "convex hull" in capsys.readouterr().err


def test_unknown_experiment_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["siege"])
    assert info.value.code == 2


def test_bernoulli_single_point_grid(capsys, tmp_path):
    out = tmp_path / "b.json"
    code = main(["bernoulli", "--n-grid", "4", "--out", str(out)])
    assert code == 0
    raw = json.loads(out.read_text())
    checks = {c["name"]: c for c in raw["checks"]}
    assert checks["exact-n4"]["passed"]
    assert "0.8" in checks["exact-n4"]["detail"]


def test_bernoulli_interior_baseline(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bernoulli", "--baseline-p", "0.9", "--n-grid", "20:100:20", "--out", str(out)]) == 0
    raw = json.loads(out.read_text())
    summary = dict(zip(raw["tables"]["summary"]["columns"], raw["tables"]["summary"]["rows"][0]))
    assert summary["status"] == "interior"
    assert summary["multiplier"] == 0.0


def test_theorem1_csv_columns(tmp_path):
    out = tmp_path / "records.csv"
    code = main(["theorem1", "--n-grid", "20,40,80", "--format", "csv", "--out", str(out)])
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert header == "n,m,tv,envelope_thm,envelope_alt,bad_mass,delta"


def test_windows_csv_columns(tmp_path):
    out = tmp_path / "sweep.csv"
    code = main(["windows", "--n-grid", "25,50", "--samples", "20000", "--out", str(out), "--format", "csv"])
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert header == "n,epsilon,tv_estimate,se,acceptance_rate,ess,method,seed"


def test_gsm_csv_columns(tmp_path):
    out = tmp_path / "gsm.csv"
    code = main(["gsm", "--out", str(out), "--format", "csv"])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,epsilon,ks,accepted,seed"
    assert len(lines) == 2


def test_cf_check_runs(tmp_path):
    out = tmp_path / "cf.json"
    assert main(["cf-check", "--samples", "20000", "--out", str(out)]) == 0
    raw = json.loads(out.read_text())
    assert set(raw["tables"]) == {"point", "two-atom"}


def test_reports_are_byte_identical_across_runs(tmp_path):
    out = tmp_path / "report.json"
    assert main(["dice-concentration", "--samples", "20000", "--out", str(out)]) == 0
    first = out.read_bytes()
    assert main(["dice-concentration", "--samples", "20000", "--out", str(out)]) == 0
    assert out.read_bytes() == first


def test_flags_override_config_file(tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"experiment": "dice", "seed": 5, "format": "json"}))
    out = tmp_path / "d.json"
    assert main(["dice", "--config", str(config_path), "--seed", "7", "--out", str(out)]) == 0
    raw = json.loads(out.read_text())
    assert raw["config"]["seed"] == 7


def test_config_file_experiment_mismatch(capsys, tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"experiment": "gsm"}))
    assert main(["dice", "--config", str(config_path)]) == 2
    assert "subcommand" in capsys.readouterr().err


def test_config_file_drives_a_sweep(tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps({"experiment": "theorem1", "n_grid": [10, 20, 30], "m": 2, "format": "csv"})
    )
    out = tmp_path / "records.csv"
    assert main(["theorem1", "--config", str(config_path), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 4
    assert [r.split(",")[0] for r in rows[1:]] == ["10", "20", "30"]
    assert all(r.split(",")[1] == "2" for r in rows[1:])


def test_exit_1_when_a_check_fails(tmp_path):
    # A coverage interval nowhere near the sampled entropies fails its check.
    out = tmp_path / "c.json"
    code = main([
        "dice-concentration", "--samples", "2000", "--interval", "0.1,0.2", "--out", str(out)
    ])
    assert code == 1
    raw = json.loads(out.read_text())
    assert not all(c["passed"] for c in raw["checks"])
