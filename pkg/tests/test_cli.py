import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from gescc.cli import apply_axis, main, sensitivity
from gescc.config import load_config, parse_config
from gescc.errors import ConfigError

MINIMAL = {
    "seed": 2,
    "scenario": {"synth": {"seed": 7, "daily_amplitude": 0.08, "seasonal_amplitude": 0.2},
                 "generators": {"count": 5, "capacity_mw": 200, "mttr": 48}},
    "units": [{"name": "es", "power_mw": 100, "duration_h": 4}],
    "dispatch": {"method": "M3-redispatch"},
    "smcs": {"years": 3},
}


def _write(tmp_path, cfg, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def test_simulate_outputs_and_rerun_identical(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "a"), "--workers", "1"]) in (0, 3)
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "b"), "--workers", "1"]) in (0, 3)
    a, b = tmp_path / "a", tmp_path / "b"
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 2 and len(man["config_hash"]) == 64
    for name in ("eens_by_year.csv", "convergence.csv", "ledger.json", "config.yaml", "plot_data.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
        assert name in man["files"]
    assert len(pd.read_csv(a / "eens_by_year.csv")) == 3
    # figures come from plot_data.json only
    assert main(["report", str(a)]) == 0
    assert (a / "figures" / "convergence.png").is_file()


def test_default_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("GESCC_OUTPUT_ROOT", str(tmp_path / "root"))
    cfg = dict(MINIMAL, smcs={"years": 2})
    assert main(["simulate", str(_write(tmp_path, cfg)), "--workers", "1"]) in (0, 3)
    runs = list((tmp_path / "root").iterdir())
    assert len(runs) == 1 and runs[0].name.startswith("simulate-")


def test_m4_without_ddu_is_config_error(tmp_path, capsys):
    cfg = dict(MINIMAL, units=[{"name": "v", "kind": "VES", "power_mw": 50}],
               dispatch={"method": "M4-risk-averse"})
    assert main(["simulate", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "x")]) == 2
    assert "ddu" in capsys.readouterr().err


def test_config_errors_name_field_paths(tmp_path):
    with pytest.raises(ConfigError, match="units.0.power_mw"):
        parse_config(dict(MINIMAL, units=[{"name": "es", "power_mw": -1}]))
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(dict(MINIMAL, scenario={"generators": {}}))
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.yaml")
    assert main(["simulate", str(tmp_path / "nope.yaml")]) == 2


def test_config_hash_ignores_output_dir():
    a = parse_config(MINIMAL)
    b = parse_config(dict(MINIMAL, output_dir="/tmp/elsewhere"))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != parse_config(dict(MINIMAL, seed=3)).config_hash()


def test_sensitivity_grid_errors(tmp_path):
    cfg = parse_config(MINIMAL)
    with pytest.raises(ConfigError, match="empty"):
        sensitivity(cfg, {})
    with pytest.raises(ConfigError, match="duration"):
        sensitivity(cfg, {"colour": [1, 2]})
    with pytest.raises(ConfigError, match="empty"):
        sensitivity(cfg, {"duration": []})
    assert main(["sensitivity", str(_write(tmp_path, MINIMAL)), "--axis", "colour=1,2"]) == 2
    assert main(["sensitivity", str(_write(tmp_path, MINIMAL))]) == 2


def test_apply_axis():
    cfg = parse_config(MINIMAL)
    assert apply_axis(cfg, "duration", 8.0).units[0].duration_h == 8.0
    assert apply_axis(cfg, "efficiency", 0.8).units[0].eta_d == 0.8
    assert apply_axis(cfg, "penetration", 0.5).scenario.synth.penetration == 0.5


def test_sensitivity_runs_small_grid(tmp_path):
    cfg = dict(MINIMAL, credit={"metrics": ["EFC"], "tolerance": 0.25}, smcs={"years": 2})
    out = tmp_path / "s"
    assert main(["sensitivity", str(_write(tmp_path, cfg)), "--axis", "duration=2,4",
                 "--out", str(out), "--workers", "1"]) == 0
    df = pd.read_csv(out / "sensitivity.csv")
    assert list(df["duration"]) == [2.0, 4.0]
    assert main(["report", str(out)]) == 0
    assert (out / "figures" / "sensitivity_duration.png").is_file()


def test_validate_data_exit_codes(tmp_path, capsys):
    n = 48
    df = pd.DataFrame({
        "timestamp": pd.date_range("2021-01-01", periods=n, freq="h", tz="UTC").strftime("%Y-%m-%dT%H:%M:%SZ"),
        "load_mw": np.full(n, 100.0), "wind_mw": np.zeros(n), "solar_mw": np.zeros(n),
        "price_per_mwh": np.full(n, 40.0),
    })
    df.to_csv(tmp_path / "ok.csv", index=False)
    assert main(["validate-data", str(tmp_path / "ok.csv")]) == 0
    df.loc[42, "load_mw"] = np.nan
    df.to_csv(tmp_path / "bad.csv", index=False)
    capsys.readouterr()
    assert main(["validate-data", str(tmp_path / "bad.csv")]) == 1
    assert json.loads(capsys.readouterr().out)["row"] == 42


def test_schema_command(capsys):
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "scenario" in schema["properties"]


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    for p in sorted(root.glob("*.yaml")):
        load_config(p)
