from __future__ import annotations

import io
import json
import subprocess
import sys

import pytest

from perisel import cli
from perisel.config import ConfigError, apply_overrides, load_config, parse_override, validate_config


def _paths(cfg, command):
    return {i.path: i.message for i in validate_config(cfg, command)}


def test_even_p_rejected_with_field_path():
    issues = _paths({"path": {"p": 10}}, "simulate")
    assert "path.p" in issues and "odd" in issues["path.p"]


def test_positive_ou_drift_rejected_with_rationale():
    issues = _paths({"path": {"noise": {"kind": "ou", "theta": 0.1}}}, "simulate")
    msg = issues["path.noise"]
    assert "theta <= 0" in msg and "stationary" in msg


def test_car_outside_stability_set_rejected():
    cfg = {"experiment": {"noises": [{"kind": "car", "theta": [-3.0, -2.0], "delta": 0.5}]}}
    issues = _paths(cfg, "risk")
    assert "K_delta" in issues["experiment.noises[0]"]
    ok = {"experiment": {"noises": [{"kind": "car", "theta": [-1.2, -0.5], "delta": 0.5}],
                         "kappa": 541728.0}}
    assert validate_config(ok, "risk") == []


def test_every_issue_is_reported_at_once():
    cfg = {"bogus": 1, "experiment": {"replicates": 10, "mode": "sideways", "colour": "red"}}
    issues = _paths(cfg, "risk")
    assert {"bogus", "experiment.replicates", "experiment.mode", "experiment.colour"} <= set(issues)


def test_rate_study_discrete_guards():
    base = {"mode": "discrete", "n_values": [64, 128, 256, 512]}
    assert "experiment.beta" in _paths({"experiment": dict(base, beta=1.0)}, "rate-study")
    coarse = {"experiment": dict(base, p_rule="cbrt")}
    assert "experiment.p_rule" in _paths(coarse, "rate-study")
    coarse["rate"] = {"allow_coarse_grid": True}
    assert "experiment.p_rule" not in _paths(coarse, "rate-study")
    assert "experiment.n_values" in _paths({"experiment": {"n_values": [64, 128, 256]}}, "rate-study")


def test_kappa_below_noise_bound_rejected():
    cfg = {"experiment": {"noises": [{"kind": "ou", "theta": -1.0}], "kappa": 1.0}}
    assert "experiment.kappa" in _paths(cfg, "risk")


def test_overrides_parse_toml_literals():
    assert parse_override("path.n=50") == (["path", "n"], 50)
    assert parse_override("a.b=[1, 2]") == (["a", "b"], [1, 2])
    assert parse_override("x=hello") == (["x"], "hello")
    cfg = apply_overrides({"path": {"n": 10}}, ["path.n=20", "path.noise={kind='ou', theta=-0.5}"])
    assert cfg["path"] == {"n": 20, "noise": {"kind": "ou", "theta": -0.5}}
    with pytest.raises(ConfigError):
        parse_override("novalue")
    with pytest.raises(ConfigError):
        apply_overrides({"path": 3}, ["path.n=1"])


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("x = [")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    good = tmp_path / "good.toml"
    good.write_text("seed = 4\n[path]\nn = 12\n")
    assert load_config(good) == {"seed": 4, "path": {"n": 12}}


def _run(argv):
    buf = io.StringIO()
    code = cli.run(argv, stdout=buf)
    return code, buf.getvalue()


def test_invalid_configuration_exit_code(tmp_path, capsys):
    out = tmp_path / "o"
    assert _run(["simulate", "--override", "path.p=10", "--out", str(out)])[0] == 2
    assert "path.p" in capsys.readouterr().err
    assert not out.exists()
    assert _run(["simulate", "--override", "path.noise={kind='ou', theta=0.1}"])[0] == 2
    assert _run(["nonsense"])[0] == 2
    assert _run(["simulate", "--threads", "0"])[0] == 2


def test_bad_thread_environment(monkeypatch):
    monkeypatch.setenv("PERISEL_THREADS", "many")
    assert _run(["constants"])[0] == 2


def test_constants_output(tmp_path):
    code, text = _run(["constants", "--out", str(tmp_path / "c")])
    assert code == 0
    doc = json.loads(text)
    assert doc["z_star"] == pytest.approx(3.1461932206205825, abs=1e-12)
    saved = json.loads((tmp_path / "c" / "constants.json").read_text())
    assert saved == doc
    manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert manifest["exit_code"] == 0 and "constants.json" in manifest["files"]
    assert {"seed", "threads", "config", "version", "wall_seconds"} <= set(manifest)


def test_select_output_is_deterministic(tmp_path):
    argv = ["select", "--seed", "3", "--override", "path.n=40", "--override", "path.p=21",
            "--override", "path.signal={kind='terms', terms={'2'=1.5}}", "--override",
            "select.family={kind='ordered', n_max=10}"]
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert _run(argv + ["--out", str(a)])[0] == 0
    assert _run(argv + ["--out", str(b)])[0] == 0
    assert (a / "selection.json").read_bytes() == (b / "selection.json").read_bytes()
    doc = json.loads((a / "selection.json").read_text())
    assert 2 in doc["chosen_m"]


def test_simulate_and_estimate(tmp_path):
    argv = ["--override", "path.n=20", "--override", "path.p=11", "--override",
            "path.noise={kind='ou', theta=-0.5}"]
    assert _run(["simulate", *argv, "--out", str(tmp_path / "s")])[0] == 0
    assert {"path.dy.f64", "path.dxi.f64", "path.json", "manifest.json"} <= {
        p.name for p in (tmp_path / "s").iterdir()}
    code, text = _run(["estimate", *argv, "--override", "estimate.model=[1,2,3]"])
    assert code == 0 and json.loads(text)["loss"] >= 0


def test_manifest_is_written_before_the_work(tmp_path, monkeypatch):
    seen = {}

    def handler(cfg, seed, threads, out, args=None):
        seen["files"] = sorted(p.name for p in out.tmp.iterdir())
        return 0, {}

    monkeypatch.setitem(cli.HANDLERS, "constants", handler)
    assert _run(["constants", "--out", str(tmp_path / "m")])[0] == 0
    assert seen["files"] == ["manifest.json"]


def test_numeric_failure_leaves_no_partial_output(tmp_path, monkeypatch):
    def handler(cfg, seed, threads, out, args=None):
        out.write("partial.csv", "x\n")
        raise ArithmeticError("diverged")

    monkeypatch.setitem(cli.HANDLERS, "constants", handler)
    target = tmp_path / "n"
    assert _run(["constants", "--out", str(target)])[0] == 3
    assert not target.exists()
    assert not any(tmp_path.iterdir())


def test_negative_control_fails_oracle_check(tmp_path):
    argv = ["oracle-check", "--override", "experiment.n_values=[400]", "--override",
            "experiment.replicates=400", "--override", "experiment.penalty_scale=0.01",
            "--override", "experiment.signals=[{kind='terms', terms={'2'=3.0}}]",
            "--out", str(tmp_path / "neg")]
    code, text = _run(argv)
    assert code == 1
    assert json.loads(text)["failed"] >= 1
    assert (tmp_path / "neg" / "oracle.csv").exists()


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "perisel.cli", "constants", "--lambda-star", "1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["lambda_star_used"] == 1.0


SHIPPED_CONFIGS = {"select.toml": "select", "oracle_check.toml": "oracle-check",
                   "rate_study_discrete.toml": "rate-study", "car_risk.toml": "risk",
                   "lower_bound.toml": "lower-bound"}


@pytest.mark.parametrize("name,command", sorted(SHIPPED_CONFIGS.items()))
def test_shipped_configs_validate(name, command):
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / name
    assert validate_config(load_config(path), command) == []


def test_shipped_select_config_runs(tmp_path):
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / "select.toml"
    code, text = _run(["select", "--config", str(path), "--out", str(tmp_path / "s")])
    assert code == 0 and 2 in json.loads(text)["chosen_m"]
