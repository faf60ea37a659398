import copy
import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from drivershare.cli import main
from drivershare.config import ConfigError, default_config_path, load_config, parse_config
from drivershare.data import load_trajectory_csv

SMALL = {"training": {"local_updates": 5, "learning_rate": 0.05, "batch_size": 32}, "federation": {"rounds": 3}}


def base_raw():
    return yaml.safe_load(default_config_path().read_text())


def write_config(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return path


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def small_raw(**updates):
    raw = base_raw()
    raw.update(copy.deepcopy(SMALL))
    raw.update(updates)
    return raw


# --- config -------------------------------------------------------------------


def test_default_config_loads():
    cfg = load_config()
    assert cfg.rounds == 20 and cfg.training.local_updates == 50
    assert cfg.personalization.steps == 20 * 50 // 4
    assert set(cfg.controllers) >= {"aggressive", "passive"}
    assert cfg.controllers["aggressive"].gains == (0.01, 10.0, -0.01)
    assert cfg.controllers["passive"].time_gap == 2.5


def test_with_seed_threads_through():
    cfg = load_config().with_seed(17)
    assert cfg.training.seed == cfg.personalization.training.seed == 17
    assert cfg.echo()["seed"] == 17


@pytest.mark.parametrize(
    "mutate, pattern",
    [
        (lambda r: r.pop("training"), "missing key training"),
        (lambda r: r["initial_params"].update(sigma0=-1), "hyperparameters"),
        (lambda r: r["experiment1"].update(controller="nope"), "unknown controller"),
        (lambda r: r["experiment1"]["scenarios"]["vehicle_1"].update(label="cruise"), "unknown label"),
        (lambda r: r["experiment1"].update(noise_std=-0.1), "noise_std"),
        (lambda r: r["experiment2"].update(evaluate_on="heldout"), "heldout_leader"),
        (lambda r: r["training"].update(batch_size="many"), "expected int"),
        (lambda r: r["experiment1"]["test"].update(durations=[1, 2]), "four phase durations"),
    ],
)
def test_config_errors(mutate, pattern, tmp_path):
    raw = base_raw()
    mutate(raw)
    with pytest.raises(ConfigError, match=pattern):
        parse_config(raw, tmp_path)


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "data").mkdir()
    (tmp_path / "data" / "a.csv").write_text("time_s,leader_speed_mps,follower_speed_mps\n0,1,1\n0.1,1,1\n")
    raw = small_raw(train={"datasets": ["data/a.csv"]})
    cfg = load_config(write_config(tmp_path, raw))
    assert cfg.train.datasets == (tmp_path / "data" / "a.csv",)
    raw["train"]["datasets"] = ["data/missing.csv"]
    with pytest.raises(ConfigError, match="missing.csv"):
        load_config(write_config(tmp_path, raw))


# --- simulate -----------------------------------------------------------------


def test_simulate_default(tmp_path):
    res = invoke("simulate", "--out", tmp_path)
    assert res.exit_code == 0, res.output
    assert "collisions: 0" in res.output
    assert len(load_trajectory_csv(tmp_path / "simulate_aggressive.csv")) == 197


def test_simulate_constant_leader_equilibrium(tmp_path):
    raw = base_raw()
    raw["simulate"] = {"controller": "passive", "leader": {"base_speed": 20.0, "dip_speed": 20.0}}
    res = invoke("simulate", "--config", write_config(tmp_path, raw), "--out", tmp_path)
    assert res.exit_code == 0, res.output
    tr = load_trajectory_csv(tmp_path / "simulate_passive.csv")
    assert np.max(np.abs(tr.follower_speed - tr.leader_speed)) < 1e-9


def test_missing_config_exit_2(tmp_path):
    missing = tmp_path / "nowhere.yaml"
    res = invoke("simulate", "--config", missing)
    assert res.exit_code == 2
    assert str(missing) in res.output


def test_bad_seed_exit_2():
    assert invoke("simulate", "--seed", -1).exit_code == 2


# --- experiment ---------------------------------------------------------------


def test_experiment2_table_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    res = invoke("experiment", "--which", 2, "--out", a)
    assert res.exit_code == 0, res.output
    assert "Pooled data" in res.output and "Knowledge sharing & personalization" in res.output
    rows = [l for l in res.output.splitlines() if l.startswith(("Pooled", "Knowledge"))]
    assert [len(r.split()[-2:]) for r in rows] == [2, 2]
    assert invoke("experiment", "--which", 2, "--out", b).exit_code == 0
    assert (a / "experiment2_report.json").read_bytes() == (b / "experiment2_report.json").read_bytes()


def test_experiment1_two_scenarios_exit_2(tmp_path):
    raw = base_raw()
    del raw["experiment1"]["scenarios"]["vehicle_3"]
    res = invoke("experiment", "--which", 1, "--config", write_config(tmp_path, raw))
    assert res.exit_code == 2
    assert "vehicle_3" in res.output


def test_seed_override_changes_report(tmp_path):
    raw = small_raw()
    path = write_config(tmp_path, raw)
    assert invoke("experiment", "--which", 2, "--config", path, "--out", tmp_path / "s0").exit_code == 0
    assert invoke("experiment", "--which", 2, "--config", path, "--out", tmp_path / "s5", "--seed", 5).exit_code == 0
    r0 = json.loads((tmp_path / "s0" / "experiment2_report.json").read_text())
    r5 = json.loads((tmp_path / "s5" / "experiment2_report.json").read_text())
    assert r5["config"]["seed"] == 5
    assert r0["table"] != r5["table"]


def test_pipeline_failure_exit_3(tmp_path):
    raw = small_raw()
    raw["training"]["learning_rate"] = 1e9
    raw["initial_params"] = {"sigma0": 1e-6, "length_scale": 1e-6, "sigma_eps": 1e-6}
    res = invoke("experiment", "--which", 2, "--config", write_config(tmp_path, raw), "--out", tmp_path)
    assert res.exit_code == 3
    assert "pooled training" in res.output or "federation" in res.output


def test_internal_error_exit_1(monkeypatch, tmp_path):
    from drivershare import cli

    def boom(cfg):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(cli, "run_experiment2", boom)
    res = invoke("experiment", "--which", 2, "--out", tmp_path)
    assert res.exit_code == 1 and "internal error" in res.output


# --- train --------------------------------------------------------------------


@pytest.fixture
def train_setup(tmp_path):
    from drivershare.cfsim import AGGRESSIVE, generate_oscillation, simulate_follower
    from drivershare.data import Trajectory, save_trajectory_csv

    lead = generate_oscillation(15.0, 5.0)
    tr = Trajectory(0.1, lead.speeds, simulate_follower(lead, AGGRESSIVE).follower.speeds)
    save_trajectory_csv(tr, tmp_path / "car_a.csv")
    raw = small_raw(train={"datasets": ["car_a.csv"]})
    return tmp_path, raw


def read_params(path):
    return json.loads(path.read_text())


def test_train_federated_single_vehicle_equals_local(train_setup):
    d, raw = train_setup
    cfg = write_config(d, raw)
    assert invoke("train", "local", "--config", cfg, "--out", d / "o").exit_code == 0
    assert invoke("train", "federated", "--config", cfg, "--out", d / "o").exit_code == 0
    local = read_params(d / "o" / "train_local.json")
    fed = read_params(d / "o" / "train_federated.json")
    assert fed["params"]["global"]["log"] == local["params"]["car_a"]["log"]
    assert len(fed["history"]["rounds"]) == raw["federation"]["rounds"]


def test_train_pooled_and_personalize(train_setup):
    d, raw = train_setup
    cfg = write_config(d, raw)
    assert invoke("train", "pooled", "--config", cfg, "--out", d / "o").exit_code == 0
    anchor = d / "o" / "train_pooled.json"
    raw2 = copy.deepcopy(raw)
    raw2["train"]["anchor"] = str(anchor)
    raw2["personalization"]["steps"] = 0
    res = invoke("train", "personalize", "--config", write_config(d, raw2, "p.yaml"), "--out", d / "o")
    assert res.exit_code == 0, res.output
    out = read_params(d / "o" / "train_personalize.json")
    assert out["params"]["car_a"] == read_params(anchor)["params"]["pooled"]


def test_train_personalize_needs_anchor(train_setup):
    d, raw = train_setup
    res = invoke("train", "personalize", "--config", write_config(d, raw), "--out", d)
    assert res.exit_code == 2 and "anchor" in res.output


def test_train_bad_csv_exit_2(train_setup):
    d, raw = train_setup
    (d / "car_a.csv").write_text("time_s,leader_speed_mps,follower_speed_mps\n0,1,1\n0.2,1,1\n0.3,1,1\n")
    res = invoke("train", "local", "--config", write_config(d, raw), "--out", d)
    assert res.exit_code == 2 and "line 4" in res.output
