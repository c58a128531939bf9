import json

import numpy as np
import pytest

from recfm.cli import main
from recfm.tensor_io import read_tensor


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run_cli("gen-data", "--dataset", "advection", "--trajectories", "10",
                   "--size", "8", "--frames", "10", "--out", str(root / "data"),
                   "--seed", "3") == 0
    assert run_cli("train", "--data", str(root / "data"), "--out", str(root / "model"),
                   "--seed", "1", "--set", "train.iterations=40",
                   "--set", "model.hidden_widths=[16]",
                   "--set", "train.batch_size=8") == 0
    return root


def test_gen_data_pendulum(tmp_path):
    out = tmp_path / "p"
    assert run_cli("gen-data", "--dataset", "pendulum", "--alpha", "0.8",
                   "--out", str(out), "--seed", "0") == 0
    assert (out / "trace.csv").exists()
    speeds = (out / "speeds.csv").read_text().splitlines()
    assert speeds[0] == "bounce,speed"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == "pendulum"
    assert "versions" in manifest and "timings" in manifest


def test_gen_data_writes_manifest_and_lock_released(workspace):
    manifest = json.loads((workspace / "data" / "manifest.json").read_text())
    assert manifest["kind"] == "advection"
    assert manifest["command"] == "gen-data"
    assert not (workspace / "data" / "lock").exists()


def test_train_outputs(workspace):
    out = workspace / "model"
    assert (out / "train_curve.csv").exists()
    assert (out / "loss_curve.svg").exists()
    ckpt = json.loads((out / "checkpoint.json").read_text())
    assert ckpt["data"]["kind"] == "advection"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["train"]["iterations"] == 40


def test_sample_and_eval(workspace, tmp_path):
    sdir = tmp_path / "s"
    assert run_cli("sample", "--ckpt", str(workspace / "model"), "--out", str(sdir),
                   "--steps", "1", "--members", "3", "--seed", "5") == 0
    ens = read_tensor(sdir / "ensemble_000.rft1")
    assert ens.shape[0] == 3  # members

    edir = tmp_path / "e"
    assert run_cli("eval", "--ckpt", str(workspace / "model"), "--out", str(edir),
                   "--steps", "1", "--members", "3", "--seed", "5") == 0
    lines = (edir / "metrics.csv").read_text().splitlines()
    assert lines[0] == "dataset,split,model,K,M,crps,mse,ssr,ke_accuracy,wave_residual,seed"
    cells = lines[1].split(",")
    assert cells[0] == "advection" and cells[3] == "1" and cells[4] == "3"


def test_eval_reruns_bitwise(workspace, tmp_path):
    args = ("eval", "--ckpt", str(workspace / "model"), "--steps", "1",
            "--members", "2", "--seed", "9")
    assert run_cli(*args, "--out", str(tmp_path / "a")) == 0
    assert run_cli(*args, "--out", str(tmp_path / "b")) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == \
           (tmp_path / "b" / "metrics.csv").read_bytes()


def test_verify_gradcheck(tmp_path):
    out = tmp_path / "v"
    assert run_cli("verify", "--check", "gradcheck", "--out", str(out),
                   "--seed", "0") == 0
    payload = json.loads((out / "gradcheck.json").read_text())
    assert payload["passed"] is True
    assert payload["stats"]["max_rel_error"] <= 1e-5


def test_verify_marginal(tmp_path):
    out = tmp_path / "v"
    assert run_cli("verify", "--check", "marginal", "--out", str(out),
                   "--n", "20000", "--seed", "1") == 0
    assert (out / "marginal_alpha_0.5.json").exists()
    assert (out / "verify_summary.csv").exists()


def test_verify_truncation_analytic(tmp_path):
    out = tmp_path / "v"
    assert run_cli("verify", "--check", "truncation", "--out", str(out),
                   "--seed", "2") == 0
    payload = json.loads((out / "truncation.json").read_text())
    assert -1.2 <= payload["stats"]["slope"] <= -0.8


def test_verify_on_checkpoint(workspace, tmp_path):
    out = tmp_path / "v"
    assert run_cli("verify", "--check", "consistency", "--ckpt",
                   str(workspace / "model"), "--out", str(out), "--n", "32",
                   "--seed", "3") == 0
    assert (out / "consistency_pde.json").exists()


def test_ablate(workspace, tmp_path):
    out = tmp_path / "ab"
    assert run_cli("ablate", "--param", "lambda", "--values", "0,1",
                   "--data", str(workspace / "data"), "--out", str(out),
                   "--seed", "1", "--set", "train.iterations=20",
                   "--set", "model.hidden_widths=[16]",
                   "--set", "train.batch_size=8", "--members", "2") == 0
    lines = (out / "ablation.csv").read_text().splitlines()
    assert lines[0].startswith("param,value,seed")
    assert len(lines) == 3
    assert (out / "ablation.svg").exists()


def test_unknown_flag_exits_one():
    assert run_cli("train", "--frobnicate") == 1


def test_unknown_subcommand_exits_one():
    assert run_cli("bogus") == 1


def test_missing_input_exits_one(tmp_path):
    assert run_cli("train", "--data", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "o")) == 1


def test_malformed_config_exits_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli("train", "--config", str(bad), "--out", str(tmp_path / "o")) == 1


def test_lock_prevents_concurrent_writers(tmp_path):
    out = tmp_path / "locked"
    out.mkdir()
    (out / "lock").touch()
    assert run_cli("gen-data", "--dataset", "pendulum", "--out", str(out)) == 1


def test_env_seed_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("RECFM_SEED", "77")
    out = tmp_path / "env"
    assert run_cli("gen-data", "--dataset", "gaussian", "--n", "16", "--dim", "1",
                   "--out", str(out)) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 77


def test_bad_env_seed_exits_one(tmp_path, monkeypatch):
    monkeypatch.setenv("RECFM_SEED", "not-a-seed")
    assert run_cli("gen-data", "--dataset", "gaussian", "--n", "16",
                   "--out", str(tmp_path / "o")) == 1


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["train", "--help"])
    text = capsys.readouterr().out
    for flag in ("--data", "--out", "--config", "--set", "--seed"):
        assert flag in text
