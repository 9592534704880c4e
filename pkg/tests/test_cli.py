import csv
import json

import pytest

from maskwin.cli import ConfigError, config_to_json, load_config, main

SMOKE = {
    "task": {"n": 1024, "informative_span": [312, 712], "n_train": 40, "n_test": 20},
    "train": {"epochs": 2, "batch_size": 20},
}


def write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_default_config_is_valid():
    task, cfg, out = load_config(None, environ={})
    assert task.n == 4096 and cfg.epochs >= 1 and out is None


def test_unknown_key_named(tmp_path, capsys):
    path = write(tmp_path, {"train": {"lamda": 0.5}})
    assert main(["train", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert "train.lamda" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="'lamda'"):
        load_config(write(tmp_path, {"lamda": 0.5}), environ={})


def test_bad_value_type_named(tmp_path):
    with pytest.raises(ConfigError, match="train.epochs"):
        load_config(write(tmp_path, {"train": {"epochs": "ten"}}), environ={})
    with pytest.raises(ConfigError, match="train"):
        load_config(write(tmp_path, {"train": {"lambda": -1}}), environ={})


def test_missing_config_file(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_seed_env_override(tmp_path):
    task, cfg, _ = load_config(write(tmp_path, SMOKE), environ={"MASKWIN_SEED": "7"})
    assert task.seed == 7 and cfg.seed == 7
    with pytest.raises(ConfigError, match="MASKWIN_SEED"):
        load_config(None, environ={"MASKWIN_SEED": "x"})


def test_lambda_spelling_roundtrip(tmp_path):
    task, cfg, _ = load_config(write(tmp_path, {"train": {"lambda": 0.25}}), environ={})
    assert cfg.lam == 0.25
    doc = config_to_json(task, cfg.resolve(task))
    again, cfg2, _ = load_config(write(tmp_path, doc, "resolved.json"), environ={})
    assert again == task and cfg2 == cfg.resolve(task)


def test_train_smoke_and_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv("MASKWIN_SEED", raising=False)
    path = write(tmp_path, SMOKE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", path, "--out", str(a)]) == 0
    assert main(["train", "--config", path, "--out", str(b)]) == 0
    assert len(rows(a / "runlog.csv")) == 2
    assert (a / "runlog.csv").read_bytes() == (b / "runlog.csv").read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert set(summary["energy"]) >= {"macs", "mac_ratio_vs_reference", "param_count"}
    # the resolved config reproduces the run
    c = tmp_path / "c"
    assert main(["train", "--config", str(a / "resolved_config.json"), "--out", str(c)]) == 0
    assert (c / "runlog.csv").read_bytes() == (a / "runlog.csv").read_bytes()


def test_divergence_exit_code(tmp_path, monkeypatch, capsys):
    from maskwin import cli
    from maskwin.train import DivergenceError

    def blow_up(cfg, task):
        raise DivergenceError(2, float("nan"))

    monkeypatch.setattr(cli, "train", blow_up)
    assert main(["train", "--config", write(tmp_path, SMOKE), "--out", str(tmp_path / "o")]) == 3
    assert "epoch 2" in capsys.readouterr().err


def test_grid_two_by_two(tmp_path, monkeypatch):
    monkeypatch.delenv("MASKWIN_SEED", raising=False)
    cfg = json.loads(json.dumps(SMOKE))
    cfg["train"]["epochs"] = 1
    out = tmp_path / "g"
    assert main(["grid", "--config", write(tmp_path, cfg), "--m-grid", "400,800",
                 "--s-grid", "200,513", "--out", str(out)]) == 0
    table = rows(out / "grid.csv")
    assert len(table) == 4 and list(table[0]) == ["m", "s", "accuracy", "mac_ratio"]
    best = json.loads((out / "best.json").read_text())
    assert any(float(r["m"]) == best["m"] and float(r["s"]) == best["s"] for r in table)


def test_grid_empty_is_usage_error(tmp_path):
    assert main(["grid", "--m-grid", "", "--s-grid", "100", "--out", str(tmp_path)]) == 2


def test_gradcheck_ok_and_negative_control(capsys):
    assert main(["gradcheck", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert sum(line.split()[0].startswith(("window", "spectral", "end_to_end", "backbone"))
               for line in out.splitlines() if line.strip()) >= 6
    assert main(["gradcheck", "--corrupt", "end_to_end_hann"]) == 1
    assert "end_to_end_hann" in capsys.readouterr().err


def _fake_run(d, lam, m_ms):
    d.mkdir()
    (d / "runlog.csv").write_text(
        "epoch,m_samples,m_ms,s_bins,s_hz,train_loss,test_acc,penalty,mac_ratio\n"
        f"1,1.0,{m_ms},2.0,8.0,0.1,0.9,0.0,0.5\n")
    (d / "resolved_config.json").write_text(json.dumps({"train": {"lambda": lam}}))


def test_report_sorts_by_lambda(tmp_path):
    dirs = []
    for name, lam, m_ms in [("r1", 1.0, 100.0), ("r0", 0.0, 200.0), ("r5", 0.5, 150.0)]:
        _fake_run(tmp_path / name, lam, m_ms)
        dirs.append(str(tmp_path / name))
    out = tmp_path / "rep"
    assert main(["report", "--run", *dirs, "--out", str(out)]) == 0
    assert len(rows(out / "tradeoff.csv")) == 3
    assert [float(r["lambda"]) for r in rows(out / "penalty_sweep.csv")] == [0.0, 0.5, 1.0]


def test_report_single_run_and_missing(tmp_path):
    _fake_run(tmp_path / "r", 0.5, 100.0)
    assert main(["report", "--run", str(tmp_path / "r"), "--out", str(tmp_path / "o")]) == 0
    assert len(rows(tmp_path / "o" / "tradeoff.csv")) == 1
    assert main(["report", "--run", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
