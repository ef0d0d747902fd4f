import json

import pytest

from dqct.cli import main


def test_gen_scenarios_writes_count(tmp_path, capsys):
    out = tmp_path / "left"
    assert main(["gen-scenarios", "--family", "left", "--count", "100", "--seed", "1", "--out-dir", str(out)]) == 0
    assert len(list(out.glob("*.json"))) == 100
    assert "wrote 100 left scenarios" in capsys.readouterr().out


def test_eval_astar_writes_tables(tmp_path):
    dirs = []
    for fam in ("left", "forward", "right"):
        d = tmp_path / fam
        assert main(["gen-scenarios", "--family", fam, "--count", "2", "--seed", "3", "--out-dir", str(d)]) == 0
        dirs += ["--scenario-dir", str(d)]
    out = tmp_path / "astar.csv"
    assert main(["eval", "--method", "astar", *dirs, "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("method,family,episodes,successes,success_rate")
    assert len(lines) == 4
    md = out.with_suffix(".md").read_text().splitlines()
    assert len(md[0].strip("|").split("|")) == 1 + 4 * 3
    assert md[2].startswith("| A* |")
    assert out.with_suffix(".episodes.csv").exists()


def test_train_then_eval_policy(tmp_path):
    d = tmp_path / "s"
    main(["gen-scenarios", "--family", "straight", "--count", "2", "--seed", "4", "--out-dir", str(d)])
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"train": {"rollout_horizon": 50, "num_envs": 2, "epochs_per_batch": 1}}))
    ck = tmp_path / "p.json"
    args = ["train", "--scenario-dir", str(d), "--config", str(cfg), "--out", str(ck), "--steps", "200", "--quiet"]
    assert main(args) == 0
    assert ck.exists() and ck.with_suffix(".curve.csv").exists()
    out = tmp_path / "m.csv"
    assert main(["eval", "--method", "blct", "--checkpoint", str(ck), "--scenario-dir", str(d), "--out", str(out)]) == 0


def test_replay_bundled_sample(tmp_path):
    out = tmp_path / "r.svg"
    assert main(["replay", "--out", str(out)]) == 0
    assert out.read_text().startswith("<svg")


def test_missing_inputs_give_messages(tmp_path, capsys):
    assert main(["eval", "--method", "blct", "--scenario-dir", str(tmp_path), "--out", str(tmp_path / "x.csv")]) == 1
    assert "--checkpoint is required" in capsys.readouterr().err
    assert main(["eval", "--method", "astar", "--scenario-dir", str(tmp_path / "nope"), "--out", "x.csv"]) == 1
    assert "scenario directory not found" in capsys.readouterr().err
    assert main(["replay", "--log", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "o.svg")]) == 1
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"train": {"learning_rat": 1}}')
    assert main(["train", "--scenario-dir", str(tmp_path), "--config", str(cfg), "--out", "c.json"]) == 1
    assert "learning_rat" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["gen-scenarios", "--family", "left", "--bogus"])
    assert exc.value.code == 2
