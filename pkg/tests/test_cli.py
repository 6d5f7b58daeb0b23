import json

import pytest

from vfllab.cli import main

CONFIG = {
    "data": {
        "kind": "synthetic",
        "classes": 4,
        "samples": 160,
        "test_samples": 48,
        "feature_dims": [5, 3],
        "cluster_spread": 0.5,
        "seed": 11,
    },
    "federation": {
        "mode": "no_split",
        "bottom_hidden": [8],
        "optimizer": "sgd",
        "learning_rate": 0.05,
        "batch_size": 32,
        "epochs": 2,
    },
    "defense": {"kind": "none"},
    "attacks": [{"kind": "direct", "adversary": 1, "epoch": 0}],
    "seeds": [1],
    "metrics": {"top_k": 2},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(CONFIG))
    return str(path)


def test_validate_echoes_resolved_config(config_path, capsys):
    assert main(["validate", "--config", config_path]) == 0
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["federation"]["mode"] == "no_split"
    assert echoed["seeds"] == [1]
    assert echoed["metrics"]["top_k"] == 2


def test_validate_applies_set_overrides(config_path, capsys):
    code = main([
        "validate", "--config", config_path,
        "--set", "defense.kind=kdk",
        "--set", "defense.kdk.epsilon=0.45",
        "--set", "defense.kdk.k=3",
    ])
    assert code == 0
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["defense"]["kind"] == "kdk"
    assert echoed["defense"]["kdk"]["epsilon"] == 0.45


def test_validate_rejects_bad_field_naming_it(config_path, capsys):
    code = main(["validate", "--config", config_path, "--set", "defense.kind=kdk",
                 "--set", "defense.kdk.epsilon=1.7"])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("config error:")
    assert "defense.kdk.epsilon" in err


def test_missing_config_file_is_a_config_error(tmp_path, capsys):
    code = main(["validate", "--config", str(tmp_path / "nope.json")])
    assert code == 1
    assert "config error" in capsys.readouterr().err


def test_malformed_set_flag(config_path, capsys):
    code = main(["validate", "--config", config_path, "--set", "no_equals_sign"])
    assert code == 1
    assert "--set" in capsys.readouterr().err


def test_train_writes_artifacts_and_summary(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["train", "--config", config_path, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "config" in text and "attack direct" in text
    assert (out / "results.csv").exists()
    payload = json.loads((out / "report.json").read_text())
    assert payload["config"]["defense"]["kind"] == "none"


def test_train_quiet_silences_summary(config_path, tmp_path, capsys):
    assert main(["train", "--config", config_path, "--quiet",
                 "--out", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out == ""


def test_train_verbose_prints_rows(config_path, capsys):
    assert main(["train", "--config", config_path, "--verbose"]) == 0
    assert "seed 1 direct train" in capsys.readouterr().out


def test_runtime_failure_exits_two(tmp_path, capsys):
    doc = json.loads(json.dumps(CONFIG))
    doc["data"] = {
        "kind": "csv",
        "path": str(tmp_path / "missing.csv"),
        "label_column": "y",
        "party_columns": [["a"], ["b"]],
    }
    doc["attacks"] = []
    doc["federation"]["mode"] = "split"
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    code = main(["train", "--config", str(path), "--quiet"])
    assert code == 2
    assert "incomplete" in capsys.readouterr().err


def test_seed_flag_overrides_config(config_path, tmp_path, capsys):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["train", "--config", config_path, "--quiet", "--out", str(out_a)]) == 0
    assert main(["train", "--config", config_path, "--seed", "7", "--quiet",
                 "--out", str(out_b)]) == 0
    a = json.loads((out_a / "report.json").read_text())
    b = json.loads((out_b / "report.json").read_text())
    assert a["config"]["seeds"] == [1]
    assert b["config"]["seeds"] == [7]
    assert a["rows"] != b["rows"]


def test_env_seed_fills_missing_seed_list(tmp_path, capsys, monkeypatch):
    doc = {k: v for k, v in CONFIG.items() if k != "seeds"}
    path = tmp_path / "no_seeds.json"
    path.write_text(json.dumps(doc))
    monkeypatch.setenv("VFL_SEED", "13")
    assert main(["validate", "--config", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["seeds"] == [13]


def test_seed_flag_beats_env(tmp_path, capsys, monkeypatch):
    doc = {k: v for k, v in CONFIG.items() if k != "seeds"}
    path = tmp_path / "no_seeds.json"
    path.write_text(json.dumps(doc))
    monkeypatch.setenv("VFL_SEED", "13")
    assert main(["validate", "--config", str(path), "--seed", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["seeds"] == [4]


def test_env_seed_must_be_integer(tmp_path, capsys, monkeypatch):
    doc = {k: v for k, v in CONFIG.items() if k != "seeds"}
    path = tmp_path / "no_seeds.json"
    path.write_text(json.dumps(doc))
    monkeypatch.setenv("VFL_SEED", "lucky")
    assert main(["validate", "--config", str(path)]) == 1
    assert "VFL_SEED" in capsys.readouterr().err


def test_env_seed_does_not_override_config_seeds(config_path, capsys, monkeypatch):
    monkeypatch.setenv("VFL_SEED", "13")
    assert main(["validate", "--config", config_path]) == 0
    assert json.loads(capsys.readouterr().out)["seeds"] == [1]


def test_sweep_command_fans_out(config_path, tmp_path, capsys):
    out = tmp_path / "sw"
    code = main([
        "sweep", "--config", config_path, "--axis", "federation.epochs",
        "--values", "1,2", "--out", str(out),
    ])
    assert code == 0
    assert "federation.epochs" in capsys.readouterr().out
    assert (out / "trend.csv").exists()
    assert (out / "runs" / "00_1" / "report.json").exists()
    assert (out / "runs" / "01_2" / "report.json").exists()


def test_report_command_reemits_identical_csv(config_path, tmp_path, capsys):
    out = tmp_path / "orig"
    assert main(["train", "--config", config_path, "--quiet", "--out", str(out)]) == 0
    original = (out / "results.csv").read_bytes()
    redone = tmp_path / "redone"
    code = main(["report", "--report", str(out / "report.json"), "--format", "csv",
                 "--out", str(redone), "--quiet"])
    assert code == 0
    assert (redone / "results.csv").read_bytes() == original


def test_report_command_rejects_unknown_format(config_path, tmp_path, capsys):
    out = tmp_path / "orig"
    assert main(["train", "--config", config_path, "--quiet", "--out", str(out)]) == 0
    code = main(["report", "--report", str(out / "report.json"), "--format", "pdf"])
    assert code == 1
    assert "--format" in capsys.readouterr().err


def test_attack_command_replays_transcripts(config_path, tmp_path, capsys):
    doc = json.loads(json.dumps(CONFIG))
    doc["save_transcripts"] = True
    path = tmp_path / "with_transcripts.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "run"
    assert main(["train", "--config", str(path), "--quiet", "--out", str(out)]) == 0
    code = main([
        "attack", "--config", str(path),
        "--transcripts", str(out / "transcripts_seed1.jsonl"),
        "--out", str(tmp_path / "replayed"),
    ])
    assert code == 0
    assert "direct train: asr top1 1.000" in capsys.readouterr().out
    assert (tmp_path / "replayed" / "attack_report.json").exists()
