import csv
import json

import numpy as np
import pytest

from shadowmia import pipeline
from shadowmia.cli import bundled_config_path, main
from shadowmia.config import ExperimentConfig
from shadowmia.dataset import SynthConfig, generate_synthetic, write_csv
from shadowmia.errors import ConfigError, DataError
from shadowmia.metrics import AttackReport


def tiny_doc(**overrides):
    doc = {
        "data": {
            "synthetic": {
                "class_count": 3, "feature_dim": 6, "per_class_counts": [120, 80, 40],
                "class_separation": 1.5, "noise_scale": 1.0, "seed": 0,
            },
            "split": {"n_victim_train": 100, "n_victim_test": 40, "n_shadow_pool": 80, "seed": 1},
        },
        "victim": {"hidden_sizes": [16], "init_seed": 2,
                   "train": {"learning_rate": 0.1, "max_epochs": 6, "batch_size": 16, "seed": 3}},
        "shadow": {"init_seed": 4, "train": {"learning_rate": 0.1, "max_epochs": 6, "batch_size": 16, "seed": 5}},
        "attack": {"regularization": 1e-3, "epochs": 200, "seed": 6, "feature_mode": "posterior_sorted"},
        "evaluation": {"balance": True, "seed": 7},
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def tiny():
    return ExperimentConfig.from_dict(tiny_doc())


@pytest.fixture
def tiny_path(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(json.dumps(tiny_doc()))
    return p


# -- config --------------------------------------------------------------------

def test_config_round_trip(tmp_path, tiny):
    tiny.save(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json") == tiny


@pytest.mark.parametrize("name", ["highgap", "lowgap"])
def test_bundled_configs_load(name):
    cfg = ExperimentConfig.load(bundled_config_path(name))
    assert cfg.data.split.n_victim_train == 1500
    assert cfg.data.split.n_victim_test == 462
    assert cfg.data.split.n_shadow_pool == 1300


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict(tiny_doc(extra=1))
    doc = tiny_doc()
    doc["victim"]["train"]["momentum"] = 0.9
    with pytest.raises(ConfigError, match="momentum"):
        ExperimentConfig.from_dict(doc)


def test_config_requires_one_data_source():
    doc = tiny_doc()
    doc["data"]["csv_path"] = "x.csv"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_fingerprint_ignores_output_dir(tiny):
    import dataclasses

    moved = dataclasses.replace(tiny, output_dir="elsewhere")
    assert moved.fingerprint() == tiny.fingerprint()
    assert len(tiny.fingerprint()) == 64
    assert tiny.with_epochs(7).fingerprint() != tiny.fingerprint()


def test_with_seed_derives_stage_seeds(tiny):
    cfg = tiny.with_seed(100)
    assert cfg.seed == 100
    assert cfg.data.synthetic.seed == 100 and cfg.data.split.seed == 101
    assert (cfg.victim.init_seed, cfg.victim.train.seed) == (102, 103)
    assert (cfg.shadow.init_seed, cfg.shadow.train.seed) == (104, 105)
    assert cfg.attack.seed == 106 and cfg.evaluation.seed == 107


# -- pipeline ----------------------------------------------------------------------

ARTIFACTS = [
    "victim_train.csv", "victim_test.csv", "shadow_pool.csv", "victim_params.json", "victim_metrics.json",
    "shadow_params.json", "attack_model.json", "attack_train.csv", "membership.csv", "report.json",
    "per_class.csv", "config.json",
]


def test_run_pipeline_writes_artifacts_and_is_deterministic(tmp_path, tiny):
    rep = pipeline.run_pipeline(tiny, tmp_path / "a")
    pipeline.run_pipeline(tiny, tmp_path / "b")
    for name in ARTIFACTS:
        assert (tmp_path / "a" / name).is_file(), name
    for name in ("report.json", "membership.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert rep.config_fingerprint == tiny.fingerprint()
    assert sum(c.evaluated for c in rep.per_class_counts.values()) == 80


def test_report_reproducible_offline(tmp_path, tiny):
    rep = pipeline.run_pipeline(tiny, tmp_path)
    before = (tmp_path / "report.json").read_bytes()
    (tmp_path / "report.json").unlink()
    again = pipeline.make_report(tiny, tmp_path)
    assert again == rep
    assert (tmp_path / "report.json").read_bytes() == before


def test_unbalanced_scores_everything(tmp_path, tiny):
    import dataclasses

    cfg = dataclasses.replace(tiny, evaluation=dataclasses.replace(tiny.evaluation, balance=False))
    rep = pipeline.run_pipeline(cfg, tmp_path)
    assert sum(c.evaluated for c in rep.per_class_counts.values()) == 140


def test_fresh_shadow_init(tmp_path):
    doc = tiny_doc()
    doc["shadow"]["shadow_init"] = "fresh"
    rep = pipeline.run_pipeline(ExperimentConfig.from_dict(doc), tmp_path)
    assert 0.0 <= rep.overall_accuracy <= 1.0


def test_csv_data_source(tmp_path):
    ds = generate_synthetic(SynthConfig(3, 6, (120, 80, 40), 1.5, 1.0, seed=0))
    write_csv(ds, tmp_path / "all.csv")
    doc = tiny_doc()
    doc["data"] = {"csv_path": "all.csv", "split": doc["data"]["split"]}
    (tmp_path / "c.cfg").write_text(json.dumps(doc))
    cfg = ExperimentConfig.load(tmp_path / "c.cfg")
    a = pipeline.run_pipeline(cfg, tmp_path / "csv")
    b = pipeline.run_pipeline(ExperimentConfig.from_dict(tiny_doc()), tmp_path / "synth")
    assert a.overall_accuracy == b.overall_accuracy
    assert (tmp_path / "csv" / "membership.csv").read_bytes() == (tmp_path / "synth" / "membership.csv").read_bytes()


def test_missing_csv_is_data_error(tmp_path):
    doc = tiny_doc()
    doc["data"] = {"csv_path": "nope.csv", "split": doc["data"]["split"]}
    (tmp_path / "c.cfg").write_text(json.dumps(doc))
    with pytest.raises(DataError, match=r"^\[gen-data\]"):
        pipeline.run_pipeline(ExperimentConfig.load(tmp_path / "c.cfg"), tmp_path / "o")


def test_sweep_matches_standalone(tmp_path, tiny):
    results = pipeline.sweep_overfitting(tiny, [2, 6], tmp_path)
    assert [e for e, _ in results] == [2, 6]
    standalone = pipeline.run_pipeline(tiny.with_epochs(2), tmp_path / "alone")
    assert results[0][1] == standalone
    rows = list(csv.reader((tmp_path / "sweep.csv").open()))
    assert rows[0] == ["epochs", "gap", "attack_accuracy", "attack_precision"]
    assert [r[0] for r in rows[1:]] == ["2", "6"]


def test_sweep_gap_grows_on_highgap(tmp_path):
    cfg = ExperimentConfig.load(bundled_config_path("highgap"))
    (e5, r5), (e80, r80) = pipeline.sweep_overfitting(cfg, [5, 80], tmp_path)
    assert r80.generalization_gap >= r5.generalization_gap


@pytest.mark.parametrize("levels", [[5], [5, 5], [20, 5], [0, 3]])
def test_sweep_rejects_bad_levels(tmp_path, tiny, levels):
    with pytest.raises(ConfigError):
        pipeline.sweep_overfitting(tiny, levels, tmp_path)


# -- cli ----------------------------------------------------------------------------

def test_cli_stages_equal_run(tmp_path, tiny_path, capsys):
    staged, whole = tmp_path / "staged", tmp_path / "whole"
    for cmd in ("gen-data", "train-victim", "train-shadow", "attack", "report"):
        assert main([cmd, "--config", str(tiny_path), "--out", str(staged)]) == 0
    assert main(["run", "--config", str(tiny_path), "--out", str(whole)]) == 0
    for name in ("report.json", "membership.csv", "attack_model.json", "shadow_params.json"):
        assert (staged / name).read_bytes() == (whole / name).read_bytes(), name
    assert "attack accuracy" in capsys.readouterr().out


def test_cli_seed_and_balance_overrides(tmp_path, tiny_path):
    assert main(["run", "--config", str(tiny_path), "--out", str(tmp_path), "--seed", "9", "--balance", "false"]) == 0
    rep = AttackReport.load(tmp_path / "report.json")
    assert rep.seed == 9
    assert sum(c.evaluated for c in rep.per_class_counts.values()) == 140
    cfg = ExperimentConfig.load(tmp_path / "config.json")
    assert cfg.victim.train.seed == 12 and cfg.evaluation.balance is False


def test_cli_sweep(tmp_path, tiny_path, capsys):
    assert main(["sweep", "--config", str(tiny_path), "--out", str(tmp_path), "--epochs", "2,4"]) == 0
    assert (tmp_path / "epochs_4" / "report.json").is_file()
    assert "epochs=   4" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, tiny_path):
    assert main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["run", "--config", str(tiny_path), "--out", str(tmp_path), "--seed", "-1"]) == 1
    assert main(["sweep", "--config", str(tiny_path), "--out", str(tmp_path), "--epochs", "5"]) == 1
    assert main(["train-victim", "--config", str(tiny_path), "--out", str(tmp_path / "empty")]) == 2
    assert main(["report", "--config", str(tiny_path), "--out", str(tmp_path / "empty")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 1


def test_cli_training_failure_exit_code(tmp_path):
    doc = tiny_doc()
    doc["victim"]["train"]["learning_rate"] = 1e100
    doc["victim"]["hidden_sizes"] = [64, 64]
    p = tmp_path / "div.cfg"
    p.write_text(json.dumps(doc))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_cli_evaluation_failure_exit_code(tmp_path, tiny_path):
    assert main(["run", "--config", str(tiny_path), "--out", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "victim_metrics.json").read_text())
    metrics["train_accuracy"] = 1.5
    (tmp_path / "victim_metrics.json").write_text(json.dumps(metrics))
    assert main(["report", "--config", str(tiny_path), "--out", str(tmp_path)]) == 4


def test_cli_bundled_name(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["gen-data", "--config", "lowgap", "--out", "o"]) == 0
    assert np.loadtxt(tmp_path / "o" / "victim_test.csv", delimiter=",", skiprows=1).shape[0] == 462
