import json

import pytest

from hypersample.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main


GEN_SPEC = {
    "num_nodes": 48,
    "num_classes": 3,
    "edges_per_class": 6,
    "edge_size": 3,
    "noise_edge_fraction": 0.3,
    "feature_dim": 6,
    "feature_noise_sigma": 0.5,
}

RUN_CFG = {
    "dataset": "data.json",
    "layers": 2,
    "hidden": 8,
    "epochs": 2,
    "mlp_epochs": 5,
    "lr": 1e-3,
    "batch_size": 8,
    "k": 2,
    "num_trajectories": 2,
    "policy_hidden": 8,
    "tau": 1.0,
    "seed": 0,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "gen.json"
    spec.write_text(json.dumps(GEN_SPEC))
    assert main(["generate", "--spec", str(spec), "--out", str(root / "data.json"), "--seed", "4"]) == EXIT_OK
    cfg = root / "run.json"
    cfg.write_text(json.dumps(RUN_CFG))
    return root


class TestGenerate:
    def test_writes_loadable_dataset(self, workdir):
        doc = json.loads((workdir / "data.json").read_text())
        assert doc["num_nodes"] == 48
        assert len(doc["hyperedges"]) == 18

    def test_external_features_sidecar(self, workdir):
        out = workdir / "ext" / "data.json"
        rc = main([
            "generate", "--spec", str(workdir / "gen.json"),
            "--out", str(out), "--seed", "4", "--external-features", "data.feats",
        ])
        assert rc == EXIT_OK
        assert (workdir / "ext" / "data.feats").read_bytes()[:4] == b"HGF1"
        assert json.loads(out.read_text())["features"] == "data.feats"

    def test_unknown_spec_key(self, workdir, capsys):
        bad = workdir / "bad_gen.json"
        bad.write_text(json.dumps({**GEN_SPEC, "typo_field": 1}))
        assert main(["generate", "--spec", str(bad), "--out", str(workdir / "x.json")]) == EXIT_CONFIG
        assert "unknown config key" in capsys.readouterr().err

    def test_invalid_generator_params(self, workdir):
        bad = workdir / "bad_gen2.json"
        bad.write_text(json.dumps({**GEN_SPEC, "edge_size": 1}))
        assert main(["generate", "--spec", str(bad), "--out", str(workdir / "x.json")]) == EXIT_CONFIG


class TestTrain:
    def test_end_to_end_outputs(self, workdir):
        out = workdir / "run1"
        assert main(["train", "--config", str(workdir / "run.json"), "--out", str(out)]) == EXIT_OK
        metrics = (out / "metrics.jsonl").read_text().splitlines()
        assert len(metrics) == RUN_CFG["epochs"]
        row = json.loads(metrics[0])
        assert set(row) == {
            "epoch", "train_loss", "policy_loss", "val_accuracy",
            "test_accuracy", "entropy_mean", "entropy_std", "sampled_node_count",
        }
        timings = (out / "timings.jsonl").read_text().splitlines()
        assert len(timings) == RUN_CFG["epochs"]
        assert (out / "checkpoint.hsmp").exists()
        assert (out / "policy.hsmp").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["epochs"] == 2
        assert 0.0 <= summary["final_test_accuracy"] <= 1.0

    def test_metrics_reproducible_byte_for_byte(self, workdir):
        a, b = workdir / "rba", workdir / "rbb"
        for out in (a, b):
            assert main(["train", "--config", str(workdir / "run.json"), "--out", str(out)]) == EXIT_OK
        assert (a / "metrics.jsonl").read_bytes() == (b / "metrics.jsonl").read_bytes()

    def test_unknown_config_key(self, workdir, capsys):
        bad = workdir / "bad_run.json"
        bad.write_text(json.dumps({**RUN_CFG, "learning_rate": 0.1}))
        assert main(["train", "--config", str(bad), "--out", str(workdir / "x")]) == EXIT_CONFIG
        assert "unknown config key 'learning_rate'" in capsys.readouterr().err

    def test_missing_dataset_key(self, workdir):
        bad = workdir / "bad_run2.json"
        bad.write_text(json.dumps({k: v for k, v in RUN_CFG.items() if k != "dataset"}))
        assert main(["train", "--config", str(bad), "--out", str(workdir / "x")]) == EXIT_CONFIG

    def test_no_out_dir(self, workdir, capsys):
        assert main(["train", "--config", str(workdir / "run.json")]) == EXIT_CONFIG
        assert "no output directory" in capsys.readouterr().err

    def test_invalid_hyperparameter(self, workdir):
        bad = workdir / "bad_run3.json"
        bad.write_text(json.dumps({**RUN_CFG, "lr": -1.0}))
        assert main(["train", "--config", str(bad), "--out", str(workdir / "x")]) == EXIT_CONFIG

    def test_corrupt_dataset_file(self, workdir):
        bad = workdir / "bad_run4.json"
        bad.write_text(json.dumps({**RUN_CFG, "dataset": "broken.json"}))
        (workdir / "broken.json").write_text("{nope")
        assert main(["train", "--config", str(bad), "--out", str(workdir / "x")]) == EXIT_CONFIG

    def test_missing_dataset_file_is_runtime(self, workdir):
        bad = workdir / "bad_run5.json"
        bad.write_text(json.dumps({**RUN_CFG, "dataset": "ghost.json"}))
        assert main(["train", "--config", str(bad), "--out", str(workdir / "x")]) == EXIT_RUNTIME

    def test_bad_seeds(self, workdir):
        bad = workdir / "bad_run6.json"
        bad.write_text(json.dumps({**RUN_CFG, "seeds": "all"}))
        assert main(["ablate", "--config", str(bad), "--out", str(workdir / "x")]) == EXIT_CONFIG


class TestEval:
    def test_full_batch(self, workdir, capsys):
        rc = main([
            "eval", "--checkpoint", str(workdir / "run1" / "checkpoint.hsmp"),
            "--data", str(workdir / "data.json"), "--split", "test", "--seed", "0",
        ])
        assert rc == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["split"] == "test"
        assert 0.0 <= doc["accuracy"] <= 1.0

    def test_sampled_with_policy(self, workdir, capsys):
        rc = main([
            "eval", "--checkpoint", str(workdir / "run1" / "checkpoint.hsmp"),
            "--data", str(workdir / "data.json"), "--k-eval", "2",
            "--policy", str(workdir / "run1" / "policy.hsmp"),
        ])
        assert rc == EXIT_OK
        assert 0.0 <= json.loads(capsys.readouterr().out)["accuracy"] <= 1.0

    def test_bad_checkpoint(self, workdir, tmp_path):
        junk = tmp_path / "junk.hsmp"
        junk.write_bytes(b"XXXX1234")
        rc = main([
            "eval", "--checkpoint", str(junk), "--data", str(workdir / "data.json"),
        ])
        assert rc == EXIT_CONFIG


class TestAblate:
    def test_three_rows_and_artifacts(self, workdir, capsys):
        cfg = workdir / "ablate.json"
        cfg.write_text(json.dumps({**RUN_CFG, "epochs": 1, "seeds": [0, 1]}))
        out = workdir / "abl"
        assert main(["ablate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "ablation.json").read_text())
        assert [r["row"] for r in doc["rows"]] == ["Rdm-GCN", "Ada-GCN", "Ada-GCN+RHA"]
        assert all(len(r["accuracies"]) == 2 for r in doc["rows"])
        assert len(doc["runs"]) == 6
        table = (out / "ablation.txt").read_text()
        assert table.splitlines()[0].split() == ["row", "mean", "std", "epoch_s"]
        assert "Ada-GCN+RHA" in capsys.readouterr().out
        # per-run epoch logs land under runs/<row>-seed<seed>/
        per_run = out / "runs" / "Ada-GCN-seed1" / "metrics.jsonl"
        assert len(per_run.read_text().splitlines()) == 1
