import json

import numpy as np
import pytest

from graphstack.cli import main
from graphstack.dataset_io import read_predictions_csv


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    """A synth dataset plus a train config, shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    spec = {"task": "classification", "num_nodes": 150, "seed": 5,
            "features": {"block_shift": 0.8, "noise_sigma": 1.0}}
    spec_path = root / "synth.json"
    spec_path.write_text(json.dumps(spec))
    assert main(["synth", str(spec_path), "--out", str(root / "data")]) == 0
    config = {
        "dataset": {"edges": "data/edges.txt",
                    "features": "data/features.csv",
                    "labels": "data/labels.csv",
                    "split": "data/split.csv"},
        "stack": {"num_layers": 1, "num_folds": 2,
                  "propagation": {"lambda": 0.9, "num_steps": 1},
                  "step_subset": [0, 1], "seed": 0},
        "rosters": [[{"family": "logistic_linear",
                      "hyperparameters": {"epochs": 20}}]],
        "metric": "accuracy",
        "output_dir": "out",
    }
    cfg_path = root / "run.json"
    cfg_path.write_text(json.dumps(config))
    return root, cfg_path, config


class TestTrain:
    def test_smoke_writes_outputs(self, toy_run):
        root, cfg_path, _ = toy_run
        assert main(["train", str(cfg_path)]) == 0
        assert (root / "out" / "predictions.csv").exists()
        assert (root / "out" / "manifest.jsonl").exists()
        assert (root / "out" / "weights.json").exists()
        records = [json.loads(line) for line in
                   (root / "out" / "manifest.jsonl").read_text().splitlines()]
        kinds = {r["record"] for r in records}
        assert {"config", "layer_model", "ensemble", "final"} <= kinds

    def test_manifest_config_reruns_identically(self, toy_run, tmp_path):
        root, cfg_path, _ = toy_run
        main(["train", str(cfg_path)])
        first = (root / "out" / "predictions.csv").read_bytes()
        records = [json.loads(line) for line in
                   (root / "out" / "manifest.jsonl").read_text().splitlines()]
        echoed = next(r for r in records if r["record"] == "config")["config"]
        echoed["output_dir"] = str(tmp_path / "out2")
        # dataset paths in the echo are relative to the original config
        for key, value in echoed["dataset"].items():
            echoed["dataset"][key] = str(root / value)
        new_cfg = tmp_path / "rerun.json"
        new_cfg.write_text(json.dumps(echoed))
        assert main(["train", str(new_cfg)]) == 0
        assert (tmp_path / "out2" / "predictions.csv").read_bytes() == first

    def test_unknown_config_key_exit_1(self, toy_run, tmp_path):
        _, _, config = toy_run
        bad = dict(config)
        bad["surprise"] = True
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        assert main(["train", str(path)]) == 1

    def test_missing_file_exit_2(self, toy_run, tmp_path):
        root, _, config = toy_run
        bad = json.loads(json.dumps(config))
        bad["dataset"]["edges"] = str(root / "data" / "missing.txt")
        bad["dataset"]["features"] = str(root / "data" / "features.csv")
        bad["dataset"]["labels"] = str(root / "data" / "labels.csv")
        bad["dataset"]["split"] = str(root / "data" / "split.csv")
        bad["output_dir"] = str(tmp_path / "out")
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        assert main(["train", str(path)]) == 2


class TestPredictEvaluate:
    def test_predict_matches_training_output(self, toy_run, tmp_path):
        root, cfg_path, _ = toy_run
        main(["train", str(cfg_path)])
        out = tmp_path / "replay.csv"
        code = main(["predict", str(root / "out" / "predictor"),
                     "--edges", str(root / "data" / "edges.txt"),
                     "--features", str(root / "data" / "features.csv"),
                     "--out", str(out)])
        assert code == 0
        a = read_predictions_csv(root / "out" / "predictions.csv")
        b = read_predictions_csv(out)
        assert np.array_equal(a[1], b[1])

    def test_predict_role_filter(self, toy_run, tmp_path):
        root, cfg_path, _ = toy_run
        main(["train", str(cfg_path)])
        out = tmp_path / "test_only.csv"
        code = main(["predict", str(root / "out" / "predictor"),
                     "--edges", str(root / "data" / "edges.txt"),
                     "--features", str(root / "data" / "features.csv"),
                     "--split", str(root / "data" / "split.csv"),
                     "--roles", "test", "--out", str(out)])
        assert code == 0
        ids, _ = read_predictions_csv(out)
        split_lines = (root / "data" / "split.csv").read_text().splitlines()[1:]
        test_ids = [int(line.split(",")[0]) for line in split_lines
                    if line.endswith(",test")]
        assert ids.tolist() == test_ids

    def test_evaluate_perfect_predictions(self, tmp_path, capsys):
        (tmp_path / "labels.csv").write_text(
            "node_id,label\n0,1.5\n1,2.5\n")
        (tmp_path / "preds.csv").write_text(
            "node_id,y0\n0,1.5\n1,2.5\n")
        code = main(["evaluate", str(tmp_path / "preds.csv"),
                     str(tmp_path / "labels.csv"), "--metric", "mse"])
        assert code == 0
        assert "mse = 0" in capsys.readouterr().out

    def test_usage_error_exit_1(self):
        assert main(["predict"]) == 1
        assert main(["not-a-command"]) == 1


class TestAblateLeaklab:
    def test_ablate_emits_table(self, toy_run, tmp_path, capsys):
        root, _, config = toy_run
        cfg = json.loads(json.dumps(config))
        cfg["stack"]["num_layers"] = 2
        cfg["stack"]["propagation"]["num_steps"] = 1
        cfg["rosters"] = cfg["rosters"] * 2
        cfg["ablation"] = {"t_values": [0, 1], "seeds": [0]}
        for key, value in cfg["dataset"].items():
            cfg["dataset"][key] = str(root / value)
        cfg["output_dir"] = str(tmp_path / "ablate_out")
        path = tmp_path / "ablate.json"
        path.write_text(json.dumps(cfg))
        assert main(["ablate", str(path)]) == 0
        out = capsys.readouterr().out
        assert "bagging" in out and "no-bagging" in out
        table = json.loads((tmp_path / "ablate_out" / "ablation.json")
                           .read_text())
        assert [row["T"] for row in table["rows"]] == [0, 1]
        for row in table["rows"]:
            assert "bagging" in row and "no_bagging" in row

    def test_leaklab_runs_and_reports(self, tmp_path, capsys):
        cfg = {"num_configs": 2, "trials": 1000, "seed": 0,
               "output_dir": str(tmp_path / "leak_out")}
        path = tmp_path / "leak.json"
        path.write_text(json.dumps(cfg))
        assert main(["leaklab", str(path)]) == 0
        payload = json.loads((tmp_path / "leak_out" / "leaklab.json")
                             .read_text())
        assert len(payload["reports"]) == 2
        for report in payload["reports"]:
            assert report["epsilon_hat"] >= 0
            assert report["epsilon_bound"] > 0

    def test_leaklab_raw_samples_csv(self, tmp_path):
        cfg = {"num_configs": 1, "trials": 1000, "seed": 1,
               "write_raw_samples": True,
               "output_dir": str(tmp_path / "leak_out")}
        path = tmp_path / "leak.json"
        path.write_text(json.dumps(cfg))
        assert main(["leaklab", str(path)]) == 0
        raw = (tmp_path / "leak_out" / "leak_samples_00.csv").read_text()
        assert raw.startswith("trial,output_d,output_dprime")
        assert len(raw.splitlines()) == 1001


class TestSynthCommand:
    def test_synth_deterministic_files(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"task": "regression", "num_nodes": 60,
                                    "seed": 9}))
        assert main(["synth", str(spec), "--out", str(tmp_path / "a")]) == 0
        assert main(["synth", str(spec), "--out", str(tmp_path / "b")]) == 0
        for name in ("edges.txt", "features.csv", "labels.csv", "split.csv"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())

    def test_bad_spec_exit_1(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"task": "regression", "nope": 1}))
        assert main(["synth", str(spec), "--out", str(tmp_path / "x")]) == 1
