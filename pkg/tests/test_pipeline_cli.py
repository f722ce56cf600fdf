import json
import os

import numpy as np
import pytest

from treemkl import errors
from treemkl.cli import main
from treemkl.dataio import load_artifact, load_manifest
from treemkl.pipeline import evaluate_artifact, fuse_evaluate


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """One small two-stream dataset plus trained models, reused across
    the CLI tests (training is the slow part)."""
    root = tmp_path_factory.mktemp("cliws")
    data = root / "data"
    assert run_cli("gen-synth", "--out", data, "--classes", 3,
                   "--per-class", 10, "--frames", 32, "--dim", 8,
                   "--signal-level", 2, "--streams", 2, "--seed", 3) == 0
    manifest = data / "manifest.jsonl"
    common = ["--manifest", manifest, "--depth", 3, "--variant", "avg",
              "--seed", 3]
    assert run_cli("train-em", "--out", root / "em_a", "--stream",
                   "appearance", "--max-iters", 6, *common) == 0
    assert run_cli("train-dmkl", "--out", root / "dm_a", "--stream",
                   "appearance", "--iters", 200,
                   "--positive-fraction", 0.5, *common) == 0
    assert run_cli("train-dmkl", "--out", root / "dm_m", "--stream",
                   "motion", "--iters", 200,
                   "--positive-fraction", 0.5, *common) == 0
    return root


class TestTrainingOutputs:
    def test_artifact_schema(self, workspace):
        art = load_artifact(workspace / "em_a" / "model.json")
        assert art["config"]["depth"] == 3
        assert art["config"]["variant"] == "averaging"
        assert set(art["classes"]) == {"1", "2", "3"}
        beta = np.array(list(art["beta"].values()))
        assert abs(beta.sum() - 1.0) < 1e-9
        assert list(art["beta"]) == ["1:1", "2:1", "2:2",
                                     "3:1", "3:2", "3:3", "3:4"]

    def test_trace_csv_headers(self, workspace):
        em_first = (workspace / "em_a" / "trace.csv").read_text().splitlines()
        assert em_first[0] == "iteration,objective,beta_entropy"
        dm_first = (workspace / "dm_a" / "trace.csv").read_text().splitlines()
        assert dm_first[0] == "iteration,loss"

    def test_em_trace_non_increasing(self, workspace):
        lines = (workspace / "em_a" / "trace.csv").read_text().splitlines()[1:]
        vals = [float(line.split(",")[1]) for line in lines]
        assert np.all(np.diff(vals) <= 1e-8)

    def test_em_entropy_column_tracks_concentration(self, workspace):
        lines = (workspace / "em_a" / "trace.csv").read_text().splitlines()[1:]
        entropies = [float(line.split(",")[2]) for line in lines]
        assert entropies[0] == pytest.approx(np.log(7))  # uniform over 7 nodes
        assert entropies[-1] < entropies[0]

    def test_files_listing(self, workspace):
        listing = json.loads((workspace / "em_a" / "files.json").read_text())
        assert "model.json" in listing["files"]
        assert "trace.csv" in listing["files"]


class TestEval:
    def test_eval_metrics(self, workspace):
        out = workspace / "eval_em"
        assert run_cli("eval", "--model", workspace / "em_a" / "model.json",
                       "--manifest", workspace / "data" / "manifest.jsonl",
                       "--out", out) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["overall_accuracy"] >= 0.9
        assert set(metrics["per_class"]) == {"1", "2", "3"}
        assert metrics["n_test"] == 9

    def test_beta_levels_row_sums_to_one(self, workspace):
        out = workspace / "eval_em"
        header, row = (out / "beta_levels.csv").read_text().splitlines()
        assert header == "level_1,level_2,level_3"
        assert abs(sum(float(v) for v in row.split(",")) - 1.0) < 1e-9

    def test_empty_test_split_is_explicit_error(self, workspace, tmp_path):
        src = (workspace / "data" / "manifest.jsonl").read_text().splitlines()
        kept = [line for line in src
                if '"split": "test"' not in line]
        bad = tmp_path / "manifest.jsonl"
        bad.write_text("\n".join(kept) + "\n")
        # feature paths stay relative to the original data directory
        for line in kept[1:]:
            obj = json.loads(line)
            break
        manifest = load_manifest(bad)
        art = load_artifact(workspace / "em_a" / "model.json")
        with pytest.raises(errors.EmptySplit):
            evaluate_artifact(art, manifest, str(workspace / "data"))

    def test_missing_model_is_validation_exit(self, workspace, tmp_path, capsys):
        code = run_cli("eval", "--model", tmp_path / "nope.json",
                       "--manifest", workspace / "data" / "manifest.jsonl",
                       "--out", tmp_path / "o")
        assert code == 2 or isinstance(code, int) and code != 0


class TestFusion:
    def test_weight_one_matches_single_stream(self, workspace):
        manifest = load_manifest(workspace / "data" / "manifest.jsonl")
        art_a = load_artifact(workspace / "dm_a" / "model.json")
        art_m = load_artifact(workspace / "dm_m" / "model.json")
        root = str(workspace / "data")
        single = evaluate_artifact(art_a, manifest, root)
        fused = fuse_evaluate(art_a, art_m, manifest, root,
                              mode="kernel-avg", weight=1.0)
        assert fused["overall_accuracy"] == single["overall_accuracy"]
        assert fused["confusion"] == single["confusion"]

    def test_score_avg_identical_artifacts(self, workspace):
        manifest = load_manifest(workspace / "data" / "manifest.jsonl")
        art_a = load_artifact(workspace / "dm_a" / "model.json")
        root = str(workspace / "data")
        single = evaluate_artifact(art_a, manifest, root)
        fused = fuse_evaluate(art_a, art_a, manifest, root,
                              mode="score-avg", weight=0.5)
        assert fused["confusion"] == single["confusion"]

    def test_fused_at_least_near_best_single(self, workspace):
        manifest = load_manifest(workspace / "data" / "manifest.jsonl")
        art_a = load_artifact(workspace / "dm_a" / "model.json")
        art_m = load_artifact(workspace / "dm_m" / "model.json")
        root = str(workspace / "data")
        acc_a = evaluate_artifact(art_a, manifest, root)["overall_accuracy"]
        acc_m = evaluate_artifact(art_m, manifest, root)["overall_accuracy"]
        fused = fuse_evaluate(art_a, art_m, manifest, root,
                              mode="kernel-avg", weight=0.5)
        assert fused["overall_accuracy"] >= max(acc_a, acc_m) - 0.02

    def test_depth_mismatch_rejected(self, workspace, tmp_path):
        art_a = load_artifact(workspace / "dm_a" / "model.json")
        art_b = json.loads(json.dumps(art_a))
        art_b["config"]["depth"] = 2
        manifest = load_manifest(workspace / "data" / "manifest.jsonl")
        with pytest.raises(errors.ConfigMismatch):
            fuse_evaluate(art_a, art_b, manifest, str(workspace / "data"))


class TestReport:
    def test_grid_layout(self, workspace, tmp_path):
        runs = tmp_path / "runs"
        runs.mkdir()
        for name, acc, depth in (("r1", 0.9, 2), ("r2", 0.95, 3)):
            d = runs / name
            d.mkdir()
            (d / "metrics.json").write_text(json.dumps({
                "overall_accuracy": acc,
                "config": {"route": "em", "variant": "averaging",
                           "depth": depth, "stream": "appearance"}}))
        out = tmp_path / "report"
        assert run_cli("report", "--runs", runs, "--out", out) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0] == "run,route,variant,depth,stream,accuracy"
        assert len(lines) == 3

    def test_no_runs_is_error(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert run_cli("report", "--runs", tmp_path / "empty",
                       "--out", tmp_path / "r") == 2

    def test_rerun_byte_identical(self, workspace, tmp_path):
        runs = tmp_path / "runs"
        runs.mkdir()
        d = runs / "only"
        d.mkdir()
        (d / "metrics.json").write_text(json.dumps({
            "overall_accuracy": 1.0,
            "config": {"route": "dmkl", "variant": "concatenation",
                       "depth": 4, "stream": "motion"}}))
        assert run_cli("report", "--runs", runs, "--out", tmp_path / "a") == 0
        assert run_cli("report", "--runs", runs, "--out", tmp_path / "b") == 0
        assert (tmp_path / "a" / "report.csv").read_bytes() == \
            (tmp_path / "b" / "report.csv").read_bytes()


class TestExitCodesAndWorkers:
    def test_not_converged_is_numerical_exit(self, workspace, tmp_path):
        code = run_cli("train-em", "--manifest",
                       workspace / "data" / "manifest.jsonl",
                       "--out", tmp_path / "o", "--depth", 2,
                       "--variant", "concat", "--stream", "appearance",
                       "--kkt-tol", 1e-14, "--max-passes", 1, "--seed", 3)
        assert code == 3

    def test_worker_count_does_not_change_bytes(self, workspace, tmp_path,
                                                monkeypatch):
        args = ["eval", "--model", workspace / "dm_a" / "model.json",
                "--manifest", workspace / "data" / "manifest.jsonl"]
        assert run_cli(*args, "--out", tmp_path / "w1") == 0
        monkeypatch.setenv("TREEMKL_WORKERS", "4")
        assert run_cli(*args, "--out", tmp_path / "w4") == 0
        assert (tmp_path / "w1" / "metrics.json").read_bytes() == \
            (tmp_path / "w4" / "metrics.json").read_bytes()


class TestPoolCommand:
    def test_writes_tree_files(self, workspace, tmp_path):
        out = tmp_path / "pooled"
        assert run_cli("pool", "--manifest",
                       workspace / "data" / "manifest.jsonl",
                       "--out", out, "--depth", 3,
                       "--stream", "appearance") == 0
        trees = sorted(os.listdir(out / "trees"))
        assert len(trees) == 30
        from treemkl.hierarchy import load_pooled_file
        tree = load_pooled_file(out / "trees" / trees[0])
        assert tree.depth == 3

    def test_validation_exit_code(self, tmp_path):
        assert run_cli("pool", "--manifest", tmp_path / "missing.jsonl",
                       "--out", tmp_path / "o", "--depth", 3) == 2
