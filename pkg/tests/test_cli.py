"""End-to-end driver tests on a tiny synthetic dataset; everything runs
through cli.main() in-process so exit codes and printed output are checked."""

import os

import numpy as np
import pytest

from cdad import cli
from cdad.config import RunConfig, load_config


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


TINY = [
    "--window", "5", "--topk", "3", "--embed-dim", "4", "--epochs", "2",
    "--batch-size", "16", "--val-fraction", "0.2", "--seed", "1",
]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """A completed tiny pipeline run shared by the read-only tests below."""
    d = str(tmp_path_factory.mktemp("run"))
    args = ["--out", d] + TINY
    assert cli.main(["synth", "--nodes", "5", "--train-steps", "300",
                     "--test-steps", "200", "--anomaly-fraction", "0.1"] + args) == 0
    for cmd in ("extract-net", "build-graph", "train", "detect", "eval"):
        assert cli.main([cmd] + args) == 0, cmd
    return d


class TestPipelineCommands:
    def test_all_artifacts_present(self, run_dir):
        for name in ("train_physical.csv", "net_train.npz", "edges.csv", "graph.json",
                     "checkpoint.txt", "trace.csv", "scores.csv", "report.csv",
                     "config.resolved"):
            assert os.path.exists(os.path.join(run_dir, name)), name

    def test_eval_prints_metric_table(self, run_dir, capsys):
        code, out, _ = run_cli(capsys, "eval", "--out", run_dir, *TINY)
        assert code == 0
        assert out.splitlines()[0].split() == ["Method", "FPR", "Precision", "Recall", "F1"]

    def test_scores_csv_shape(self, run_dir):
        lines = open(os.path.join(run_dir, "scores.csv")).read().splitlines()
        assert lines[0] == "timestamp,score_phys,score_net,thresh_phys,thresh_net,label,truth,top_node"
        # one row per test target step: 200 steps minus the window warm-up
        assert len(lines) - 1 == 200 - 5

    def test_resolved_config_reloads(self, run_dir):
        cfg = load_config(os.path.join(run_dir, "config.resolved"), base=RunConfig())
        assert cfg.window == 5 and cfg.topk == 3 and cfg.seed == 1


class TestExitCodes:
    def test_missing_upstream_artifact_is_2(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "train", "--out", str(tmp_path), *TINY)
        assert code == 2
        assert "missing upstream artifact" in err

    def test_bad_input_file_is_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("timestamp,a,label\n0,not-a-number,0\n")
        code, _, err = run_cli(
            capsys, "extract-net", "--out", str(tmp_path),
            "--physical-train", str(bad), "--physical-test", str(bad),
            "--network-train", str(bad), "--network-test", str(bad),
            "--node-map", str(bad),
        )
        assert code == 1

    def test_unknown_config_key_is_1(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("not_a_real_key=3\n")
        code, _, err = run_cli(capsys, "build-graph", "--config", str(cfg),
                               "--out", str(tmp_path))
        assert code == 1
        assert "not_a_real_key" in err


class TestConfigPrecedence:
    def test_flags_override_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("window=9\ntopk=7\n")
        args = cli.build_parser().parse_args(
            ["train", "--config", str(cfg), "--window", "4", "--out", str(tmp_path)]
        )
        resolved = cli.resolve_config(args)
        assert resolved.window == 4  # flag wins
        assert resolved.topk == 7  # file beats default

    def test_defaults_when_unset(self, tmp_path):
        args = cli.build_parser().parse_args(["train", "--out", str(tmp_path)])
        resolved = cli.resolve_config(args)
        assert resolved.window == 15 and resolved.topk == 20 and resolved.batch_size == 32

    def test_no_attention_and_static_weights_flags(self, tmp_path):
        args = cli.build_parser().parse_args(
            ["train", "--out", str(tmp_path), "--no-attention", "--static-weights", "0.3,0.7"]
        )
        resolved = cli.resolve_config(args)
        assert resolved.attention is False
        assert resolved.static_weight_pair() == (0.3, 0.7)


class TestAblate:
    def test_variant_configs(self):
        base = RunConfig(out_dir="/tmp/x")
        assert cli._variant_config(base, "no-attention").attention is False
        assert cli._variant_config(base, "static-0.25").static_weights == "0.25,0.75"
        assert cli._variant_config(base, "physical-only").domains == "physical"
        assert cli._variant_config(base, "full").out_dir == "/tmp/x/variant-full"
        with pytest.raises(ValueError):
            cli._variant_config(base, "bogus")

    def test_ablate_runs_variants(self, tmp_path, capsys):
        d = str(tmp_path)
        args = ["--out", d] + TINY
        assert cli.main(["synth", "--nodes", "5", "--train-steps", "200",
                         "--test-steps", "150", "--anomaly-fraction", "0.1"] + args) == 0
        capsys.readouterr()  # drop the synth path listing
        code, out, _ = run_cli(
            capsys, "ablate", "--variants", "full,no-attention", "--epochs", "1",
            *[a for a in args if a != "--epochs" and a != "2"],
        )
        assert code == 0
        rows = out.splitlines()
        assert rows[0].split()[0] == "Method"
        assert {r.split()[0] for r in rows[1:]} == {"full", "no-attention"}
        assert os.path.exists(os.path.join(d, "ablation_report.csv"))
        for v in ("full", "no-attention"):
            assert os.path.exists(os.path.join(d, f"variant-{v}", "report.csv"))
