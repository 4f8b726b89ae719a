import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cowa import adaptation, evaluation
from cowa.cli import main
from cowa.data import load_features
from cowa.model import load_model


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """toy -> pretrain once for the whole module (epochs kept small)."""
    root = tmp_path_factory.mktemp("pipeline")
    assert run_cli("toy", "--seed", 7, "--out", root / "data") == 0
    assert run_cli(
        "pretrain", "--source", root / "data" / "source.csv",
        "--epochs", 40, "--seed", 7, "--out", root / "model",
    ) == 0
    return root


class TestToy:
    def test_deterministic_outputs(self, tmp_path):
        for d in ("a", "b"):
            assert run_cli("toy", "--seed", 7, "--out", tmp_path / d) == 0
        for name in ("source.csv", "target.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_offset(self, tmp_path):
        assert run_cli("toy", "--seed", 1, "--offset", 0, "--out", tmp_path) == 0
        cfg = json.loads((tmp_path / "toy_config.json").read_text())
        assert cfg["offset"] == 0
        assert not np.asarray(cfg["target_mean_offset"]).any()

    def test_outputs_loadable(self, tmp_path):
        assert run_cli("toy", "--seed", 2, "--out", tmp_path) == 0
        fs = load_features(tmp_path / "source.csv", domain_tag="source")
        assert fs.labels is not None and fs.dim == 2

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"per_class_count": 15, "seed": 3}))
        assert run_cli("toy", "--config", cfg, "--seed", 4, "--out", tmp_path) == 0
        snap = json.loads((tmp_path / "toy_config.json").read_text())
        assert snap["per_class_count"] == 15  # from config file
        assert snap["seed"] == 4  # flag wins
        fs = load_features(tmp_path / "source.csv", domain_tag="source")
        assert fs.n == 45

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"zap": 1}))
        assert run_cli("toy", "--config", cfg, "--out", tmp_path) == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and "\n" not in err.strip()


class TestPretrain:
    def test_outputs(self, pipeline):
        model = load_model(pipeline / "model" / "model.txt")
        assert model.class_count == 3
        log = (pipeline / "model" / "pretrain_log.csv").read_text().splitlines()
        assert log[0] == "epoch,loss,accuracy"
        assert len(log) == 41
        assert float(log[-1].split(",")[2]) >= 0.95

    def test_unlabeled_source_rejected(self, pipeline, tmp_path, capsys):
        target = load_features(pipeline / "data" / "target.csv")
        from cowa.data import FeatureSet, save_features

        save_features(
            FeatureSet(target.features, None, "source", 3), tmp_path / "u.csv"
        )
        assert run_cli("pretrain", "--source", tmp_path / "u.csv", "--out", tmp_path) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_missing_file_is_single_line_error(self, tmp_path, capsys):
        assert run_cli("pretrain", "--source", tmp_path / "nope.csv", "--out", tmp_path) == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and "\n" not in err.strip()


class TestScore:
    def test_artifacts(self, pipeline, tmp_path):
        assert run_cli(
            "score", "--model", pipeline / "model" / "model.txt",
            "--target", pipeline / "data" / "target.csv", "--out", tmp_path,
        ) == 0
        lines = (tmp_path / "aurc_table.csv").read_text().splitlines()
        assert lines[0] == "pseudo_labeler,score,aurc"
        assert len(lines) == 7
        for kind in ("maxprob", "ent", "cossim", "mppl", "lpg", "jmds"):
            assert (tmp_path / f"rc_{kind}.csv").exists()
        scores = (tmp_path / "scores.csv").read_text().splitlines()
        assert scores[0] == "index,pseudo_label,score_kind,value,true_label,correct"

    def test_aurc_matches_library(self, pipeline, tmp_path):
        assert run_cli(
            "score", "--model", pipeline / "model" / "model.txt",
            "--target", pipeline / "data" / "target.csv", "--out", tmp_path,
        ) == 0
        model = load_model(pipeline / "model" / "model.txt")
        target = load_features(pipeline / "data" / "target.csv")
        rows = evaluation.compare_scores(model, target.features, target.labels)
        table = {
            tuple(line.split(",")[:2]): float(line.split(",")[2])
            for line in (tmp_path / "aurc_table.csv").read_text().splitlines()[1:]
        }
        for row in rows:
            assert table[(row.pseudo_labeler, row.score_kind)] == row.aurc

    def test_svg_well_formed_with_one_polyline_per_curve(self, pipeline, tmp_path):
        assert run_cli(
            "score", "--model", pipeline / "model" / "model.txt",
            "--target", pipeline / "data" / "target.csv", "--out", tmp_path,
        ) == 0
        tree = ET.parse(tmp_path / "rc_curves.svg")
        ns = "{http://www.w3.org/2000/svg}"
        polylines = tree.getroot().findall(f".//{ns}polyline")
        assert len(polylines) == 6

    def test_labels_beyond_model_classes_accepted(self, pipeline, tmp_path):
        # open-set targets label unknowns with class index K
        from cowa.data import FeatureSet, save_features

        target = load_features(pipeline / "data" / "target.csv")
        labels = target.labels.copy()
        labels[:10] = 3
        save_features(FeatureSet(target.features, labels, "target", 4), tmp_path / "o.csv")
        assert run_cli(
            "score", "--model", pipeline / "model" / "model.txt",
            "--target", tmp_path / "o.csv", "--out", tmp_path / "out",
        ) == 0
        assert run_cli(
            "eval", "--model", pipeline / "model" / "model.txt",
            "--data", tmp_path / "o.csv", "--out", tmp_path / "out2",
        ) == 0

    def test_unlabeled_target_skips_aurc(self, pipeline, tmp_path):
        target = load_features(pipeline / "data" / "target.csv")
        from cowa.data import FeatureSet, save_features

        save_features(FeatureSet(target.features, None, "target", 3), tmp_path / "u.csv")
        assert run_cli(
            "score", "--model", pipeline / "model" / "model.txt",
            "--target", tmp_path / "u.csv", "--out", tmp_path / "out",
        ) == 0
        assert (tmp_path / "out" / "scores.csv").exists()
        assert not (tmp_path / "out" / "aurc_table.csv").exists()


class TestAdapt:
    def test_artifacts_and_flag_equivalence(self, pipeline, tmp_path):
        assert run_cli(
            "adapt", "--model", pipeline / "model" / "model.txt",
            "--target", pipeline / "data" / "target.csv",
            "--scenario", "closed", "--no-weight-mixup",
            "--epochs", 5, "--seed", 3, "--out", tmp_path,
        ) == 0
        log = (tmp_path / "adapt_log.csv").read_text().splitlines()
        assert log[0] == (
            "epoch,accuracy,mean_jmds,median_jmds,q10_jmds,q90_jmds,"
            "active_classes,known_fraction"
        )
        assert len(log) == 7  # header + 5 epochs + final state
        quant = (tmp_path / "jmds_quantiles.csv").read_text().splitlines()
        assert quant[0].startswith("epoch,q0,q10,")

        # the CLI run equals the library call with use_weight_mixup off
        model = load_model(pipeline / "model" / "model.txt")
        target = load_features(pipeline / "data" / "target.csv")
        cfg = adaptation.AdaptConfig(
            scenario="closed", use_weight_mixup=False, epochs=5, seed=3
        )
        adapted, _ = adaptation.cowa_adapt(model, target, cfg)
        saved = load_model(tmp_path / "adapted_model.txt")
        for k in adapted.params():
            assert np.array_equal(adapted.params()[k], saved.params()[k])

    def test_deterministic(self, pipeline, tmp_path):
        for d in ("a", "b"):
            assert run_cli(
                "adapt", "--model", pipeline / "model" / "model.txt",
                "--target", pipeline / "data" / "target.csv",
                "--epochs", 3, "--seed", 11, "--out", tmp_path / d,
            ) == 0
        assert (tmp_path / "a" / "adapted_model.txt").read_bytes() == (
            tmp_path / "b" / "adapted_model.txt"
        ).read_bytes()


class TestPartialScenarioCli:
    def test_planted_subset_logged_at_convergence(self, tmp_path):
        from toyproto import partial_set_instance
        from cowa.data import save_features
        from cowa.model import save_model

        net, target = partial_set_instance(0)
        save_features(target, tmp_path / "target.csv")
        save_model(net, tmp_path / "model.txt")
        assert run_cli(
            "adapt", "--model", tmp_path / "model.txt",
            "--target", tmp_path / "target.csv",
            "--scenario", "partial", "--tau", 0.3,
            "--epochs", 3, "--seed", 0, "--out", tmp_path / "out",
        ) == 0
        last = (tmp_path / "out" / "adapt_log.csv").read_text().splitlines()[-1]
        active_classes = int(last.split(",")[6])
        assert active_classes == 3


class TestEval:
    def test_accuracy_csv(self, pipeline, tmp_path, capsys):
        assert run_cli(
            "eval", "--model", pipeline / "model" / "model.txt",
            "--data", pipeline / "data" / "source.csv", "--out", tmp_path,
        ) == 0
        lines = (tmp_path / "eval.csv").read_text().splitlines()
        assert lines[0] == "metric,value"
        acc = float(lines[1].split(",")[1])
        assert acc >= 0.95
        assert "accuracy_overall" in capsys.readouterr().out


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "cowa.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "toy" in proc.stdout and "adapt" in proc.stdout
