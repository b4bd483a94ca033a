import json

import pytest

from roadcross.cli import main
from roadcross.features import read_feature_csv


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert run("simulate", "--videos", 4, "--frames", 120, "--seed", 7, "--out", data) == 0
    assert run("split", "--dataset", data, "--counts", "3,1", "--seed", 7, "--out", root / "split.csv") == 0
    assert run("track", "--dataset", data, "--out", root / "tracks") == 0
    assert run("features", "--dataset", data, "--tracks", root / "tracks", "--mode", "single",
               "--out", root / "fs") == 0
    assert run("train-svm", "--features", root / "fs", "--split", root / "split.csv", "--seed", 1,
               "--out", root / "single.svm") == 0
    return root


def test_simulate_layout(small):
    vids = sorted(p.name for p in (small / "data").iterdir() if p.is_dir())
    assert vids == ["video_000", "video_001", "video_002", "video_003"]
    for v in vids:
        assert {p.name for p in (small / "data" / v).iterdir()} == {"boxes.csv", "labels.csv", "scenario.cfg"}
    manifest = json.loads((small / "data" / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["arguments"]["seed"] == 7
    assert "tool_version" in manifest


def test_simulate_is_deterministic(small, tmp_path):
    assert run("simulate", "--videos", 4, "--frames", 120, "--seed", 7, "--out", tmp_path) == 0
    for v in ("video_000", "video_003"):
        for f in ("boxes.csv", "labels.csv", "scenario.cfg"):
            assert (tmp_path / v / f).read_bytes() == (small / "data" / v / f).read_bytes()


def test_multi_features_width(small, tmp_path):
    assert run("features", "--dataset", small / "data", "--tracks", small / "tracks", "--mode", "multi",
               "--k", 10, "--model", small / "single.svm", "--out", tmp_path) == 0
    X, y = read_feature_csv(tmp_path / "video_000" / "features.csv")
    assert X.shape == (120, 33) and y.shape == (120,)
    header = (tmp_path / "video_000" / "features.csv").read_text().splitlines()[0]
    assert len(header.split(",")) == 34


def test_multi_needs_model(small, tmp_path, capsys):
    assert run("features", "--dataset", small / "data", "--tracks", small / "tracks", "--mode", "multi",
               "--out", tmp_path) == 1
    assert "--model" in capsys.readouterr().err


def test_eval_single(small, tmp_path, capsys):
    assert run("eval", "--features", small / "fs", "--split", small / "split.csv",
               "--single-model", small / "single.svm", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "Single frame SVM" in out
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "method,precision,recall,throughput_fps"
    assert lines[1].startswith("Single frame SVM,")
    assert (tmp_path / "pr_single_svm.csv").exists()


def test_assist_five_frame_rule(tmp_path):
    probs = tmp_path / "p.csv"
    probs.write_text("frame_index,probability\n" + "".join(f"{i},0.9\n" for i in range(1, 9)))
    assert run("assist", "--probabilities", probs, "--out", tmp_path / "ev.log") == 0
    assert (tmp_path / "ev.log").read_text() == "0,activated\n0,orient_to_traffic\n5,safe_to_cross\n"
    assert run("assist", "--probabilities", probs, "--threshold", 0.95, "--out", tmp_path / "ev2.log") == 0
    assert "safe_to_cross" not in (tmp_path / "ev2.log").read_text()


def test_assist_malformed_input_names_line(tmp_path, capsys):
    probs = tmp_path / "p.csv"
    probs.write_text("frame_index,probability\n1,0.9\n2,1.7\n")
    assert run("assist", "--probabilities", probs, "--out", tmp_path / "ev.log") == 1
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1
    assert "p.csv:3" in err


def test_missing_input_is_nonzero(tmp_path, capsys):
    assert run("track", "--dataset", tmp_path / "nope", "--out", tmp_path / "t") == 1
    assert "nope" in capsys.readouterr().err


def test_bad_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("fps = -3\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "d") == 1
    assert "fps" in capsys.readouterr().err


def test_cnn_init_and_infer(small, tmp_path):
    spec = tmp_path / "tiny.net"
    spec.write_text("name tiny\ninput height=16 width=16 channels=3\nconv2d out_channels=2 kernel=3 dilation=2\n"
                    "relu\nglobal_avg_pool\ndense units=1\nsigmoid\n")
    assert run("cnn-init", "--spec", spec, "--seed", 2, "--out", tmp_path / "w.bin") == 0
    assert run("cnn-infer", "--spec", spec, "--weights", tmp_path / "w.bin", "--dataset", small / "data",
               "--split", small / "split.csv", "--out", tmp_path / "probs") == 0
    test_vid = (small / "split.csv").read_text().splitlines()[-1].split(",")[0]
    lines = (tmp_path / "probs" / test_vid / "probabilities.csv").read_text().splitlines()
    assert lines[0] == "frame_index,probability" and len(lines) == 121
    assert (tmp_path / "probs" / "timing.json").exists()
    assert run("assist", "--probabilities", tmp_path / "probs", "--out", tmp_path / "ev") == 0
    assert (tmp_path / "ev" / test_vid / "events.log").read_text().startswith("0,activated\n")


def test_pipeline_report_has_both_svms(tmp_path):
    assert run("pipeline", "--videos", 4, "--seed", 3, "--cnn-spec", "none", "--out", tmp_path) == 0
    rows = (tmp_path / "report" / "report.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["Single frame SVM", "Multi frame SVM"]
