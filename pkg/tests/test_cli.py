"""CLI stages: artifact round trips, determinism, error reporting."""

import json

import numpy as np
import pytest

from towinspect.cli import main
from towinspect.depthmap import DepthMap, save_pgm
from towinspect.localize import boxes_from_json


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """Small corpus plus every stage's shared artifact, via the CLI itself."""
    work = tmp_path_factory.mktemp("cli_pipeline")
    corpus = work / "corpus"
    base = ["--tow-count", "4"]
    assert main(["synth-gen", "--output", str(corpus), "--train-scans", "6",
                 "--test-defect-scans", "1", "--test-normal-scans", "1",
                 "--seed", "5", "--width", "192", "--height", "160",
                 "--tow-width", "21"] + base) == 0
    assert main(["extract", "--manifest", str(corpus / "manifest.json"),
                 "--role", "train", "--output", str(work / "train.json")] + base) == 0
    assert main(["extract", "--manifest", str(corpus / "manifest.json"),
                 "--role", "test", "--output", str(work / "test.json")] + base) == 0
    assert main(["train", "--samples", str(work / "train.json"),
                 "--output", str(work / "model.caew"),
                 "--loss-csv", str(work / "loss.csv"),
                 "--latent-dim", "16", "--epochs", "40", "--batch-size", "64",
                 "--seed", "5"]) == 0
    # preprocessed defect scan + its detected layout, used by several stages
    assert main(["preprocess", "--input", str(corpus / "scan_006.pgm"),
                 "--output", str(work / "clean.pgm")]) == 0
    assert main(["detect-tows", "--input", str(work / "clean.pgm"),
                 "--output", str(work / "layout.json"), "--tow-count", "4"]) == 0
    return work


def run_stage(args):
    return main([str(a) for a in args])


class TestStages:
    def test_detected_layout_artifact(self, pipeline_dir):
        doc = json.loads((pipeline_dir / "layout.json").read_text())
        assert len(doc["centerlines"]) == 4
        assert len(doc["horizontal_edges"]) == 5
        assert len(doc["vertical_bounds"]) == 2

    def test_score_localize_render(self, pipeline_dir):
        corpus = pipeline_dir / "corpus"
        clean = pipeline_dir / "clean.pgm"
        layout = pipeline_dir / "layout.json"
        scores = pipeline_dir / "anomaly.csv"
        assert run_stage(["score", "--model", pipeline_dir / "model.caew",
                          "--input", clean, "--layout", layout,
                          "--output", scores]) == 0
        assert scores.read_text().startswith("tow_index,center_x,center_y,mse")

        boxes = pipeline_dir / "boxes.json"
        assert run_stage(["localize", "--input", clean, "--layout", layout,
                          "--anomaly", scores, "--model", pipeline_dir / "model.caew",
                          "--output", boxes, "--tow-width", 21]) == 0
        predicted = boxes_from_json(boxes.read_text())
        gt = boxes_from_json((corpus / "scan_006.boxes.json").read_text())
        assert gt and predicted  # the defect scan should produce detections

        overlay = pipeline_dir / "boxes.ppm"
        sidecar = pipeline_dir / "iou.json"
        assert run_stage(["render", "--mode", "boxes", "--input", clean,
                          "--pred", boxes, "--truth", corpus / "scan_006.boxes.json",
                          "--output", overlay, "--sidecar", sidecar]) == 0
        header = overlay.read_bytes()[:20]
        assert header.startswith(b"P6\n192 160\n255\n")
        assert "iou_pairs" in json.loads(sidecar.read_text())

    def test_threshold_and_evaluate(self, pipeline_dir):
        corpus = pipeline_dir / "corpus"
        thresh = pipeline_dir / "thresh.json"
        assert run_stage(["threshold", "--model", pipeline_dir / "model.caew",
                          "--samples", pipeline_dir / "test.json",
                          "--output", thresh]) == 0
        doc = json.loads(thresh.read_text())
        assert 0.0 <= doc["auc"] <= 1.0 and np.isfinite(doc["threshold"])

        report = pipeline_dir / "report.json"
        assert run_stage(["evaluate", "--model", pipeline_dir / "model.caew",
                          "--manifest", corpus / "manifest.json",
                          "--output", report, "--tow-count", 4]) == 0
        doc = json.loads(report.read_text())
        assert {"classification", "localization", "threshold"} <= doc.keys()

    def test_render_tows_and_anomaly(self, pipeline_dir):
        clean = pipeline_dir / "clean.pgm"
        assert run_stage(["render", "--mode", "tows", "--input", clean,
                          "--layout", pipeline_dir / "layout.json",
                          "--output", pipeline_dir / "tows.ppm"]) == 0
        assert run_stage(["render", "--mode", "anomaly", "--input", clean,
                          "--anomaly", pipeline_dir / "anomaly.csv",
                          "--output", pipeline_dir / "anomaly.ppm"]) == 0
        assert (pipeline_dir / "tows.ppm").stat().st_size > 0
        assert (pipeline_dir / "anomaly.ppm").stat().st_size > 0


class TestDeterminism:
    def test_training_twice_identical_weights(self, pipeline_dir, tmp_path):
        out1 = tmp_path / "m1.caew"
        out2 = tmp_path / "m2.caew"
        for out in (out1, out2):
            assert run_stage(["train", "--samples", pipeline_dir / "train.json",
                              "--output", out, "--latent-dim", 4,
                              "--epochs", 2, "--seed", 3]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_synth_gen_twice_identical(self, tmp_path):
        args = ["synth-gen", "--train-scans", 2, "--test-defect-scans", 1,
                "--test-normal-scans", 0, "--seed", 8,
                "--width", 160, "--height", 160, "--tow-count", 4]
        assert run_stage(args + ["--output", tmp_path / "a"]) == 0
        assert run_stage(args + ["--output", tmp_path / "b"]) == 0
        for name in ("scan_000.pgm", "scan_002.pgm", "scan_002.boxes.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()


class TestErrorHandling:
    def test_missing_file_error_json(self, tmp_path, capsys):
        rc = main(["preprocess", "--input", str(tmp_path / "nope.pgm"),
                   "--output", str(tmp_path / "out.pgm")])
        assert rc != 0
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["stage"] == "preprocess"
        assert err["error"]
        assert "message" in err

    def test_degenerate_preprocess_warns_but_succeeds(self, tmp_path, capsys):
        flat = tmp_path / "flat.pgm"
        save_pgm(DepthMap(np.full((32, 32), 3.3)), flat)
        rc = main(["preprocess", "--input", str(flat),
                   "--output", str(tmp_path / "out.pgm")])
        assert rc == 0
        assert "degenerate" in capsys.readouterr().err

    def test_bad_magic_reports_parse_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
        rc = main(["detect-tows", "--input", str(bad),
                   "--output", str(tmp_path / "layout.json")])
        assert rc != 0
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "PgmMagicError"

    def test_config_file_and_flag_precedence(self, pipeline_dir, tmp_path, capsys):
        cfg = tmp_path / "pipe.cfg"
        cfg.write_text("tow_count = 3\n")
        clean = pipeline_dir / "clean.pgm"
        # file says 3, flag says 4; flag must win and succeed
        rc = main(["detect-tows", "--config", str(cfg), "--input", str(clean),
                   "--output", str(tmp_path / "layout.json"), "--tow-count", "4"])
        assert rc == 0
        doc = json.loads((tmp_path / "layout.json").read_text())
        assert len(doc["centerlines"]) == 4
