"""End-to-end evaluation against a corpus: window classification metrics at
the ROC-selected threshold plus box-level localization quality.

Test scans run through the same pipeline as production data (median filter,
normalization, tow detection, window extraction); ground truth enters only
to label windows and to score predicted boxes.
"""

from __future__ import annotations

import numpy as np

from .anomaly import (best_threshold, build_anomaly_map, classification_report,
                      roc_curve, score_samples)
from .config import PipelineConfig
from .corpus import ScanEntry, load_manifest, load_scan_boxes, scan_paths
from .depthmap import load_pgm, median_filter_3x3, min_max_normalize
from .errors import InspectError
from .localize import blobs_to_boxes, detect_blobs, match_and_score
from .nnet import CAEModel
from .sampler import SampleLabel, SampleSet, extract_windows, label_by_boxes
from .towgeom import detect_layout


class MissingTrainStats(InspectError):
    """Model carries no recorded training-score scale to calibrate the floor."""


def scores_by_label(model: CAEModel, sset: SampleSet) -> tuple[np.ndarray, np.ndarray]:
    """Scores split into (normal, abnormal); unlabeled samples are skipped."""
    scores = score_samples(model, sset)
    labels = np.array([s.label for s in sset.samples], dtype=object)
    return (scores[labels == SampleLabel.NORMAL],
            scores[labels == SampleLabel.ABNORMAL])


def response_floor_from_model(model: CAEModel, floor_frac: float) -> float:
    p99 = model.meta.get("score_p99")
    if p99 is None:
        raise MissingTrainStats("model has no recorded score_p99; pass an explicit floor")
    return floor_frac * float(p99)


def preprocess_scan(pgm_path):
    raw = load_pgm(pgm_path)
    normalized, _ = min_max_normalize(median_filter_3x3(raw))
    return normalized


def evaluate_model(model: CAEModel, manifest_path, config: PipelineConfig,
                   threshold: float | None = None,
                   floor: float | None = None) -> dict:
    """Score every test scan of the corpus and report both metric families.

    Returns a dict with the window-level classification report (at the given
    or ROC-selected threshold) and per-scan localization results: greedy
    box matching, mean IoU over all ground-truth boxes, and the box count
    on defect-free scans (should be zero with a calibrated floor).
    """
    _, entries = load_manifest(manifest_path)
    test_entries = [e for e in entries if e.role == "test"]
    if not test_entries:
        raise InspectError("corpus has no test scans")
    if floor is None:
        floor = response_floor_from_model(model, config.floor_frac)

    normal_scores, abnormal_scores = [], []
    localization = []
    total_gt = 0
    matched_iou_sum = 0.0
    covered = 0
    clean_scan_boxes = 0
    for entry in test_entries:
        pgm_path, _, _ = scan_paths(manifest_path, entry)
        dm = preprocess_scan(pgm_path)
        layout = detect_layout(dm, config.tow_count)
        gt_boxes = load_scan_boxes(manifest_path, entry)
        sset = extract_windows(dm, layout, window=config.window, stride=config.stride,
                               source_id=entry.scan_id)
        sset = label_by_boxes(sset, gt_boxes)
        n_scores, a_scores = scores_by_label(model, sset)
        normal_scores.append(n_scores)
        abnormal_scores.append(a_scores)

        amap = build_anomaly_map(model, dm, layout,
                                 window=config.window, stride=config.stride)
        blobs = []
        for sig in amap.signals:
            blobs.extend(detect_blobs(sig.scores, config.scales, floor,
                                      tow_index=sig.tow_index))
        pred = blobs_to_boxes(blobs, layout, config.tow_width, config.stride,
                              window=config.window,
                              image_width=dm.width, image_height=dm.height)
        mean_iou, assignments = match_and_score(pred, gt_boxes)
        if entry.defective:
            total_gt += len(gt_boxes)
            matched_iou_sum += sum(a[2] for a in assignments)
            covered += sum(1 for a in assignments if a[2] >= 0.3)
            localization.append({
                "scan": entry.scan_id,
                "ground_truth": len(gt_boxes),
                "predicted": len(pred),
                "mean_iou": mean_iou,
                "assignments": [
                    {"gt": gi, "pred": pi, "iou": v} for gi, pi, v in assignments
                ],
                "boxes": [b.as_dict() for b in pred],
            })
        else:
            clean_scan_boxes += len(pred)
            localization.append({
                "scan": entry.scan_id, "ground_truth": 0,
                "predicted": len(pred), "mean_iou": None, "assignments": [],
                "boxes": [b.as_dict() for b in pred],
            })

    normal = np.concatenate(normal_scores)
    abnormal = np.concatenate(abnormal_scores)
    curve = roc_curve(normal, abnormal)
    if threshold is None:
        threshold = best_threshold(curve)
    report = classification_report(normal, abnormal, threshold)

    return {
        "threshold": threshold,
        "response_floor": floor,
        "classification": {
            "auc": report.auc,
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "accuracy": report.accuracy,
            "confusion": {"tp": report.tp, "fp": report.fp,
                          "tn": report.tn, "fn": report.fn},
            "n_normal": int(normal.size),
            "n_abnormal": int(abnormal.size),
        },
        "localization": {
            "mean_iou": (matched_iou_sum / total_gt) if total_gt else None,
            "covered_at_03": covered,
            "ground_truth_total": total_gt,
            "defect_free_box_count": clean_scan_boxes,
            "per_scan": localization,
        },
    }
