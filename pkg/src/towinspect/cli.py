"""Command-line pipeline: one subcommand per stage of the inspection flow.

    synth-gen -> preprocess -> detect-tows -> extract -> train
              -> score -> threshold -> localize -> evaluate -> render

Every stage validates its inputs, reads/writes the documented artifact
formats, and is deterministic given its inputs, config, and seed. On
failure a machine-readable error report is written to stderr:
    {"error": <code>, "message": <text>, "stage": <subcommand>}
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .anomaly import (AnomalyMap, best_threshold, build_anomaly_map,
                      roc_curve, score_percentiles, score_samples)
from .config import PipelineConfig, build_config
from .corpus import generate_corpus, load_manifest, load_scan_boxes, scan_paths
from .depthmap import load_pgm, median_filter_3x3, min_max_normalize, save_pgm
from .errors import InspectError
from .evaluate import (evaluate_model, preprocess_scan,
                       response_floor_from_model, scores_by_label)
from .localize import (blobs_to_boxes, boxes_from_json, boxes_to_json,
                       detect_blobs, iou)
from .nnet import CAEModel, TrainConfig, load_weights, save_weights, train
from .render import render_anomaly, render_boxes, render_layout, write_ppm
from .sampler import (SampleSet, extract_windows, label_by_boxes, load_samples,
                      save_samples)
from .synth import SynthSpec
from .towgeom import TowLayout, detect_layout


def _config_from_args(args) -> PipelineConfig:
    overrides = {}
    for f in fields(PipelineConfig):
        if hasattr(args, f.name):
            overrides[f.name] = getattr(args, f.name)
    return build_config(getattr(args, "config", None), overrides)


def _parse_scales(text: str) -> tuple[float, ...]:
    return tuple(float(s) for s in text.split(","))


def cmd_synth_gen(args) -> None:
    cfg = _config_from_args(args)
    base = SynthSpec(width=args.width, height=args.height, tow_count=cfg.tow_count,
                     tow_width=cfg.tow_width, seed=cfg.seed)
    entries = generate_corpus(args.output, base, args.train_scans,
                              args.test_defect_scans, args.test_normal_scans,
                              defects_per_scan=args.defects_per_scan)
    print(f"wrote {len(entries)} scans to {args.output}")


def cmd_preprocess(args) -> None:
    raw = load_pgm(args.input)
    filtered = median_filter_3x3(raw)
    normalized, degenerate = min_max_normalize(filtered)
    if degenerate:
        print(json.dumps({"warning": "degenerate-constant-image",
                          "message": "input has no relief; output is all zeros"}),
              file=sys.stderr)
    save_pgm(normalized, args.output)
    print(f"preprocessed {args.input} -> {args.output}")


def cmd_detect_tows(args) -> None:
    cfg = _config_from_args(args)
    dm = load_pgm(args.input, normalized=True)
    layout = detect_layout(dm, cfg.tow_count)
    Path(args.output).write_text(layout.to_json())
    print(f"detected {len(layout.centerlines)} centerlines -> {args.output}")


def cmd_extract(args) -> None:
    cfg = _config_from_args(args)
    if args.manifest:
        sset = _extract_from_corpus(args.manifest, args.role, cfg)
    else:
        if not args.input or not args.layout:
            raise InspectError("extract needs --input and --layout (or --manifest)")
        dm = load_pgm(args.input, normalized=True)
        layout = TowLayout.from_json(Path(args.layout).read_text())
        source_id = args.source_id or Path(args.input).stem
        sset = extract_windows(dm, layout, window=cfg.window, stride=cfg.stride,
                               source_id=source_id)
        if args.boxes:
            sset = label_by_boxes(sset, boxes_from_json(Path(args.boxes).read_text()))
    save_samples(sset, args.output)
    print(f"extracted {len(sset)} windows -> {args.output}")


def _extract_from_corpus(manifest_path, role, cfg):
    """Pool windows from every corpus scan of one role, run through the full
    preprocessing path; test windows get labeled from the ground truth."""
    _, entries = load_manifest(manifest_path)
    wanted = [e for e in entries if e.role == role]
    if not wanted:
        raise InspectError(f"manifest has no scans with role {role!r}")
    pooled = []
    for entry in wanted:
        pgm_path, _, _ = scan_paths(manifest_path, entry)
        dm = preprocess_scan(pgm_path)
        layout = detect_layout(dm, cfg.tow_count)
        sset = extract_windows(dm, layout, window=cfg.window, stride=cfg.stride,
                               source_id=entry.scan_id)
        boxes = load_scan_boxes(manifest_path, entry)
        if boxes or entry.role == "test":
            sset = label_by_boxes(sset, boxes)
        pooled.extend(sset.samples)
    return SampleSet(tuple(pooled), source_id=f"{Path(manifest_path).stem}:{role}",
                     window=cfg.window, stride=cfg.stride)


def cmd_train(args) -> None:
    cfg = _config_from_args(args)
    sset = load_samples(args.samples)
    model = CAEModel(cfg.latent_dim, seed=cfg.seed)
    tconf = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                        learning_rate=cfg.learning_rate, adam_beta1=cfg.adam_beta1,
                        adam_beta2=cfg.adam_beta2, adam_eps=cfg.adam_eps, seed=cfg.seed)
    model, history = train(model, sset, tconf)
    train_scores = score_samples(model, sset)
    model.meta = {
        "latent_dim": cfg.latent_dim,
        "epochs": cfg.epochs,
        "final_train_mse": history[-1],
        **score_percentiles(train_scores),
    }
    save_weights(model, args.output)
    if args.loss_csv:
        lines = ["epoch,mean_mse"]
        lines += [f"{i},{loss!r}" for i, loss in enumerate(history)]
        Path(args.loss_csv).write_text("\n".join(lines) + "\n")
    print(f"trained latent_dim={cfg.latent_dim} for {cfg.epochs} epochs, "
          f"final mse {history[-1]:.3e} -> {args.output}")


def cmd_sweep_latent(args) -> None:
    cfg = _config_from_args(args)
    train_set = load_samples(args.samples)
    test_set = load_samples(args.test_samples)
    dims = [int(d) for d in args.latent_dims.split(",")]
    models_dir = Path(args.models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    rows = ["latent_dim,final_train_mse,test_auc"]
    for dim in dims:
        model = CAEModel(dim, seed=cfg.seed)
        tconf = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                            learning_rate=cfg.learning_rate, seed=cfg.seed)
        model, history = train(model, train_set, tconf)
        train_scores = score_samples(model, train_set)
        model.meta = {"latent_dim": dim, "epochs": cfg.epochs,
                      "final_train_mse": history[-1],
                      **score_percentiles(train_scores)}
        save_weights(model, models_dir / f"cae_latent{dim}.caew")
        normal, abnormal = scores_by_label(model, test_set)
        auc = roc_curve(normal, abnormal).auc
        rows.append(f"{dim},{history[-1]!r},{auc!r}")
        print(f"latent {dim}: final mse {history[-1]:.3e}, test auc {auc:.4f}")
    Path(args.output).write_text("\n".join(rows) + "\n")


def cmd_score(args) -> None:
    cfg = _config_from_args(args)
    model = load_weights(args.model)
    dm = load_pgm(args.input, normalized=True)
    layout = TowLayout.from_json(Path(args.layout).read_text())
    amap = build_anomaly_map(model, dm, layout, window=cfg.window, stride=cfg.stride)
    Path(args.output).write_text(amap.to_csv())
    n = sum(len(s.scores) for s in amap.signals)
    print(f"scored {n} windows -> {args.output}")


def cmd_threshold(args) -> None:
    model = load_weights(args.model)
    sset = load_samples(args.samples)
    normal, abnormal = scores_by_label(model, sset)
    curve = roc_curve(normal, abnormal)
    t = best_threshold(curve)
    idx = int(np.argmin(np.abs(curve.thresholds - t)))
    doc = {"threshold": t, "auc": curve.auc,
           "fpr": float(curve.fpr[idx]), "tpr": float(curve.tpr[idx])}
    Path(args.output).write_text(json.dumps(doc, indent=2))
    print(f"selected threshold {t:.3e} (auc {curve.auc:.4f}) -> {args.output}")


def cmd_localize(args) -> None:
    cfg = _config_from_args(args)
    dm = load_pgm(args.input, normalized=True)
    layout = TowLayout.from_json(Path(args.layout).read_text())
    amap = AnomalyMap.from_csv(Path(args.anomaly).read_text(), dm.width, dm.height,
                               window=cfg.window, stride=cfg.stride)
    if args.floor is not None:
        floor = args.floor
    else:
        floor = response_floor_from_model(load_weights(args.model), cfg.floor_frac)
    blobs = []
    for sig in amap.signals:
        blobs.extend(detect_blobs(sig.scores, cfg.scales, floor,
                                  tow_index=sig.tow_index))
    boxes = blobs_to_boxes(blobs, layout, cfg.tow_width, cfg.stride,
                           window=cfg.window, image_width=dm.width,
                           image_height=dm.height)
    Path(args.output).write_text(boxes_to_json(boxes))
    print(f"{len(boxes)} defect boxes (floor {floor:.3e}) -> {args.output}")


def cmd_evaluate(args) -> None:
    cfg = _config_from_args(args)
    model = load_weights(args.model)
    report = evaluate_model(model, args.manifest, cfg,
                            threshold=args.threshold, floor=args.floor)
    Path(args.output).write_text(json.dumps(report, indent=2))
    cls = report["classification"]
    loc = report["localization"]
    print(f"threshold {report['threshold']:.3e}  auc {cls['auc']:.4f}  "
          f"precision {cls['precision']}  recall {cls['recall']}  f1 {cls['f1']}  "
          f"accuracy {cls['accuracy']:.4f}")
    print(f"confusion tp={cls['confusion']['tp']} fp={cls['confusion']['fp']} "
          f"tn={cls['confusion']['tn']} fn={cls['confusion']['fn']}")
    print(f"mIoU {loc['mean_iou']}  covered@0.3 {loc['covered_at_03']}/"
          f"{loc['ground_truth_total']}  boxes on defect-free scans "
          f"{loc['defect_free_box_count']}")
    print(f"report -> {args.output}")


def cmd_render(args) -> None:
    cfg = _config_from_args(args)
    dm = load_pgm(args.input, normalized=True)
    if args.mode == "tows":
        layout = TowLayout.from_json(Path(args.layout).read_text())
        img = render_layout(dm, layout)
    elif args.mode == "anomaly":
        amap = AnomalyMap.from_csv(Path(args.anomaly).read_text(), dm.width, dm.height,
                                   window=cfg.window, stride=cfg.stride)
        img = render_anomaly(dm, amap)
    else:
        pred = boxes_from_json(Path(args.pred).read_text()) if args.pred else []
        truth = boxes_from_json(Path(args.truth).read_text()) if args.truth else []
        img = render_boxes(dm, pred, truth)
        if args.sidecar:
            pairs = [{"pred": pi, "truth": ti, "iou": iou(p, t)}
                     for ti, t in enumerate(truth) for pi, p in enumerate(pred)
                     if iou(p, t) > 0]
            Path(args.sidecar).write_text(json.dumps({"iou_pairs": pairs}, indent=2))
    write_ppm(args.output, img)
    print(f"rendered {args.mode} overlay -> {args.output}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="towinspect",
        description="Unsupervised defect detection for tape-layup depth maps.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, config=True, seed=False):
        if config:
            p.add_argument("--config", help="flat key = value config file")
        if seed:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth-gen", help="generate a synthetic corpus")
    add_common(p, seed=True)
    p.add_argument("--output", required=True)
    p.add_argument("--train-scans", type=int, default=42)
    p.add_argument("--test-defect-scans", type=int, default=2)
    p.add_argument("--test-normal-scans", type=int, default=2)
    p.add_argument("--defects-per-scan", type=int, default=3)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--tow-count", type=int, dest="tow_count", default=None)
    p.add_argument("--tow-width", type=int, dest="tow_width", default=None)

    p = sub.add_parser("preprocess", help="median filter + min-max normalize")
    add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("detect-tows", help="Hough edges -> tow centerlines")
    add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--tow-count", type=int, dest="tow_count", default=None)

    p = sub.add_parser("extract", help="strided window extraction along centerlines")
    add_common(p)
    p.add_argument("--input")
    p.add_argument("--layout")
    p.add_argument("--manifest", help="pool windows from all corpus scans of --role")
    p.add_argument("--role", choices=("train", "test"), default="train")
    p.add_argument("--output", required=True)
    p.add_argument("--boxes", help="ground-truth boxes for labeling (evaluation)")
    p.add_argument("--source-id")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--tow-count", type=int, dest="tow_count", default=None)
    p.add_argument("--tow-width", type=int, dest="tow_width", default=None)

    p = sub.add_parser("train", help="train the autoencoder on normal windows")
    add_common(p, seed=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--loss-csv")
    p.add_argument("--latent-dim", type=int, dest="latent_dim", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    p.add_argument("--learning-rate", type=float, dest="learning_rate", default=None)

    p = sub.add_parser("sweep-latent", help="train several latent dims, emit MSE/AUC CSV")
    add_common(p, seed=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--test-samples", required=True)
    p.add_argument("--latent-dims", default="2,16,128")
    p.add_argument("--models-dir", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)

    p = sub.add_parser("score", help="anomaly map (windowed MSE) for one scan")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)

    p = sub.add_parser("threshold", help="ROC threshold from labeled samples")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("localize", help="blob detection -> defect boxes")
    add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--anomaly", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--model", help="weights file with recorded training score scale")
    p.add_argument("--floor", type=float, help="absolute response floor override")
    p.add_argument("--scales", type=_parse_scales, default=None)
    p.add_argument("--floor-frac", type=float, dest="floor_frac", default=None)
    p.add_argument("--tow-width", type=int, dest="tow_width", default=None)

    p = sub.add_parser("evaluate", help="full test-corpus evaluation")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--floor", type=float)
    p.add_argument("--tow-count", type=int, dest="tow_count", default=None)
    p.add_argument("--tow-width", type=int, dest="tow_width", default=None)
    p.add_argument("--scales", type=_parse_scales, default=None)
    p.add_argument("--floor-frac", type=float, dest="floor_frac", default=None)

    p = sub.add_parser("render", help="PPM overlays (tows / anomaly / boxes)")
    add_common(p)
    p.add_argument("--mode", choices=("tows", "anomaly", "boxes"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--layout")
    p.add_argument("--anomaly")
    p.add_argument("--pred")
    p.add_argument("--truth")
    p.add_argument("--sidecar")
    return parser


HANDLERS = {
    "synth-gen": cmd_synth_gen,
    "preprocess": cmd_preprocess,
    "detect-tows": cmd_detect_tows,
    "extract": cmd_extract,
    "train": cmd_train,
    "sweep-latent": cmd_sweep_latent,
    "score": cmd_score,
    "threshold": cmd_threshold,
    "localize": cmd_localize,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = HANDLERS[args.command]
    try:
        handler(args)
    except (InspectError, OSError, ValueError, KeyError) as e:
        code = e.code if isinstance(e, InspectError) else type(e).__name__
        print(json.dumps({"error": code, "message": str(e), "stage": args.command}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
