"""Unsupervised defect detection and localization for tape-by-tape
composite depth maps.

The pipeline: denoise and normalize a depth map, find tow centerlines with
an axis-aligned Hough transform, slide windows along them, score each
window by autoencoder reconstruction error, pick the operating threshold
from the ROC curve, and localize defects with 1D scale-space blob detection
on the per-tow score signals.
"""

__version__ = "0.1.0"

from .depthmap import DepthMap, MapState, load_pgm, median_filter_3x3, \
    min_max_normalize, save_pgm
from .errors import InspectError
from .towgeom import Centerline, TowLayout, detect_layout, edge_map, \
    estimate_centerlines, hough_lines
from .sampler import SampleLabel, SampleSet, WindowSample, extract_windows, \
    split_train_holdout
from .nnet import CAEModel, TrainConfig, load_weights, save_weights, train
from .anomaly import AnomalyMap, ClassificationReport, RocCurve, \
    best_threshold, build_anomaly_map, classification_report, roc_curve, \
    window_mse
from .localize import Blob, DefectBox, blobs_to_boxes, detect_blobs, iou, \
    match_and_score, scale_space_response
from .synth import DefectKind, DefectSpec, SynthSpec, generate
from .config import PipelineConfig
