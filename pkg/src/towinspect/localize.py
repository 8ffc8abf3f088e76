"""1D scale-space blob detection on per-tow anomaly signals, box conversion,
and IoU-based evaluation.

The blob response approximates the scale-normalized second derivative of
the Gaussian-smoothed signal with differences of successively smoothed
copies (DoG), ratio-adjusted for the uneven scale ladder and negated so
bumps of high reconstruction error come out positive. A detected blob at
scale sigma maps to an image-space box of width 2*sqrt(2)*sigma*stride
centered on the tow centerline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InspectError
from .towgeom import TowLayout

DEFAULT_SCALES = (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)
BLOB_RADIUS_FACTOR = math.sqrt(2.0)


class SignalTooShort(InspectError):
    """Blob detection needs a signal of at least 3 samples."""


class UnknownTow(InspectError):
    """A blob references a tow index missing from the layout."""


@dataclass(frozen=True)
class Blob:
    """Local maximum of the scale-space response along one tow signal."""

    tow_index: int
    x: float        # signal-sample coordinate along the tow
    sigma: float    # characteristic scale, in signal samples
    response: float


@dataclass(frozen=True)
class DefectBox:
    """Axis-aligned pixel box; ground-truth boxes carry a label instead of
    blob provenance."""

    x: int
    y: int
    w: int
    h: int
    tow: int = -1
    sigma: float | None = None
    response: float | None = None
    label: str | None = None

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box must be at least 1x1, got {self.w}x{self.h}")

    def as_dict(self) -> dict:
        d = {"x": self.x, "y": self.y, "w": self.w, "h": self.h, "tow": self.tow,
             "sigma": self.sigma, "response": self.response}
        if self.label is not None:
            d["label"] = self.label
        return d


def boxes_to_json(boxes) -> str:
    return json.dumps({"boxes": [b.as_dict() for b in boxes]}, indent=2)


def boxes_from_json(text: str) -> list[DefectBox]:
    doc = json.loads(text)
    return [
        DefectBox(b["x"], b["y"], b["w"], b["h"], b.get("tow", -1),
                  b.get("sigma"), b.get("response"), b.get("label"))
        for b in doc["boxes"]
    ]


def gaussian_smooth(signal: np.ndarray, sigma: float) -> np.ndarray:
    """Convolve with a unit-sum Gaussian kernel; borders edge-replicated."""
    radius = max(1, int(math.ceil(4.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    padded = np.pad(np.asarray(signal, dtype=np.float64), radius, mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def scale_space_response(signal, sigmas=DEFAULT_SCALES) -> np.ndarray:
    """Scale-normalized blob response, one row per scale-ladder rung.

    Row i holds sigma_i * (G_{sigma_i}*f - G_{sigma_i+1}*f) / (sigma_i+1 -
    sigma_i): the DoG approximation of -sigma^2 d2/dx2 of the smoothed
    signal, attributed to the lower scale of each pair. The array has
    len(sigmas) - 1 rows and one column per signal sample.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size < 3:
        raise SignalTooShort(f"need a 1D signal of >= 3 samples, got shape {signal.shape}")
    sigmas = [float(s) for s in sigmas]
    if len(sigmas) < 2:
        raise ValueError("need at least two scales for DoG differences")
    if any(s < 0.5 for s in sigmas) or any(b <= a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError(f"scales must be ascending and >= 0.5, got {sigmas}")
    smoothed = [gaussian_smooth(signal, s) for s in sigmas]
    response = np.empty((len(sigmas) - 1, signal.size), dtype=np.float64)
    for i in range(len(sigmas) - 1):
        response[i] = (smoothed[i] - smoothed[i + 1]) * (sigmas[i] / (sigmas[i + 1] - sigmas[i]))
    return response


def detect_blobs(signal, sigmas=DEFAULT_SCALES, response_floor: float = 0.0,
                 tow_index: int = -1) -> list[Blob]:
    """Find blobs as 3x3 local maxima of the response in (scale, x) space.

    Detections above the floor go through overlap suppression: of two blobs
    closer than max(sigma_1, sigma_2) samples, only the stronger survives.
    Returns blobs sorted by x; an empty list is a valid result.
    """
    resp = scale_space_response(signal, sigmas)
    padded = np.pad(resp, 1, constant_values=-np.inf)
    neighborhood = np.full_like(resp, -np.inf)
    for di in range(3):
        for dj in range(3):
            if di == dj == 1:
                continue
            shifted = padded[di:di + resp.shape[0], dj:dj + resp.shape[1]]
            neighborhood = np.maximum(neighborhood, shifted)
    is_peak = (resp >= neighborhood) & (resp > response_floor)

    scale_idx, x_idx = np.nonzero(is_peak)
    candidates = sorted(
        (Blob(tow_index, float(x), float(sigmas[s]), float(resp[s, x]))
         for s, x in zip(scale_idx, x_idx)),
        key=lambda b: (-b.response, b.x, b.sigma),
    )
    kept: list[Blob] = []
    for cand in candidates:
        if all(abs(cand.x - k.x) >= max(cand.sigma, k.sigma) for k in kept):
            kept.append(cand)
    return sorted(kept, key=lambda b: b.x)


def blobs_to_boxes(blobs, layout: TowLayout, tow_width: int, stride: int,
                   window: int = 32, image_width: int | None = None,
                   image_height: int | None = None) -> list[DefectBox]:
    """Map blobs from signal space onto pixel boxes spanning the full tow.

    Box center x = blob.x * stride + first window center of the tow; width
    is the blob radius convention 2*sqrt(2)*sigma scaled by the stride;
    height is the tow width, centered on the centerline. Boxes are clipped
    to the image bounds when dimensions are given.
    """
    by_tow = {cl.tow_index: cl for cl in layout.centerlines}
    boxes = []
    for blob in blobs:
        cl = by_tow.get(blob.tow_index)
        if cl is None:
            raise UnknownTow(f"blob references tow {blob.tow_index} absent from layout")
        cx = blob.x * stride + cl.x_start + window // 2
        w = max(1, int(round(2.0 * BLOB_RADIUS_FACTOR * blob.sigma * stride)))
        x0 = int(round(cx - w / 2.0))
        x1 = x0 + w
        y0 = cl.row - (tow_width - 1) // 2
        y1 = y0 + tow_width
        if image_width is not None:
            x0, x1 = max(x0, 0), min(x1, image_width)
        if image_height is not None:
            y0, y1 = max(y0, 0), min(y1, image_height)
        boxes.append(DefectBox(x0, y0, x1 - x0, y1 - y0, tow=blob.tow_index,
                               sigma=blob.sigma, response=blob.response))
    return boxes


def iou(a: DefectBox, b: DefectBox) -> float:
    """Intersection over union of two pixel boxes, in [0, 1]."""
    ox = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    oy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ox <= 0 or oy <= 0:
        return 0.0
    inter = ox * oy
    return inter / (a.w * a.h + b.w * b.h - inter)


def match_and_score(predicted, ground_truth) -> tuple[float, list[tuple[int, int, float]]]:
    """Greedy one-to-one matching by descending IoU.

    Unmatched ground-truth boxes contribute IoU 0; the mean is taken over
    ground-truth boxes. Returns (mean IoU, [(gt_index, pred_index, iou)]).
    With no ground truth the mean is 1.0 when nothing was predicted
    (vacuously correct) and 0.0 otherwise.
    """
    predicted = list(predicted)
    ground_truth = list(ground_truth)
    if not ground_truth:
        return (1.0 if not predicted else 0.0), []
    pairs = sorted(
        ((iou(g, p), gi, pi) for gi, g in enumerate(ground_truth)
         for pi, p in enumerate(predicted)),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    used_g: set[int] = set()
    used_p: set[int] = set()
    assignments: list[tuple[int, int, float]] = []
    for value, gi, pi in pairs:
        if value <= 0.0:
            break
        if gi in used_g or pi in used_p:
            continue
        used_g.add(gi)
        used_p.add(pi)
        assignments.append((gi, pi, value))
    mean_iou = sum(a[2] for a in assignments) / len(ground_truth)
    return mean_iou, assignments
