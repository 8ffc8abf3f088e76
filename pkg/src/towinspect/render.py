"""PPM (P6) overlay renders: detected geometry, anomaly maps, defect boxes.

Plain binary PPM keeps the toolkit free of imaging dependencies. All
overlays draw on top of the grayscale depth map; anomaly dots encode the
score in the red channel after normalizing the map's own score range
(display only, raw scores stay in the CSV).
"""

from __future__ import annotations

import numpy as np

from .anomaly import AnomalyMap
from .depthmap import DepthMap
from .towgeom import TowLayout

EDGE_COLOR = (220, 40, 40)
BOUND_COLOR = (60, 90, 230)
CENTER_COLOR = (40, 200, 80)
PRED_COLOR = (255, 60, 60)
TRUTH_COLOR = (60, 220, 60)
DOT_RADIUS = 1


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) rgb array, got {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def grayscale_base(dm: DepthMap) -> np.ndarray:
    px = dm.pixels
    lo, hi = float(px.min()), float(px.max())
    scaled = np.zeros_like(px) if hi == lo else (px - lo) / (hi - lo)
    gray = np.rint(scaled * 255.0).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def _draw_hline(img, row, color):
    if 0 <= row < img.shape[0]:
        img[row, :] = color


def _draw_vline(img, col, color):
    if 0 <= col < img.shape[1]:
        img[:, col] = color


def _draw_rect(img, x, y, w, h, color):
    h_img, w_img = img.shape[:2]
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, w_img), min(y + h, h_img)
    if x1 <= x0 or y1 <= y0:
        return
    img[y0, x0:x1] = color
    img[y1 - 1, x0:x1] = color
    img[y0:y1, x0] = color
    img[y0:y1, x1 - 1] = color


def render_layout(dm: DepthMap, layout: TowLayout) -> np.ndarray:
    img = grayscale_base(dm)
    for row in layout.horizontal_edges:
        _draw_hline(img, row, EDGE_COLOR)
    for col in layout.vertical_bounds:
        _draw_vline(img, col, BOUND_COLOR)
    for cl in layout.centerlines:
        if 0 <= cl.row < img.shape[0]:
            img[cl.row, cl.x_start:cl.x_end + 1] = CENTER_COLOR
    return img


def render_anomaly(dm: DepthMap, amap: AnomalyMap) -> np.ndarray:
    img = grayscale_base(dm)
    scores = np.concatenate([s.scores for s in amap.signals])
    lo, hi = float(scores.min()), float(scores.max())
    span = hi - lo if hi > lo else 1.0
    for sig in amap.signals:
        for cx, cy, m in zip(sig.centers_x, sig.centers_y, sig.scores):
            level = (m - lo) / span
            color = (int(round(55 + 200 * level)), 40, int(round(200 * (1 - level))))
            y0, y1 = max(cy - DOT_RADIUS, 0), min(cy + DOT_RADIUS + 1, img.shape[0])
            x0, x1 = max(cx - DOT_RADIUS, 0), min(cx + DOT_RADIUS + 1, img.shape[1])
            img[y0:y1, x0:x1] = color
    return img


def render_boxes(dm: DepthMap, predicted, ground_truth=()) -> np.ndarray:
    img = grayscale_base(dm)
    for box in ground_truth:
        _draw_rect(img, box.x, box.y, box.w, box.h, TRUTH_COLOR)
    for box in predicted:
        _draw_rect(img, box.x, box.y, box.w, box.h, PRED_COLOR)
    return img
