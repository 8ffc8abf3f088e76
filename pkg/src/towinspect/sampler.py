"""Window extraction along tow centerlines and sample-set persistence.

Windows are square (default 32x32), slid along each centerline with a
default stride of 8 px so neighboring samples overlap by 24 columns. A
sample set persists as a JSON manifest plus a flat little-endian float32
blob holding the pixel data in manifest order.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .depthmap import DepthMap, MapState
from .errors import InspectError
from .towgeom import TowLayout

DEFAULT_WINDOW = 32
DEFAULT_STRIDE = 8


class WindowTooLarge(InspectError):
    """Requested window exceeds the image dimensions."""


class SampleSetFormatError(InspectError):
    """Persisted sample set is inconsistent (blob length vs manifest)."""


class SampleLabel(enum.Enum):
    UNLABELED = "unlabeled"
    NORMAL = "normal"
    ABNORMAL = "abnormal"


@dataclass(frozen=True)
class WindowSample:
    """One square crop centered on a tow centerline."""

    pixels: np.ndarray  # (window, window) float32 in [0, 1]
    center_x: int
    center_y: int
    tow_index: int
    label: SampleLabel = SampleLabel.UNLABELED


@dataclass(frozen=True)
class SampleSet:
    samples: tuple[WindowSample, ...]
    source_id: str = ""
    window: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def pixel_stack(self) -> np.ndarray:
        """All sample pixels as one (n, window, window) float32 array."""
        if not self.samples:
            return np.zeros((0, self.window, self.window), dtype=np.float32)
        return np.stack([s.pixels for s in self.samples])


def extract_windows(dm: DepthMap, layout: TowLayout,
                    window: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE,
                    source_id: str = "") -> SampleSet:
    """Slide a window along every centerline and crop samples.

    Centers start at x_start + window/2 and advance by stride while the
    footprint stays left of x_end. Windows cover [center-b, center+b-1] in
    both axes (b = window/2); centerlines closer than b to the top or
    bottom border are shifted inward so the footprint fits.
    """
    if dm.state is not MapState.NORMALIZED:
        raise ValueError("extract_windows expects a normalized map")
    if window % 2 != 0 or window < 2:
        raise ValueError(f"window must be even and >= 2, got {window}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if window > min(dm.width, dm.height):
        raise WindowTooLarge(f"window {window} exceeds image {dm.width}x{dm.height}")

    b = window // 2
    px32 = dm.pixels.astype(np.float32)
    samples: list[WindowSample] = []
    for cl in layout.centerlines:
        cy = min(max(cl.row, b), dm.height - b)
        cx = cl.x_start + b
        while cx + b <= cl.x_end:
            patch = px32[cy - b:cy + b, cx - b:cx + b].copy()
            samples.append(WindowSample(patch, cx, cy, cl.tow_index))
            cx += stride
    return SampleSet(tuple(samples), source_id=source_id, window=window, stride=stride)


def split_train_holdout(sset: SampleSet, holdout_fraction: float,
                        seed: int) -> tuple[SampleSet, SampleSet]:
    """Seeded shuffle then split; the two halves are disjoint and cover the input."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    n = len(sset.samples)
    n_holdout = int(round(n * holdout_fraction))
    perm = np.random.default_rng(seed).permutation(n)
    holdout = tuple(sset.samples[i] for i in perm[:n_holdout])
    train = tuple(sset.samples[i] for i in perm[n_holdout:])
    return (replace(sset, samples=train), replace(sset, samples=holdout))


def label_by_boxes(sset: SampleSet, boxes, abnormal_overlap: float = 0.25) -> SampleSet:
    """Label samples against ground-truth defect boxes (evaluation only).

    A sample is Abnormal when defect boxes cover at least abnormal_overlap
    of its footprint, Normal when they cover none of it, and Unlabeled in
    between (boundary windows are ambiguous either way and are excluded
    from metrics).
    """
    b = sset.window // 2
    area = float(sset.window * sset.window)
    labeled = []
    for s in sset.samples:
        x0, y0 = s.center_x - b, s.center_y - b
        x1, y1 = x0 + sset.window, y0 + sset.window
        covered = 0.0
        for box in boxes:
            ox = min(x1, box.x + box.w) - max(x0, box.x)
            oy = min(y1, box.y + box.h) - max(y0, box.y)
            if ox > 0 and oy > 0:
                covered += ox * oy
        if covered == 0.0:
            label = SampleLabel.NORMAL
        elif covered / area >= abnormal_overlap:
            label = SampleLabel.ABNORMAL
        else:
            label = SampleLabel.UNLABELED
        labeled.append(replace(s, label=label))
    return replace(sset, samples=tuple(labeled))


def save_samples(sset: SampleSet, manifest_path) -> None:
    """Write the JSON manifest and the float32 pixel blob next to it."""
    manifest_path = Path(manifest_path)
    blob_name = manifest_path.stem + ".f32"
    doc = {
        "source_id": sset.source_id,
        "window": sset.window,
        "stride": sset.stride,
        "blob": blob_name,
        "samples": [
            {"center_x": s.center_x, "center_y": s.center_y,
             "tow_index": s.tow_index, "label": s.label.value}
            for s in sset.samples
        ],
    }
    manifest_path.write_text(json.dumps(doc, indent=2))
    blob = sset.pixel_stack().astype("<f4").tobytes()
    (manifest_path.parent / blob_name).write_bytes(blob)


def load_samples(manifest_path) -> SampleSet:
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    window = int(doc["window"])
    entries = doc["samples"]
    raw = (manifest_path.parent / doc["blob"]).read_bytes()
    expected = len(entries) * window * window * 4
    if len(raw) != expected:
        raise SampleSetFormatError(
            f"{manifest_path}: blob holds {len(raw)} bytes, manifest implies {expected}"
        )
    pixels = np.frombuffer(raw, dtype="<f4").reshape(len(entries), window, window)
    samples = tuple(
        WindowSample(pixels[i].copy(), e["center_x"], e["center_y"],
                     e["tow_index"], SampleLabel(e["label"]))
        for i, e in enumerate(entries)
    )
    return SampleSet(samples, source_id=doc["source_id"], window=window,
                     stride=int(doc["stride"]))
