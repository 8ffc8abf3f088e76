"""Tow geometry: Sobel edge maps, axis-aligned Hough lines, centerlines.

Tows in the scans are straight and horizontal with a known count, so the
Hough accumulator only needs the two axis-aligned angles: theta = 90 deg for
horizontal tow boundaries (rho = row) and theta = 0 deg for the vertical
extent of the layup (rho = column).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .depthmap import DepthMap, MapState
from .errors import InspectError

# Greedy peak suppression window (+-3 px) and the default vote floor as a
# fraction of a full-length line.
NMS_RADIUS = 3
VOTE_FLOOR_FRACTION = 0.3


class Orientation(enum.Enum):
    HORIZONTAL = "horizontal"  # lines of constant row
    VERTICAL = "vertical"      # lines of constant column


class FewerLinesThanExpected(InspectError):
    """Hough found fewer qualifying peaks than the configured line count."""


class TooFewEdges(InspectError):
    """Centerline estimation needs at least two horizontal edges."""


@dataclass(frozen=True)
class Centerline:
    row: int
    x_start: int
    x_end: int
    tow_index: int

    def __post_init__(self):
        if self.x_start >= self.x_end:
            raise ValueError(f"centerline x_start {self.x_start} must be < x_end {self.x_end}")
        if self.row < 0:
            raise ValueError(f"centerline row {self.row} out of range")


@dataclass(frozen=True)
class TowLayout:
    """Detected tow boundaries and the centerlines derived from them."""

    horizontal_edges: tuple[int, ...]
    vertical_bounds: tuple[int, int]
    centerlines: tuple[Centerline, ...]

    def __post_init__(self):
        edges = tuple(int(e) for e in self.horizontal_edges)
        object.__setattr__(self, "horizontal_edges", edges)
        object.__setattr__(self, "vertical_bounds", tuple(int(v) for v in self.vertical_bounds))
        object.__setattr__(self, "centerlines", tuple(self.centerlines))
        if any(b >= a for a, b in zip(edges[1:], edges[:-1])):
            raise ValueError("horizontal_edges must be strictly increasing")
        if edges and edges[0] < 0:
            raise ValueError("horizontal_edges must be non-negative")
        left, right = self.vertical_bounds
        if not 0 <= left < right:
            raise ValueError(f"invalid vertical bounds ({left}, {right})")
        if len(self.centerlines) != max(len(edges) - 1, 0) or not self.centerlines:
            raise ValueError("layout needs one centerline per pair of consecutive edges")
        for k, cl in enumerate(self.centerlines):
            if not edges[k] < cl.row < edges[k + 1]:
                raise ValueError(f"centerline {k} row {cl.row} not between edges "
                                 f"{edges[k]} and {edges[k + 1]}")

    def to_json(self) -> str:
        return json.dumps({
            "horizontal_edges": list(self.horizontal_edges),
            "vertical_bounds": list(self.vertical_bounds),
            "centerlines": [
                {"row": c.row, "x_start": c.x_start, "x_end": c.x_end, "tow_index": c.tow_index}
                for c in self.centerlines
            ],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TowLayout":
        doc = json.loads(text)
        return cls(
            horizontal_edges=tuple(doc["horizontal_edges"]),
            vertical_bounds=tuple(doc["vertical_bounds"]),
            centerlines=tuple(
                Centerline(c["row"], c["x_start"], c["x_end"], c["tow_index"])
                for c in doc["centerlines"]
            ),
        )


def edge_map(dm: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    """Sobel gradient magnitude plus a binary edge mask.

    The mask threshold adapts to the image: mean + 2*stddev of the gradient
    magnitude. A constant image therefore yields an empty mask.
    """
    if dm.state is not MapState.NORMALIZED:
        raise ValueError("edge_map expects a normalized map")
    p = np.pad(dm.pixels, 1, mode="edge")
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]) \
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]) \
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    magnitude = np.hypot(gx, gy)
    threshold = magnitude.mean() + 2.0 * magnitude.std()
    return magnitude, magnitude > threshold


def hough_lines(mask: np.ndarray, orientation: Orientation, expected_count: int,
                vote_floor_fraction: float = VOTE_FLOOR_FRACTION) -> list[int]:
    """Detect up to expected_count axis-aligned lines in a binary edge mask.

    Votes accumulate per rho at 1 px resolution for the requested angle only.
    Peaks are taken in descending vote order with non-maximum suppression
    over a +-NMS_RADIUS rho window, then returned sorted ascending. Raises
    FewerLinesThanExpected when too few peaks clear the vote floor (a
    fraction of the votes a full-length line would collect).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.size == 0:
        raise ValueError("mask must be a non-empty 2D array")
    if expected_count < 1:
        raise ValueError("expected_count must be >= 1")
    ys, xs = np.nonzero(mask)
    if orientation is Orientation.HORIZONTAL:
        rho, rho_range, full_line = ys, mask.shape[0], mask.shape[1]
    else:
        rho, rho_range, full_line = xs, mask.shape[1], mask.shape[0]
    votes = np.bincount(rho, minlength=rho_range)
    floor = vote_floor_fraction * full_line

    candidates = np.nonzero(votes > floor)[0]
    # Descending votes, ties toward lower rho.
    order = candidates[np.lexsort((candidates, -votes[candidates]))]
    peaks: list[int] = []
    for r in order:
        if all(abs(int(r) - p) > NMS_RADIUS for p in peaks):
            peaks.append(int(r))
    if len(peaks) < expected_count:
        raise FewerLinesThanExpected(
            f"found {len(peaks)} {orientation.value} lines above the vote floor, "
            f"expected {expected_count}"
        )
    return sorted(peaks[:expected_count])


def estimate_centerlines(horizontal_edges, vertical_bounds) -> TowLayout:
    """Average consecutive horizontal edges into tow centerlines.

    Centerline rows round half up; x ranges are clipped to the vertical
    bounds; tow indices run top to bottom from 0.
    """
    edges = sorted(int(e) for e in horizontal_edges)
    if len(edges) < 2:
        raise TooFewEdges(f"need >= 2 horizontal edges, got {len(edges)}")
    left, right = int(vertical_bounds[0]), int(vertical_bounds[1])
    centerlines = tuple(
        Centerline(row=(edges[k] + edges[k + 1] + 1) // 2,
                   x_start=left, x_end=right, tow_index=k)
        for k in range(len(edges) - 1)
    )
    return TowLayout(tuple(edges), (left, right), centerlines)


# columns this close to a vertical bound are excluded from horizontal-line
# voting: the corner pixels mix both gradient directions and would bias the
# vote toward the tow-side boundary row
BOUND_GUARD = 2


def detect_layout(dm: DepthMap, tow_count: int) -> TowLayout:
    """Full geometry stage: edge mask -> Hough in both axes -> centerlines.

    The two vertical bounds are detected first; horizontal boundaries
    (tow_count + 1 of them: one per groove plus the outer layup edges) are
    then voted only from columns strictly inside those bounds, since
    centerlines are bounded within the vertical lines anyway.
    """
    _, mask = edge_map(dm)
    vertical = hough_lines(mask, Orientation.VERTICAL, 2)
    left, right = vertical[0], vertical[1]
    inner = mask[:, min(left + BOUND_GUARD, mask.shape[1] - 1):max(right - BOUND_GUARD + 1, 1)]
    horizontal = hough_lines(inner, Orientation.HORIZONTAL, tow_count + 1)
    return estimate_centerlines(horizontal, (left, right))
