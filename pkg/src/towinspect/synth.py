"""Synthetic tape-layup depth maps with ground-truth geometry and defects.

The generated surface mimics the structure the pipeline expects: straight
horizontal tows of near-uniform elevation separated by narrow grooves,
surrounded by a lower background margin, with a smooth large-scale bow (so
normalization has something to undo), Gaussian surface noise, and sparse
salt-and-pepper impulses (so the median filter has something to remove).
Grooves are 2 px wide: the 3x3 median prefilter erases 1 px lines outright,
which would leave no tow boundaries to detect.

Defects render both raised and recessed anomalies so a detector cannot
shortcut on sign. Everything is seeded: the same spec reproduces the map
bitwise, and the defect stream is separate from the surface stream so a
defective render differs from its defect-free twin only inside the
declared footprints.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .depthmap import DepthMap, MapState
from .localize import DefectBox
from .towgeom import TowLayout, estimate_centerlines

BASE_LEVEL = 1.0


class DefectKind(enum.Enum):
    GAP = "gap"
    OVERLAP = "overlap"
    TWIST = "twist"
    FOREIGN_OBJECT = "foreign_object"


@dataclass(frozen=True)
class DefectSpec:
    kind: DefectKind
    tow_index: int
    x_start: int
    x_extent: int
    magnitude: float = 0.1

    def __post_init__(self):
        if self.x_extent < 4:
            raise ValueError(f"defect extent must be >= 4 px, got {self.x_extent}")
        if self.magnitude < 0:
            raise ValueError("defect magnitude must be >= 0")


@dataclass(frozen=True)
class SynthSpec:
    width: int = 256
    height: int = 256
    tow_count: int = 8
    tow_width: int = 21    # window 32 ~ 1.5x tape width
    groove_depth: float = 0.15
    surface_noise_std: float | None = None  # None -> 2% of groove_depth
    seed: int = 0
    defects: tuple[DefectSpec, ...] = ()
    side_margin: int = 12
    bow_amplitude: float = 0.15
    tow_offset_std: float = 0.005
    impulse_rate: float = 0.001
    impulse_magnitude: float | None = None  # None -> 5x groove_depth
    groove_width: int = 2  # must survive the 3x3 median prefilter
    tow_width_jitter: int = 1  # per-tow width wobble: phase diversity for training

    def __post_init__(self):
        object.__setattr__(self, "defects", tuple(self.defects))
        if self.tow_count < 1 or self.tow_width < 3:
            raise ValueError("need tow_count >= 1 and tow_width >= 3")
        if not 2 <= self.groove_width <= 3:
            raise ValueError("groove_width must be 2 or 3 px")
        if not 0 <= self.tow_width_jitter < self.tow_width // 2:
            raise ValueError("tow_width_jitter must be small and non-negative")
        if self.tow_count * (self.tow_width + 1) > self.height:
            raise ValueError(
                f"{self.tow_count} tows of width {self.tow_width} do not fit "
                f"in height {self.height}"
            )
        if self.height < self.span + 2 * self.groove_width:
            raise ValueError("layup needs background rows above and below the tows")
        if self.width < 2 * self.side_margin + 8:
            raise ValueError(f"width {self.width} too small for side margin {self.side_margin}")
        for p in (self.groove_depth, self.bow_amplitude, self.tow_offset_std,
                  self.impulse_rate):
            if p < 0:
                raise ValueError("noise/depth parameters must be >= 0")
        if self.surface_noise_std is not None and self.surface_noise_std < 0:
            raise ValueError("surface_noise_std must be >= 0")
        left, right = self.vertical_bounds
        for d in self.defects:
            if not 0 <= d.tow_index < self.tow_count:
                raise ValueError(f"defect tow index {d.tow_index} out of range")
            if d.x_start < left or d.x_start + d.x_extent > right + 1:
                raise ValueError(
                    f"defect footprint [{d.x_start}, {d.x_start + d.x_extent}) "
                    f"outside layup columns [{left}, {right}]"
                )

    @property
    def tow_widths(self) -> tuple[int, ...]:
        """Per-tow widths: nominal width plus seeded jitter. The jitter feeds
        a dedicated stream so the surface and defect draws are unaffected."""
        if self.tow_width_jitter == 0:
            return (self.tow_width,) * self.tow_count
        rng = np.random.default_rng([self.seed, 1])
        j = self.tow_width_jitter
        return tuple(int(w) for w in
                     self.tow_width + rng.integers(-j, j + 1, size=self.tow_count))

    @property
    def span(self) -> int:
        """Rows covered by tows plus the grooves between them."""
        return sum(self.tow_widths) + (self.tow_count - 1) * self.groove_width

    @property
    def top_margin(self) -> int:
        return (self.height - self.span) // 2

    @property
    def noise_std(self) -> float:
        return 0.02 * self.groove_depth if self.surface_noise_std is None \
            else self.surface_noise_std

    @property
    def impulse_height(self) -> float:
        return 5.0 * self.groove_depth if self.impulse_magnitude is None \
            else self.impulse_magnitude

    def tow_top_row(self, tow_index: int) -> int:
        widths = self.tow_widths
        return self.top_margin + tow_index * self.groove_width \
            + sum(widths[:tow_index])

    @property
    def ground_truth_edges(self) -> list[int]:
        """Boundary rows: the first dark row above each tow, plus one below
        the last tow. Averaging consecutive pairs lands on the tow centers
        (exactly so for odd tow widths)."""
        edges = [self.tow_top_row(k) - self.groove_width
                 for k in range(self.tow_count)]
        edges.append(self.tow_top_row(self.tow_count - 1) + self.tow_widths[-1])
        return edges

    @property
    def vertical_bounds(self) -> tuple[int, int]:
        return (self.side_margin, self.width - self.side_margin - 1)


def _render_defect(canvas: np.ndarray, spec: SynthSpec, d: DefectSpec) -> None:
    top = spec.tow_top_row(d.tow_index)
    width = spec.tow_widths[d.tow_index]
    rows = slice(top, top + width)
    cols = slice(d.x_start, d.x_start + d.x_extent)
    if d.kind is DefectKind.GAP:
        canvas[rows, cols] = BASE_LEVEL - spec.groove_depth
    elif d.kind is DefectKind.OVERLAP:
        canvas[rows, cols] += d.magnitude
    elif d.kind is DefectKind.TWIST:
        period = max(8.0, d.x_extent / 2.0)
        xs = np.arange(d.x_extent, dtype=np.float64)
        canvas[rows, cols] += d.magnitude * np.sin(2.0 * np.pi * xs / period)
    elif d.kind is DefectKind.FOREIGN_OBJECT:
        xs = np.arange(d.x_extent, dtype=np.float64) - (d.x_extent - 1) / 2.0
        ys = np.arange(width, dtype=np.float64) - (width - 1) / 2.0
        sx = d.x_extent / 5.0
        sy = width / 4.0
        bump = np.exp(-(ys[:, None] ** 2) / (2 * sy * sy)
                      - (xs[None, :] ** 2) / (2 * sx * sx))
        canvas[rows, cols] += d.magnitude * bump


def generate(spec: SynthSpec) -> tuple[DepthMap, TowLayout, list[DefectBox]]:
    """Render a raw depth map with its ground-truth layout and defect boxes.

    The surface stream and the defect stream use independent generators
    derived from the seed, so the same seed with and without defects
    differs only inside defect footprints.
    """
    rng_surface = np.random.default_rng([spec.seed, 0])

    canvas = np.full((spec.height, spec.width), BASE_LEVEL - spec.groove_depth,
                     dtype=np.float64)
    left, right = spec.vertical_bounds
    cols = slice(left, right + 1)
    # offsets stay well under the groove depth so no boundary step drops
    # below the edge detector's adaptive threshold
    offset_cap = min(3.0 * spec.tow_offset_std, 0.1 * spec.groove_depth)
    offsets = np.clip(rng_surface.normal(0.0, spec.tow_offset_std, size=spec.tow_count),
                      -offset_cap, offset_cap)
    widths = spec.tow_widths
    for t in range(spec.tow_count):
        top = spec.tow_top_row(t)
        canvas[top:top + widths[t], cols] = BASE_LEVEL + offsets[t]

    for d in spec.defects:
        _render_defect(canvas, spec, d)

    # large-scale bow: tilt plus a smooth dome, random orientation
    u, v = rng_surface.uniform(-1.0, 1.0, size=2)
    phase_x, phase_y = rng_surface.uniform(0.0, 1.0, size=2)
    yy = np.linspace(0.0, 1.0, spec.height)[:, None]
    xx = np.linspace(0.0, 1.0, spec.width)[None, :]
    canvas += spec.bow_amplitude * 0.5 * (
        u * xx + v * yy + np.sin(np.pi * (xx + phase_x)) * np.sin(np.pi * (yy + phase_y))
    )

    canvas += rng_surface.normal(0.0, spec.noise_std, size=canvas.shape)

    n_impulses = int(round(spec.impulse_rate * canvas.size))
    if n_impulses:
        flat = rng_surface.choice(canvas.size, size=n_impulses, replace=False)
        signs = rng_surface.choice([-1.0, 1.0], size=n_impulses)
        canvas.flat[flat] = BASE_LEVEL + signs * spec.impulse_height

    layout = estimate_centerlines(spec.ground_truth_edges, spec.vertical_bounds)
    boxes = [
        DefectBox(d.x_start, spec.tow_top_row(d.tow_index), d.x_extent,
                  spec.tow_widths[d.tow_index], tow=d.tow_index, label=d.kind.value)
        for d in spec.defects
    ]
    return DepthMap(canvas, MapState.RAW), layout, boxes


def random_defect_specs(rng: np.random.Generator, spec: SynthSpec, count: int,
                        extent_range: tuple[int, int] = (48, 72),
                        magnitude_range: tuple[float, float] = (0.06, 0.14)) -> list[DefectSpec]:
    """Draw varied defects on distinct tows, clear of the layup's side edges."""
    kinds = list(DefectKind)
    left, right = spec.vertical_bounds
    tows = rng.permutation(spec.tow_count)[:count] if count <= spec.tow_count \
        else rng.integers(0, spec.tow_count, size=count)
    defects = []
    for i in range(count):
        extent = int(rng.integers(extent_range[0], extent_range[1] + 1))
        x_start = int(rng.integers(left, right + 1 - extent))
        magnitude = float(rng.uniform(*magnitude_range))
        defects.append(DefectSpec(kinds[i % len(kinds)], int(tows[i]),
                                  x_start, extent, magnitude))
    return defects
