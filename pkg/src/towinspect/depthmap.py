"""Depth-map container, impulse denoising, min-max normalization, PGM I/O.

A depth map is a 2D grid of surface elevations. Raw maps carry arbitrary
units (whatever the profilometer produced); normalized maps are dimensionless
in [0, 1]. On disk we use binary PGM (P5), 16-bit by default so sub-unit
relief survives quantization.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InspectError


class MapState(enum.Enum):
    RAW = "raw"
    NORMALIZED = "normalized"


class PgmError(InspectError):
    """Base for PGM parse failures."""


class PgmMagicError(PgmError):
    """File does not start with the P5 magic number."""


class PgmHeaderError(PgmError):
    """Header dimensions or maxval are malformed or unsupported."""


class PgmTruncatedError(PgmError):
    """Payload is shorter than width*height samples."""


@dataclass(frozen=True)
class DepthMap:
    """Immutable 2D elevation field, row-major float64."""

    pixels: np.ndarray
    state: MapState = MapState.RAW

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"depth map must be a non-empty 2D grid, got shape {px.shape}")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.state is MapState.NORMALIZED:
            lo, hi = float(px.min()), float(px.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"normalized map has pixels outside [0, 1]: min={lo}, max={hi}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def median_filter_3x3(dm: DepthMap) -> DepthMap:
    """Replace each pixel with the median of its 3x3 neighborhood.

    Borders are handled by edge replication, so output dimensions equal
    input dimensions. The map state is preserved.
    """
    padded = np.pad(dm.pixels, 1, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3))
    return DepthMap(np.median(windows, axis=(2, 3)), dm.state)


def min_max_normalize(dm: DepthMap) -> tuple[DepthMap, bool]:
    """Linearly map pixel values so min -> 0 and max -> 1.

    Returns (normalized map, degenerate flag). A constant input has no
    relief to stretch; it maps to all zeros with the flag set instead of
    producing NaNs.
    """
    if dm.state is not MapState.RAW:
        raise ValueError("min_max_normalize expects a raw map")
    lo = float(dm.pixels.min())
    hi = float(dm.pixels.max())
    if hi == lo:
        return DepthMap(np.zeros_like(dm.pixels), MapState.NORMALIZED), True
    return DepthMap((dm.pixels - lo) / (hi - lo), MapState.NORMALIZED), False


def _read_header_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated integer tokens, skipping # comments.

    Returns the tokens and the offset of the byte right after the single
    whitespace character that terminates the last token.
    """
    tokens: list[int] = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace():
            i += 1
        if i == start:
            raise PgmHeaderError("unexpected end of header")
        try:
            tokens.append(int(data[start:i]))
        except ValueError:
            raise PgmHeaderError(f"non-numeric header token {data[start:i]!r}") from None
    if i >= n:
        raise PgmTruncatedError("no payload after header")
    return tokens, i + 1


def load_pgm(path, *, normalized: bool = False) -> DepthMap:
    """Load a binary PGM (P5) file, maxval 255 or 65535.

    Sample values are scaled to [0, 1] by dividing by maxval. Pass
    normalized=True when the file is known to hold a normalized map (e.g.
    written by the preprocess stage); otherwise the result is Raw.
    """
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise PgmMagicError(f"{path}: expected P5 magic, got {data[:2]!r}")
    (width, height, maxval), offset = _read_header_tokens(data[2:], 3)
    offset += 2
    if width < 1 or height < 1:
        raise PgmHeaderError(f"{path}: bad dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise PgmHeaderError(f"{path}: unsupported maxval {maxval}")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    payload = data[offset : offset + expected]
    if len(payload) < expected:
        raise PgmTruncatedError(
            f"{path}: payload holds {len(payload) // dtype.itemsize} samples, "
            f"header claims {width * height}"
        )
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    pixels = samples.astype(np.float64) / maxval
    state = MapState.NORMALIZED if normalized else MapState.RAW
    return DepthMap(pixels, state)


def save_pgm(dm: DepthMap, path, *, maxval: int = 65535) -> None:
    """Write a binary PGM (P5) file with big-endian 16-bit samples by default.

    Normalized maps are scaled by maxval directly; raw maps are min-max
    scaled to the full range first (downstream normalization is invariant to
    that affine change). No comments are emitted.
    """
    if maxval not in (255, 65535):
        raise ValueError(f"unsupported maxval {maxval}")
    px = dm.pixels
    if dm.state is MapState.RAW:
        lo, hi = float(px.min()), float(px.max())
        px = np.zeros_like(px) if hi == lo else (px - lo) / (hi - lo)
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    samples = np.rint(px * maxval).astype(dtype)
    header = f"P5\n{dm.width} {dm.height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(samples.tobytes())
