"""Weight-file format: one JSON header line, then a flat little-endian
float32 blob of every parameter in traversal order.

The header records the architecture, parameter shapes, and a CRC32 of the
blob, so loading validates both structure and payload before touching the
model. A save/load round trip reproduces forward outputs bitwise.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from ..errors import InspectError
from .cae import CAEModel

FORMAT_NAME = "towinspect-cae-weights"
FORMAT_VERSION = 1


class WeightsFormatError(InspectError):
    """File is not a weight file of the expected format."""


class ArchitectureMismatch(InspectError):
    """Header architecture does not match the shapes in the payload."""


class ChecksumMismatch(InspectError):
    """Blob CRC32 does not match the header (truncated or corrupted file)."""


def save_weights(model: CAEModel, path) -> None:
    params = [(name, arr) for _, name, arr in model.parameters()]
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in params)
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "arch": model.describe(),
        "shapes": [list(arr.shape) for _, arr in params],
        "crc32": zlib.crc32(blob),
        "meta": model.meta,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        f.write(blob)


def load_weights(path) -> CAEModel:
    data = Path(path).read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise WeightsFormatError(f"{path}: missing header line")
    try:
        header = json.loads(data[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WeightsFormatError(f"{path}: unreadable header ({e})") from None
    if header.get("format") != FORMAT_NAME:
        raise WeightsFormatError(f"{path}: not a {FORMAT_NAME} file")

    blob = data[newline + 1:]
    if zlib.crc32(blob) != header.get("crc32"):
        raise ChecksumMismatch(f"{path}: blob checksum mismatch (truncated or corrupted)")

    arch = header.get("arch", {})
    model = CAEModel(int(arch.get("latent_dim", 0)), seed=0,
                     dtype=np.dtype(arch.get("dtype", "float32")))
    if model.describe() != arch:
        raise ArchitectureMismatch(f"{path}: header architecture does not match "
                                   f"a {FORMAT_NAME} v{FORMAT_VERSION} model")

    shapes = [tuple(s) for s in header["shapes"]]
    params = [(layer, name, arr) for layer, name, arr in model.parameters()]
    if len(shapes) != len(params):
        raise ArchitectureMismatch(f"{path}: {len(shapes)} parameter shapes for "
                                   f"{len(params)} model parameters")
    expected_floats = sum(int(np.prod(s)) for s in shapes)
    if len(blob) != expected_floats * 4:
        raise ArchitectureMismatch(f"{path}: blob holds {len(blob) // 4} floats, "
                                   f"shapes imply {expected_floats}")

    offset = 0
    for (layer, name, arr), shape in zip(params, shapes):
        if arr.shape != shape:
            raise ArchitectureMismatch(f"{path}: parameter {name} shape {shape} "
                                       f"does not match model shape {arr.shape}")
        count = arr.size
        values = np.frombuffer(blob, dtype="<f4", count=count,
                               offset=offset * 4).reshape(shape)
        arr[...] = values.astype(model.dtype)
        offset += count
    model.meta = dict(header.get("meta", {}))
    return model
