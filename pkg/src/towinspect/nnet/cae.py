"""The convolutional autoencoder: symmetric encoder/decoder around a small
latent bottleneck.

Three stride-2 convolutions take a 32x32 window down to 4x4x64, a dense
layer maps that to the latent vector, and the decoder mirrors the path with
transposed convolutions, ending in a sigmoid so reconstructions stay in
(0, 1). The latent dimension is the only architectural knob.
"""

from __future__ import annotations

import numpy as np

from ..errors import InspectError
from .layers import (Conv2d, ConvTranspose2d, Dense, Flatten, Layer, ReLU,
                     Reshape, ShapeMismatch, Sigmoid)

WINDOW = 32
CHANNELS = (16, 32, 64)
BOTTLENECK_HW = WINDOW // 2 ** len(CHANNELS)                 # 4
BOTTLENECK_FLAT = CHANNELS[-1] * BOTTLENECK_HW * BOTTLENECK_HW  # 1024


class NonFiniteActivation(InspectError):
    """A forward pass produced NaN/Inf; reports which layer did it."""

    def __init__(self, stage: str, layer_index: int, layer_kind: str):
        super().__init__(f"non-finite activation after {stage} layer "
                         f"{layer_index} ({layer_kind})")
        self.stage = stage
        self.layer_index = layer_index


class CAEModel:
    """Encoder/decoder parameter set with a configurable latent dimension."""

    def __init__(self, latent_dim: int, seed: int = 0, dtype=np.float32):
        if latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {latent_dim}")
        self.latent_dim = latent_dim
        self.dtype = np.dtype(dtype)
        self.meta: dict = {}
        rng = np.random.default_rng(seed)
        c1, c2, c3 = CHANNELS
        self.encoder: list[Layer] = [
            Conv2d(1, c1, rng=rng, dtype=dtype), ReLU(),
            Conv2d(c1, c2, rng=rng, dtype=dtype), ReLU(),
            Conv2d(c2, c3, rng=rng, dtype=dtype), ReLU(),
            Flatten(),
            Dense(BOTTLENECK_FLAT, latent_dim, rng=rng, dtype=dtype),
        ]
        self.decoder: list[Layer] = [
            Dense(latent_dim, BOTTLENECK_FLAT, rng=rng, dtype=dtype), ReLU(),
            Reshape((c3, BOTTLENECK_HW, BOTTLENECK_HW)),
            ConvTranspose2d(c3, c2, rng=rng, dtype=dtype), ReLU(),
            ConvTranspose2d(c2, c1, rng=rng, dtype=dtype), ReLU(),
            ConvTranspose2d(c1, 1, rng=rng, dtype=dtype),
            Sigmoid(),
        ]

    @property
    def layers(self) -> list[Layer]:
        return self.encoder + self.decoder

    def parameters(self):
        """(layer, name, array) triples in a fixed traversal order."""
        for layer in self.layers:
            for name, arr in layer.params().items():
                yield layer, name, arr

    def _run(self, stage: str, layers: list[Layer], x: np.ndarray) -> np.ndarray:
        outputs = []
        for layer in layers:
            x = layer.forward(x)
            outputs.append(x)
        # cheap happy path: only the stage output is scanned; on failure,
        # walk the cached activations to report the offending layer
        if not np.isfinite(x).all():
            for i, out in enumerate(outputs):
                if not np.isfinite(out).all():
                    raise NonFiniteActivation(stage, i, layers[i].describe()["kind"])
        return x

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=self.dtype)
        if batch.ndim == 3:
            batch = batch[:, None, :, :]
        if batch.ndim != 4 or batch.shape[1:] != (1, WINDOW, WINDOW):
            raise ShapeMismatch(f"expected (n, 1, {WINDOW}, {WINDOW}) batch, got {batch.shape}")
        return batch

    def encode(self, batch: np.ndarray) -> np.ndarray:
        return self._run("encoder", self.encoder, self._check_batch(batch))

    def forward(self, batch: np.ndarray) -> np.ndarray:
        latent = self.encode(batch)
        return self._run("decoder", self.decoder, latent)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def describe(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "window": WINDOW,
            "dtype": self.dtype.name,
            "encoder": [l.describe() for l in self.encoder],
            "decoder": [l.describe() for l in self.decoder],
        }
