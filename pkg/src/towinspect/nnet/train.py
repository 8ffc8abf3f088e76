"""Adam-based training loop for the autoencoder.

The loop is a single deterministic sequence of batch updates: one generator
seeded from the config drives every epoch's shuffle, so a fixed seed
reproduces weights and the loss history exactly. Losses are accumulated in
float64 so the recorded history is stable to well below 1e-12 even though
the forward math is float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InspectError
from ..sampler import SampleLabel, SampleSet
from .cae import CAEModel


class NanLoss(InspectError):
    """Training loss went non-finite; reports epoch and batch."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        # 0 is allowed as a diagnostic no-op rate
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")


class Adam:
    """Standard Adam with bias correction, one slot pair per parameter."""

    def __init__(self, model: CAEModel, config: TrainConfig):
        self.model = model
        self.lr = config.learning_rate
        self.b1, self.b2, self.eps = config.adam_beta1, config.adam_beta2, config.adam_eps
        self.t = 0
        self.m = [np.zeros_like(arr) for _, _, arr in model.parameters()]
        self.v = [np.zeros_like(arr) for _, _, arr in model.parameters()]

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for i, (layer, name, arr) in enumerate(self.model.parameters()):
            g = layer.grads()[name]
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            arr -= self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


def _training_batch_array(train_set: SampleSet, dtype) -> np.ndarray:
    if any(s.label is SampleLabel.ABNORMAL for s in train_set.samples):
        raise ValueError("training set contains abnormal samples; "
                         "the detector must be trained on normal surfaces only")
    if not train_set.samples:
        raise ValueError("training set is empty")
    return train_set.pixel_stack()[:, None, :, :].astype(dtype)


def train(model: CAEModel, train_set: SampleSet,
          config: TrainConfig) -> tuple[CAEModel, list[float]]:
    """Fit the autoencoder to normal windows by MSE; returns (model, loss history).

    The history holds one mean-squared-error value per epoch (mean over all
    pixels of all samples, in traversal order of that epoch's shuffle).
    """
    x_all = _training_batch_array(train_set, model.dtype)
    n = x_all.shape[0]
    opt = Adam(model, config)
    rng = np.random.default_rng(config.seed)
    history: list[float] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        sq_sum = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            xb = x_all[perm[start:start + config.batch_size]]
            yb = model.forward(xb)
            diff = yb - xb
            batch_sq = float(np.einsum("nchw,nchw->", diff, diff, dtype=np.float64))
            if not np.isfinite(batch_sq):
                raise NanLoss(epoch, bi)
            sq_sum += batch_sq
            if config.learning_rate > 0:
                model.backward(diff * (2.0 / xb.size))
                opt.step()
        history.append(sq_sum / x_all.size)
    return model, history
