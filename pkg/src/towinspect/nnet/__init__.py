"""Minimal neural-network engine and the convolutional autoencoder."""

from .cae import CAEModel, NonFiniteActivation, WINDOW
from .layers import (Conv2d, ConvTranspose2d, Dense, Flatten, Layer, ReLU,
                     Reshape, ShapeMismatch, Sigmoid)
from .serial import (ArchitectureMismatch, ChecksumMismatch,
                     WeightsFormatError, load_weights, save_weights)
from .train import Adam, NanLoss, TrainConfig, train

__all__ = [
    "Adam", "ArchitectureMismatch", "CAEModel", "ChecksumMismatch", "Conv2d",
    "ConvTranspose2d", "Dense", "Flatten", "Layer", "NanLoss",
    "NonFiniteActivation", "ReLU", "Reshape", "ShapeMismatch", "Sigmoid",
    "TrainConfig", "WINDOW", "WeightsFormatError", "load_weights",
    "save_weights", "train",
]
