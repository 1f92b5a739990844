"""From-scratch dense-tensor network engine: layers, the fixed classifier
architecture, and the SGD training regime."""

from .layers import Conv2d, Dense, Dropout, Flatten, MaxPool2d, Param, ReLU, Sigmoid, Tanh
from .model import INPUT_CHANNELS, INPUT_SIDE, Network, build_classifier, network_from_specs
from .training import (SgdMomentum, TrainConfig, TrainResult, apply_l2, bce_with_logits,
                       evaluate, init_model, lr_schedule, predict_proba, train)

__all__ = [
    "Conv2d", "Dense", "Dropout", "Flatten", "MaxPool2d", "Param", "ReLU", "Sigmoid",
    "Tanh", "INPUT_CHANNELS", "INPUT_SIDE", "Network", "build_classifier",
    "network_from_specs", "SgdMomentum", "TrainConfig", "TrainResult", "apply_l2",
    "bce_with_logits", "evaluate", "init_model", "lr_schedule", "predict_proba", "train",
]
