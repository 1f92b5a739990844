"""Network container and the fixed classifier architecture.

The stage classifier is a seven-parameter-layer stack on 120x120x3 inputs:

    conv1  3x3x64   s1 p1  ReLU         -> 120x120x64
    conv2  3x3x96   s2 p2  ReLU         -> 61x61x96
    pool2  2x2      s2                  -> 30x30x96
    conv3  2x2x128  s2 p1  ReLU  (+dropout 0.2)  -> 16x16x128
    conv4  3x3x256  s1 p1  ReLU         -> 16x16x256
    pool4  2x2      s2                  -> 8x8x256
    conv5  3x3x256  s2 p1  ReLU (ceil)  -> 5x5x256
    fc6    6400 -> 1000  Tanh  (+dropout 0.5)
    fc7    1000 -> 1   (sigmoid applied by the loss / predictor)

conv5 is the only ceil-rounded layer: (8 + 2 - 3)/2 + 1 = 4.5 and the target
output is 5x5, so the extra row/column is padded bottom/right. All other
layers use floor rounding.
"""

from __future__ import annotations

import numpy as np

from . import layers as L

INPUT_SIDE = 120
INPUT_CHANNELS = 3


class Network:
    """Ordered layer stack with forward/backward and flat state I/O."""

    def __init__(self, layer_list: list):
        self.layers = list(layer_list)

    @property
    def params(self) -> list:
        return [p for layer in self.layers for p in layer.params]

    def num_params(self) -> int:
        return int(sum(p.value.size for p in self.params))

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, gy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    def shape_trace(self, in_shape: tuple) -> list:
        """[(layer name, output shape)] without running any data."""
        shape = tuple(in_shape)
        trace = []
        for layer in self.layers:
            shape = layer.output_shape(shape)
            trace.append((layer.name, shape))
        return trace

    def reseed_dropout(self, seed: int):
        k = 0
        for layer in self.layers:
            if isinstance(layer, L.Dropout):
                layer.reseed(seed + k)
                k += 1

    def layer_specs(self) -> list:
        return [layer.spec() for layer in self.layers]

    def state(self) -> list:
        return [p.value.copy() for p in self.params]

    def load_state(self, arrays: list):
        params = self.params
        if len(arrays) != len(params):
            raise ValueError(f"state has {len(arrays)} arrays, model needs {len(params)}")
        for p, arr in zip(params, arrays):
            if arr.shape != p.value.shape:
                raise ValueError(f"{p.name}: shape {arr.shape} != {p.value.shape}")
            p.value[...] = arr

    def flat_state(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self.params])

    def load_flat_state(self, vector: np.ndarray):
        params = self.params
        need = sum(p.value.size for p in params)
        if vector.size != need:
            raise ValueError(f"state vector has {vector.size} values, model needs {need}")
        at = 0
        for p in params:
            n = p.value.size
            p.value[...] = vector[at:at + n].reshape(p.value.shape)
            at += n


def build_classifier(dropout_seed: int = 0) -> Network:
    """The fixed 120x120x3 stage-classifier stack described above."""
    return Network([
        L.Conv2d(3, 64, 3, stride=1, pad=1, name="conv1"),
        L.ReLU(name="relu1"),
        L.Conv2d(64, 96, 3, stride=2, pad=2, name="conv2"),
        L.ReLU(name="relu2"),
        L.MaxPool2d(2, 2, name="pool2"),
        L.Conv2d(96, 128, 2, stride=2, pad=1, name="conv3"),
        L.ReLU(name="relu3"),
        L.Dropout(0.2, name="drop3", seed=dropout_seed),
        L.Conv2d(128, 256, 3, stride=1, pad=1, name="conv4"),
        L.ReLU(name="relu4"),
        L.MaxPool2d(2, 2, name="pool4"),
        L.Conv2d(256, 256, 3, stride=2, pad=1, rounding="ceil", name="conv5"),
        L.ReLU(name="relu5"),
        L.Flatten(name="flatten"),
        L.Dense(5 * 5 * 256, 1000, name="fc6"),
        L.Tanh(name="tanh6"),
        L.Dropout(0.5, name="drop6", seed=dropout_seed + 1),
        L.Dense(1000, 1, name="fc7"),
    ])


_LAYER_KINDS = {
    "Conv": lambda s: L.Conv2d(s["in"], s["out"], tuple(s["kernel"]), stride=s["stride"],
                               pad=s["pad"], rounding=s["rounding"], name=s["name"]),
    "MaxPool": lambda s: L.MaxPool2d(s["kernel"], s["stride"], name=s["name"]),
    "Dense": lambda s: L.Dense(s["in"], s["out"], name=s["name"]),
    "ReLU": lambda s: L.ReLU(name=s["name"]),
    "Tanh": lambda s: L.Tanh(name=s["name"]),
    "Sigmoid": lambda s: L.Sigmoid(name=s["name"]),
    "Dropout": lambda s: L.Dropout(s["rate"], name=s["name"]),
    "Flatten": lambda s: L.Flatten(name=s["name"]),
}


def network_from_specs(specs: list) -> Network:
    """Rebuild a network skeleton from a checkpoint's layer-spec table."""
    return Network([_LAYER_KINDS[s["kind"]](s) for s in specs])
