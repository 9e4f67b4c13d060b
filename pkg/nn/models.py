"""
Network containers: Sequential, the convolutional Autoencoder and the
branched FeedForwardNet

Models are rebuilt from their `architecture` dict (the form stored in model
files), so every constructor argument that shapes the weights lives there.
"""

import logging
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import BATCHNORM_EPSILON, BATCHNORM_MOMENTUM, ENCODER_CHANNELS
from nn.layers import (
    BatchNorm2D,
    Conv2D,
    ConvTranspose2D,
    Dense,
    Flatten,
    Layer,
    ReLU,
    Reshape,
    check_finite,
)
from utils.exceptions import ConfigError, ShapeError

logger = logging.getLogger(__name__)


class Sequential:
    """Ordered stack of layers with shape checking at the boundaries"""

    def __init__(self, layers: Sequence[Layer], name: str = "sequential"):
        self.layers: List[Layer] = list(layers)
        self.name = name

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        check_finite(x, f"{self.name} input")
        for idx, layer in enumerate(self.layers):
            x = layer.forward(x, training)
            check_finite(x, f"{self.name}.{idx} ({layer.kind}) output")
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        shape = tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def named_layers(self, prefix: str = "") -> Iterator[Tuple[str, Layer]]:
        for idx, layer in enumerate(self.layers):
            yield f"{prefix}{idx}", layer

    def describe(self) -> List[Dict]:
        return [layer.describe() for layer in self.layers]


class Model:
    """Shared parameter/state plumbing for the concrete networks"""
    architecture: Dict

    def __init__(self):
        self.metadata: Dict = {}

    def named_layers(self) -> Iterator[Tuple[str, Layer]]:
        raise NotImplementedError

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        return self.forward(x, training)

    def named_parameters(self) -> Iterator[Tuple[str, Layer, str]]:
        """(qualified name, owning layer, key) for every trainable array"""
        for name, layer in self.named_layers():
            for key in layer.params:
                yield f"{name}.{key}", layer, key

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Copies of all parameters and buffers, in a fixed order"""
        state = OrderedDict()
        for name, layer in self.named_layers():
            for key, value in layer.params.items():
                state[f"{name}.{key}"] = value.copy()
            for key, value in layer.buffers.items():
                state[f"{name}.{key}"] = value.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        expected = self.state_dict()
        missing = [k for k in expected if k not in state]
        if missing:
            raise ShapeError(f"State is missing tensors: {missing[:5]}")
        for name, layer in self.named_layers():
            for store in (layer.params, layer.buffers):
                for key in store:
                    value = np.asarray(state[f"{name}.{key}"], dtype=np.float64)
                    if value.shape != store[key].shape:
                        raise ShapeError(
                            f"Tensor {name}.{key} has shape {value.shape}, expected {store[key].shape}"
                        )
                    store[key][...] = value

    def parameter_count(self) -> int:
        return int(sum(layer.params[key].size for _, layer, key in self.named_parameters()))


class Autoencoder(Model):
    """
    Convolutional denoiser for two-channel (real, imag) process-matrix images

    Encoder: three conv -> ReLU -> batchnorm blocks, flatten, linear latent
    dense of width `latent`. Decoder: dense back to the encoder volume,
    two conv-transpose -> ReLU -> batchnorm blocks, final linear conv-transpose
    to two channels. All convolutions are stride 1 with same padding.
    """

    def __init__(self, dim: int, kernel: int, latent: int,
                 channels: Sequence[int] = ENCODER_CHANNELS,
                 momentum: float = BATCHNORM_MOMENTUM, epsilon: float = BATCHNORM_EPSILON,
                 seed: Optional[int] = 0):
        super().__init__()
        channels = [int(c) for c in channels]
        if len(channels) != 3:
            raise ConfigError(f"Encoder needs three channel widths, got {channels}")
        self.architecture = {
            "kind": "autoencoder", "dim": int(dim), "kernel": int(kernel), "latent": int(latent),
            "channels": channels, "momentum": float(momentum), "epsilon": float(epsilon),
        }
        rng = np.random.default_rng(seed)
        c1, c2, c3 = channels
        volume = c3 * dim * dim

        encoder = []
        for cin, cout in ((2, c1), (c1, c2), (c2, c3)):
            encoder += [Conv2D(cin, cout, kernel, rng=rng), ReLU(), BatchNorm2D(cout, momentum, epsilon)]
        encoder += [Flatten(), Dense(volume, latent, rng=rng)]

        decoder = [Dense(latent, volume, rng=rng), Reshape((c3, dim, dim))]
        for cin, cout in ((c3, c2), (c2, c1)):
            decoder += [ConvTranspose2D(cin, cout, kernel, rng=rng), ReLU(), BatchNorm2D(cout, momentum, epsilon)]
        decoder.append(ConvTranspose2D(c1, 2, kernel, rng=rng))

        self.encoder = Sequential(encoder, "encoder")
        self.decoder = Sequential(decoder, "decoder")
        out_shape = self.decoder.output_shape(self.encoder.output_shape((2, dim, dim)))
        if out_shape != (2, dim, dim):
            raise ShapeError(f"Autoencoder maps (2, {dim}, {dim}) to {out_shape}")

    def named_layers(self):
        yield from self.encoder.named_layers("encoder.")
        yield from self.decoder.named_layers("decoder.")

    def forward(self, x, training=False):
        return self.decoder.forward(self.encoder.forward(x, training), training)

    def backward(self, dout):
        return self.encoder.backward(self.decoder.backward(dout))

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.encoder.forward(x, training=False)


class FeedForwardNet(Model):
    """
    Shared dense trunk followed by independent two-layer regression branches

    trunk:  Dense(F, F*g) -> ReLU
    branch: Dense(F*g, F*g/2) -> ReLU -> Dense(F*g/2, 1)   (one per parameter)
    """

    def __init__(self, in_features: int, width_factor: int, branches: int, seed: Optional[int] = 0):
        super().__init__()
        if branches < 1:
            raise ConfigError(f"FeedForwardNet needs at least one branch, got {branches}")
        self.architecture = {
            "kind": "feedforward", "in_features": int(in_features),
            "width_factor": int(width_factor), "branches": int(branches),
        }
        rng = np.random.default_rng(seed)
        hidden = in_features * width_factor
        half = max(1, hidden // 2)
        self.trunk = Sequential([Dense(in_features, hidden, rng=rng), ReLU()], "trunk")
        self.branches = [
            Sequential([Dense(hidden, half, rng=rng), ReLU(), Dense(half, 1, rng=rng)], f"branch{i}")
            for i in range(branches)
        ]

    def named_layers(self):
        yield from self.trunk.named_layers("trunk.")
        for i, branch in enumerate(self.branches):
            yield from branch.named_layers(f"branch{i}.")

    def forward(self, x, training=False):
        hidden = self.trunk.forward(x, training)
        return np.concatenate([b.forward(hidden, training) for b in self.branches], axis=1)

    def backward(self, dout):
        dhidden = sum(b.backward(dout[:, i:i + 1]) for i, b in enumerate(self.branches))
        return self.trunk.backward(dhidden)


def build_model(architecture: Dict, seed: Optional[int] = 0) -> Model:
    """Instantiate a model from its architecture dict"""
    arch = dict(architecture)
    kind = arch.pop("kind", None)
    try:
        if kind == "autoencoder":
            return Autoencoder(seed=seed, **arch)
        if kind == "feedforward":
            return FeedForwardNet(seed=seed, **arch)
    except TypeError as e:
        raise ConfigError(f"Invalid {kind} architecture: {e}") from e
    raise ConfigError(f"Unknown model kind: {kind}")


def predict(model: Model, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Inference-mode forward pass in fixed-size chunks"""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise ShapeError("Cannot predict on an empty batch")
    outputs = [model.forward(x[i:i + batch_size], training=False) for i in range(0, len(x), batch_size)]
    return np.concatenate(outputs, axis=0)
