"""Small declarative classifiers (MLP and CNN) built on :mod:`advworkbench.autodiff`."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import InvalidSpecError, ShapeError
from .rng import Xorshift64Star


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int
    stride: int = 1


@dataclass(frozen=True)
class Dense:
    out_features: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


_LAYER_TYPES = {"conv": Conv, "dense": Dense, "relu": ReLU, "flatten": Flatten}
_LAYER_KINDS = {cls: kind for kind, cls in _LAYER_TYPES.items()}


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple
    layers: tuple
    num_classes: int
    name: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))

    def layer_shapes(self):
        """Output shape (without batch axis) of every layer.

        Raises InvalidSpecError naming the first layer that does not compose.
        """
        if self.num_classes < 2:
            raise InvalidSpecError("num_classes must be at least 2")
        shape = self.input_shape
        if len(shape) not in (1, 3) or min(shape, default=0) < 1:
            raise InvalidSpecError(f"input shape must be [D] or [C,H,W], got {list(shape)}")
        shapes = []
        for i, layer in enumerate(self.layers):
            where = f"layer {i} ({_LAYER_KINDS.get(type(layer), type(layer).__name__)})"
            if isinstance(layer, Conv):
                if len(shape) != 3:
                    raise InvalidSpecError(f"{where}: conv needs a [C,H,W] input, got {list(shape)}")
                if layer.kernel < 1 or layer.stride < 1 or layer.out_channels < 1:
                    raise InvalidSpecError(f"{where}: sizes must be positive")
                _, h, w = shape
                if layer.kernel > h or layer.kernel > w:
                    raise InvalidSpecError(f"{where}: kernel {layer.kernel} larger than input {h}x{w}")
                shape = (layer.out_channels,
                         (h - layer.kernel) // layer.stride + 1,
                         (w - layer.kernel) // layer.stride + 1)
            elif isinstance(layer, Dense):
                if len(shape) != 1:
                    raise InvalidSpecError(f"{where}: dense needs a flat input, got {list(shape)}; add flatten")
                if layer.out_features < 1:
                    raise InvalidSpecError(f"{where}: out_features must be positive")
                shape = (layer.out_features,)
            elif isinstance(layer, Flatten):
                shape = (math.prod(shape),)
            elif isinstance(layer, ReLU):
                pass
            else:
                raise InvalidSpecError(f"{where}: unknown layer type")
            shapes.append(shape)
        if shape != (self.num_classes,):
            raise InvalidSpecError(
                f"final layer emits {list(shape)}, expected [{self.num_classes}] logits")
        return shapes

    def parameter_shapes(self):
        """Ordered mapping parameter name -> shape; a pure function of the ModelSpec."""
        shapes = self.layer_shapes()
        out = {}
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                out[f"conv{i}.weight"] = (layer.out_channels, shape[0], layer.kernel, layer.kernel)
                out[f"conv{i}.bias"] = (layer.out_channels,)
            elif isinstance(layer, Dense):
                out[f"dense{i}.weight"] = (shape[0], layer.out_features)
                out[f"dense{i}.bias"] = (layer.out_features,)
            shape = shapes[i]
        return out

    def param_count(self):
        return sum(math.prod(s) for s in self.parameter_shapes().values())

    def to_dict(self):
        layers = []
        for layer in self.layers:
            d = {"type": _LAYER_KINDS[type(layer)]}
            d.update(layer.__dict__)
            layers.append(d)
        return {"name": self.name, "input_shape": list(self.input_shape),
                "num_classes": self.num_classes, "layers": layers}

    @classmethod
    def from_dict(cls, d):
        layers = []
        for ld in d["layers"]:
            ld = dict(ld)
            kind = ld.pop("type")
            if kind not in _LAYER_TYPES:
                raise InvalidSpecError(f"unknown layer type {kind!r}")
            layers.append(_LAYER_TYPES[kind](**ld))
        return cls(tuple(d["input_shape"]), tuple(layers), int(d["num_classes"]), d.get("name", "model"))

    def descriptor(self):
        """Canonical JSON text of this ModelSpec (used by checkpoints and manifests)."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ModelState:
    spec: ModelSpec
    params: dict = field(repr=False)
    seed: int = 0

    def with_params(self, params):
        return ModelState(self.spec, params, self.seed)


def init_params(spec, seed):
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    rng = Xorshift64Star(seed)
    params = {}
    for name, shape in spec.parameter_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
            continue
        fan_in = math.prod(shape[1:]) if name.startswith("conv") else shape[0]
        bound = math.sqrt(6.0 / fan_in)
        params[name] = rng.uniform(math.prod(shape), -bound, bound).reshape(shape)
    return ModelState(spec, params, int(seed))


def forward(model, x, params=None):
    """Tape-recorded logits for a batch tensor ``x`` [B, ...].

    ``params`` maps names to Tensors (e.g. leaves requiring grad); by default
    the model's arrays are wrapped as constants.
    """
    spec = model.spec
    if params is None:
        params = {k: ad.Tensor(v) for k, v in model.params.items()}
    x = ad.as_tensor(x)
    if x.shape[1:] != spec.input_shape:
        raise ShapeError(f"batch items have shape {list(x.shape[1:])}, model expects {list(spec.input_shape)}")
    h = x
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            h = ad.conv2d(h, params[f"conv{i}.weight"], params[f"conv{i}.bias"], layer.stride)
        elif isinstance(layer, Dense):
            h = ad.add(ad.matmul(h, params[f"dense{i}.weight"]), params[f"dense{i}.bias"])
        elif isinstance(layer, ReLU):
            h = ad.relu(h)
        elif isinstance(layer, Flatten):
            h = ad.flatten(h)
    return h


def forward_logits(model, batch, batch_size=512):
    """Logits [B, K] as a plain array (no tape)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[1:] != model.spec.input_shape:
        raise ShapeError(
            f"batch items have shape {list(batch.shape[1:])}, model expects {list(model.spec.input_shape)}")
    chunks = [forward(model, batch[i:i + batch_size]).data for i in range(0, len(batch), batch_size)]
    if not chunks:
        return np.zeros((0, model.spec.num_classes))
    return np.concatenate(chunks, axis=0)


def input_gradient(model, x, y_true, T=1.0):
    """Exact d/dx of cross_entropy(softmax(logits / T), y_true), parameters frozen.

    ``x`` is one item (shape = model input shape, ``y_true`` an int) or a
    batch; for a batch each row gets its own item's gradient (sum reduction).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.shape == model.spec.input_shape
    if single:
        x = x[None]
        y_true = [y_true]
    if x.shape[1:] != model.spec.input_shape:
        raise ShapeError(f"input shape {list(x.shape)} does not match model input {list(model.spec.input_shape)}")
    xt = ad.Tensor(x, requires_grad=True)
    loss = ad.cross_entropy(ad.softmax_with_temperature(forward(model, xt), T), y_true, reduction="sum")
    (g,) = ad.grad(loss, [xt])
    return g[0] if single else g


def reference_specs(input_shape=(1, 16, 16), num_classes=10):
    """Desk-scale teacher / student / MLP architectures for ``input_shape``."""
    K = num_classes
    specs = {
        "teacher-cnn": ModelSpec(input_shape, (Conv(8, 3), ReLU(), Conv(16, 3), ReLU(), Flatten(),
                                               Dense(64), ReLU(), Dense(K)), K, "teacher-cnn"),
        "student-cnn": ModelSpec(input_shape, (Conv(8, 3), ReLU(), Flatten(),
                                               Dense(32), ReLU(), Dense(K)), K, "student-cnn"),
        "mlp": ModelSpec(input_shape, (Flatten(), Dense(64), ReLU(), Dense(K)), K, "mlp"),
    }
    for spec in specs.values():
        spec.layer_shapes()
    return specs
