"""Layer-stack networks: specs, parameters, forward/backward and SGD."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import ops

LOSSES = ("log", "euclidean")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; ``params`` holds the last finite state."""

    def __init__(self, message, params=None, epoch=None):
        super().__init__(message)
        self.params = params
        self.epoch = epoch


@dataclass(frozen=True)
class Op:
    """One step of a layer's nonlinearity chain.

    ``kind`` is relu, sigmoid, softmax, maxpool (args: t2, v2) or dropout
    (args: rate).
    """

    kind: str
    args: tuple = ()

    def __post_init__(self):
        n_args = {"relu": 0, "sigmoid": 0, "softmax": 0, "maxpool": 2, "dropout": 1}
        if self.kind not in n_args:
            raise ValueError(f"unknown op {self.kind!r}")
        if len(self.args) != n_args[self.kind]:
            raise ValueError(f"{self.kind} takes {n_args[self.kind]} arguments")
        if self.kind == "maxpool" and min(self.args) < 1:
            raise ValueError("pooling factors must be >= 1")
        if self.kind == "dropout" and not 0.0 <= self.args[0] < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")

    def __str__(self):
        return f"{self.kind}({','.join(str(a) for a in self.args)})" if self.args else self.kind

    @classmethod
    def parse(cls, text: str) -> "Op":
        m = re.fullmatch(r"\s*(\w+)\s*(?:\(([^)]*)\))?\s*", text)
        if not m:
            raise ValueError(f"cannot parse op {text!r}")
        kind, inner = m.group(1), m.group(2)
        if not inner:
            return cls(kind)
        vals = [float(a) if kind == "dropout" else int(a) for a in inner.split(",")]
        return cls(kind, tuple(vals))


def relu():
    return Op("relu")


def sigmoid():
    return Op("sigmoid")


def softmax():
    return Op("softmax")


def maxpool(t2, v2):
    return Op("maxpool", (int(t2), int(v2)))


def dropout(rate):
    return Op("dropout", (float(rate),))


@dataclass(frozen=True)
class LayerSpec:
    conv: tuple[int, int, int, int]  # t1, v1, input maps, output maps
    ops: tuple[Op, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "conv", tuple(int(c) for c in self.conv))
        object.__setattr__(self, "ops", tuple(self.ops))
        if len(self.conv) != 4 or min(self.conv) < 1:
            raise ValueError(f"bad conv shape {self.conv}")

    def output_shape(self, n: int, m: int) -> tuple[int, int, int]:
        t1, v1, _, n1 = self.conv
        n, m = n - t1 + 1, m - v1 + 1
        if n < 1 or m < 1:
            raise ValueError(f"conv {self.conv} does not fit its input")
        for op in self.ops:
            if op.kind == "maxpool":
                n, m = -(-n // op.args[0]), -(-m // op.args[1])
        return n, m, n1


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: tuple[int, int]  # N0, M0
    layers: tuple[LayerSpec, ...]
    loss: str

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        maps = 1
        for i, layer in enumerate(self.layers):
            if layer.conv[2] != maps:
                raise ValueError(f"layer {i} expects {layer.conv[2]} maps, previous gives {maps}")
            maps = layer.conv[3]
        self.shapes()

    def shapes(self) -> list[tuple[int, int, int]]:
        """Output shape after every layer."""
        n, m = self.input_shape
        out = []
        for layer in self.layers:
            n, m, l = layer.output_shape(n, m)
            out.append((n, m, l))
        return out

    @property
    def n_outputs(self) -> int:
        n, m, l = self.shapes()[-1]
        return n * m * l

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape), "loss": self.loss,
                "layers": [{"conv": list(l.conv), "ops": [str(o) for o in l.ops]}
                           for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        layers = [LayerSpec(tuple(l["conv"]), tuple(Op.parse(o) for o in l["ops"]))
                  for l in d["layers"]]
        return cls(d["name"], tuple(d["input_shape"]), tuple(layers), d["loss"])


@dataclass
class Parameters:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "Parameters":
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_parameters(spec: NetworkSpec, rng: np.random.Generator) -> Parameters:
    """Glorot-uniform weights, zero biases."""
    ws, bs = [], []
    for layer in spec.layers:
        t1, v1, l, n1 = layer.conv
        limit = np.sqrt(6.0 / (t1 * v1 * l + t1 * v1 * n1))
        ws.append(rng.uniform(-limit, limit, size=(t1, v1, l, n1)))
        bs.append(np.zeros(n1))
    return Parameters(ws, bs)


@dataclass
class ForwardRecord:
    """Intermediate values of one forward pass, consumed by :func:`backward`."""

    output: np.ndarray
    steps: list = field(default_factory=list)


def forward(spec: NetworkSpec, params: Parameters, x: np.ndarray, training: bool = False,
            rng: np.random.Generator | None = None, record: bool = False):
    """Run ``x`` of shape (B, N0, M0) or (B, N0, M0, 1) through the net.

    Returns outputs flattened to (B, n_outputs), or a :class:`ForwardRecord`
    when ``record`` is set. Dropout is active only when ``training``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., None]
    if x.shape[1:3] != spec.input_shape:
        raise ValueError(f"{spec.name} expects {spec.input_shape} inputs, got {x.shape[1:3]}")
    steps = []
    for layer, w, b in zip(spec.layers, params.weights, params.biases):
        cache = {} if record else None
        steps.append(("conv", x, w, cache))
        x = ops.conv_forward(x, w, b, cache=cache)
        for op in layer.ops:
            if op.kind == "relu":
                steps.append(("relu", x > 0))
                x = ops.relu(x)
            elif op.kind == "sigmoid":
                x = ops.sigmoid(x)
                steps.append(("sigmoid", x))
            elif op.kind == "softmax":
                x = ops.softmax(x)
                steps.append(("softmax", x))
            elif op.kind == "maxpool":
                t2, v2 = op.args
                y, arg = ops.maxpool_forward(x, t2, v2)
                steps.append(("maxpool", arg, x.shape, t2, v2))
                x = y
            elif op.kind == "dropout":
                if training and op.args[0] > 0:
                    if rng is None:
                        raise ValueError("training with dropout needs an rng")
                    mask = ops.dropout_mask(x.shape, op.args[0], rng)
                    steps.append(("dropout", mask))
                    x = x * mask
    out = x.reshape(len(x), -1)
    return ForwardRecord(out, steps) if record else out


def loss_value(spec: NetworkSpec, pred: np.ndarray, target) -> np.ndarray:
    if spec.loss == "log":
        return ops.log_loss(pred, target)
    return ops.euclidean_loss(pred, target)


def loss_grad(spec: NetworkSpec, pred: np.ndarray, target) -> np.ndarray:
    if spec.loss == "log":
        return ops.log_loss_grad(pred, target)
    return ops.euclidean_loss_grad(pred, target)


def backward(spec: NetworkSpec, params: Parameters, rec: ForwardRecord, target,
             scale: float = 1.0) -> Parameters:
    """Exact gradients of ``scale * sum_batch loss`` for every weight and bias."""
    grad = scale * loss_grad(spec, rec.output, target)
    last = spec.shapes()[-1]
    g = grad.reshape((len(grad),) + last)
    dws = [None] * len(spec.layers)
    dbs = [None] * len(spec.layers)
    layer = len(spec.layers)
    for step in reversed(rec.steps):
        kind = step[0]
        if kind == "relu":
            g = g * step[1]
        elif kind == "sigmoid":
            s = step[1]
            g = g * s * (1.0 - s)
        elif kind == "softmax":
            g = ops.softmax_backward(step[1], g)
        elif kind == "maxpool":
            _, arg, shape, t2, v2 = step
            g = ops.maxpool_backward(g, arg, shape, t2, v2)
        elif kind == "dropout":
            g = g * step[1]
        elif kind == "conv":
            layer -= 1
            _, x, w, cache = step
            g, dws[layer], dbs[layer] = ops.conv_backward(x, w, g, need_dx=layer > 0,
                                                          cache=cache)
    return Parameters(dws, dbs)


def sgd_step(params: Parameters, grads: Parameters, lr: float, momentum: float,
             velocity: Parameters | None = None) -> tuple[Parameters, Parameters]:
    """``v <- momentum v - lr g``; ``p <- p + v``. Returns new params and velocity."""
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    if velocity is None:
        velocity = Parameters([np.zeros_like(w) for w in params.weights],
                              [np.zeros_like(b) for b in params.biases])
    new_v = Parameters([momentum * v - lr * g for v, g in zip(velocity.weights, grads.weights)],
                       [momentum * v - lr * g for v, g in zip(velocity.biases, grads.biases)])
    new_p = Parameters([p + v for p, v in zip(params.weights, new_v.weights)],
                       [p + v for p, v in zip(params.biases, new_v.biases)])
    return new_p, new_v
