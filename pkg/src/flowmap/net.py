"""Residual flow-map network ``x_out = x_in + N(x_in, alpha, delta)``.

All trainable parameters live in one flat float64 buffer ``theta``; the
per-layer matrices (bias as last column) are views into it, so optimiser
updates on ``theta`` are seen by every layer without copying.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .core import DimensionError, Rng

MODEL_FORMAT_VERSION = 1
ACTIVATIONS = ("tanh", "relu")


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    d: int
    l: int
    hidden_layers: int = 3
    width: int = 40
    activation: str = "tanh"
    output_tanh: bool = False

    def __post_init__(self):
        if self.d < 1 or self.l < 0:
            raise ValueError("need d >= 1 and l >= 0")
        if self.hidden_layers < 1 or self.width < 1:
            raise ValueError("need at least one hidden layer of width >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def input_dim(self) -> int:
        return self.d + self.l + 1

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """``(rows, cols)`` per weight matrix, bias column included."""
        dims = [self.input_dim] + [self.width] * self.hidden_layers + [self.d]
        return [(dims[i + 1], dims[i] + 1) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(r * c for r, c in self.layer_shapes)


@dataclass
class ForwardCache:
    """Layer activations of one batch, ``acts[0]`` being the input rows."""

    acts: list
    pre: list
    out: np.ndarray


class Network:
    def __init__(self, spec: NetworkSpec, theta: np.ndarray | None = None):
        self.spec = spec
        if theta is None:
            theta = np.zeros(spec.n_params)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (spec.n_params,):
            raise DimensionError(f"expected {spec.n_params} parameters, got {theta.shape}")
        self.theta = theta
        self._bind()

    def _bind(self):
        self.weights, self._lin, self._bias = [], [], []
        offset = 0
        for rows, cols in self.spec.layer_shapes:
            W = self.theta[offset : offset + rows * cols].reshape(rows, cols)
            self.weights.append(W)
            self._lin.append(W[:, :-1].T)
            self._bias.append(W[:, -1])
            offset += rows * cols

    def copy(self) -> "Network":
        return Network(self.spec, self.theta.copy())

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    def net_forward(self, y: np.ndarray, keep: bool = False):
        """Evaluate the plain feed-forward part on input rows ``y``."""
        relu = self.spec.activation == "relu"
        acts, pre = [y], []
        a = y
        last = len(self._lin) - 1
        for j, (A, b) in enumerate(zip(self._lin, self._bias)):
            z = a @ A
            z += b
            if j == last:
                a = np.tanh(z) if self.spec.output_tanh else z
            elif relu:
                pre.append(z)
                a = np.maximum(z, 0.0)
            else:
                a = np.tanh(z)
            if keep and j != last:
                acts.append(a)
        if keep:
            return a, ForwardCache(acts, pre, a)
        return a

    def increment(self, x, alpha, delta) -> np.ndarray:
        """Learned state increment for batches ``x (B, d)``, ``alpha (B, l)``, ``delta (B,)``."""
        x = np.asarray(x, dtype=np.float64)
        B = x.shape[0]
        y = np.empty((B, self.spec.input_dim))
        y[:, : self.spec.d] = x
        y[:, self.spec.d : -1] = alpha
        y[:, -1] = delta
        return self.net_forward(y)

    __call__ = increment


def init_network(spec: NetworkSpec, rng: Rng) -> Network:
    """Gaussian weights with variance ``1/fan_in``; biases exactly zero."""
    net = Network(spec)
    for W in net.weights:
        fan_in = W.shape[1] - 1
        W[:, :-1] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), (W.shape[0], fan_in))
        W[:, -1] = 0.0
    return net


def assemble_inputs(spec: NetworkSpec, x_in, alpha, delta) -> np.ndarray:
    x_in = np.atleast_2d(np.asarray(x_in, dtype=np.float64))
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    delta = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    if x_in.shape[1] != spec.d:
        raise DimensionError(f"dimension mismatch: x_in has {x_in.shape[1]} components, network expects d={spec.d}")
    if alpha.shape[1] != spec.l:
        raise DimensionError(f"dimension mismatch: alpha has {alpha.shape[1]} components, network expects l={spec.l}")
    B = max(x_in.shape[0], alpha.shape[0], delta.shape[0])
    return np.hstack([
        np.broadcast_to(x_in, (B, spec.d)),
        np.broadcast_to(alpha, (B, spec.l)),
        np.broadcast_to(delta[:, None], (B, 1)),
    ])


def forward(net: Network, x_in, alpha, delta):
    """Residual network output and the cache needed by :func:`backward`.

    Accepts single vectors or row batches; a single input returns a 1-d
    state. The skip connection touches only the state block of the input.
    """
    single = np.ndim(x_in) <= 1 and np.ndim(delta) == 0
    y = assemble_inputs(net.spec, x_in, alpha, delta)
    nhat, cache = net.net_forward(y, keep=True)
    x_out = y[:, : net.spec.d] + nhat
    return (x_out[0] if single else x_out), cache


def backward(net: Network, cache: ForwardCache, residual) -> np.ndarray:
    """Gradient of ``mean_b ||residual_b||^2`` with respect to ``theta``.

    ``residual`` is ``x_out - target`` for the rows in ``cache``. The skip
    connection has no parameters, so it adds nothing here.
    """
    r = np.atleast_2d(np.asarray(residual, dtype=np.float64))
    B = cache.acts[0].shape[0]
    if r.shape != (B, net.spec.d):
        raise DimensionError(f"residual has shape {r.shape}, expected {(B, net.spec.d)}")
    grad = np.empty_like(net.theta)
    gW = []
    offset = 0
    for rows, cols in net.spec.layer_shapes:
        gW.append(grad[offset : offset + rows * cols].reshape(rows, cols))
        offset += rows * cols

    g = (2.0 / B) * r
    if net.spec.output_tanh:
        g = g * (1.0 - cache.out * cache.out)
    relu = net.spec.activation == "relu"
    for j in range(len(gW) - 1, -1, -1):
        a_prev = cache.acts[j]
        gW[j][:, :-1] = g.T @ a_prev
        gW[j][:, -1] = g.sum(axis=0)
        if j:
            g = g @ net.weights[j][:, :-1]
            if relu:
                g *= cache.pre[j - 1] > 0
            else:
                g *= 1.0 - a_prev * a_prev
    return grad


def unflatten(spec: NetworkSpec, flat: np.ndarray) -> list[np.ndarray]:
    return Network(spec, flat).weights


@dataclass
class AdamState:
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_network(cls, net: Network, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(0, np.zeros(net.n_params), np.zeros(net.n_params), lr, beta1, beta2, eps)

    def copy(self) -> "AdamState":
        return AdamState(self.t, self.m.copy(), self.v.copy(), self.lr, self.beta1, self.beta2, self.eps)


def adam_update(net: Network, state: AdamState, grad: np.ndarray):
    """One bias-corrected Adam step, applied in place; returns ``(net, state)``."""
    if grad.shape != net.theta.shape:
        raise DimensionError(f"gradient shape {grad.shape} does not match {net.theta.shape}")
    if state.m is None:
        state.m = np.zeros_like(net.theta)
        state.v = np.zeros_like(net.theta)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    tmp = np.multiply(grad, 1.0 - b1)
    state.m *= b1
    state.m += tmp
    np.multiply(grad, grad, out=tmp)
    tmp *= 1.0 - b2
    state.v *= b2
    state.v += tmp
    # m_hat / (sqrt(v_hat) + eps) with the bias corrections folded into scalars
    np.sqrt(state.v, out=tmp)
    tmp *= 1.0 / np.sqrt(1.0 - b2**state.t)
    tmp += state.eps
    np.divide(state.m, tmp, out=tmp)
    tmp *= state.lr / (1.0 - b1**state.t)
    net.theta -= tmp
    return net, state


def save_model(net: Network, path: str | os.PathLike) -> None:
    """Write the network as versioned JSON; floats round-trip exactly."""
    s = net.spec
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "d": s.d,
        "l": s.l,
        "hidden_layers": s.hidden_layers,
        "width": s.width,
        "activation": s.activation,
        "output_tanh": s.output_tanh,
        "weights": [W.tolist() for W in net.weights],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> Network:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        if exc.pos >= len(text.rstrip()):
            raise ModelFormatError("unexpected end of model file") from None
        raise ModelFormatError(f"malformed model file at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must hold a JSON object")
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {version!r}, expected {MODEL_FORMAT_VERSION}")
    try:
        spec = NetworkSpec(
            int(doc["d"]), int(doc["l"]), int(doc["hidden_layers"]), int(doc["width"]),
            str(doc["activation"]), bool(doc["output_tanh"]),
        )
        layers = doc["weights"]
    except KeyError as exc:
        raise ModelFormatError(f"model file is missing field {exc.args[0]!r}") from None
    shapes = spec.layer_shapes
    if len(layers) != len(shapes):
        raise ModelFormatError(f"shape error: spec implies {len(shapes)} weight matrices, file has {len(layers)}")
    chunks = []
    for k, (W, shape) in enumerate(zip(layers, shapes)):
        try:
            arr = np.array(W, dtype=np.float64)
        except ValueError:
            raise ModelFormatError(f"shape error: weight matrix {k} is ragged") from None
        if arr.shape != shape:
            raise ModelFormatError(f"shape error: weight matrix {k} has shape {arr.shape}, spec implies {shape}")
        if not np.all(np.isfinite(arr)):
            raise ModelFormatError(f"weight matrix {k} has non-finite entries")
        chunks.append(arr.ravel())
    return Network(spec, np.concatenate(chunks))
