"""Dense networks with hand-written backpropagation.

Everything runs in float64. Inputs may be a single vector ``(in,)`` or a
batch ``(batch, in)``; losses average over the batch.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Callable, Sequence

import numpy as np

ACTIVATIONS = ("identity", "relu")
MODEL_MAGIC = b"I2TM"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError("bias length must match weight rows")

    @property
    def n_in(self):
        return self.W.shape[1]

    @property
    def n_out(self):
        return self.W.shape[0]


@dataclass
class DenseNet:
    layers: list

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer sizes do not chain: {a.n_out} -> {b.n_in}")

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out

    def params(self) -> list:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])


def init_net(sizes: Sequence[int], activations: Sequence[str], rng) -> DenseNet:
    """Fan-in scaled uniform init: ``U(-sqrt(6/fan_in), sqrt(6/fan_in))`` for
    relu layers and ``U(-sqrt(3/fan_in), ...)`` otherwise; zero biases."""
    layers = []
    for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
        lim = np.sqrt((6.0 if act == "relu" else 3.0) / n_in)
        layers.append(Layer(rng.uniform(-lim, lim, (n_out, n_in)), np.zeros(n_out), act))
    return DenseNet(layers)


def forward(net: DenseNet, x):
    """Returns ``(output, cache)``; the cache holds each layer's input and
    pre-activation."""
    a = np.asarray(x, dtype=float)
    if a.shape[-1] != net.n_in:
        raise ValueError(f"input length {a.shape[-1]} does not match network input {net.n_in}")
    cache = []
    for layer in net.layers:
        z = a @ layer.W.T + layer.b
        cache.append((a, z))
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return a, cache


def backward(net: DenseNet, cache, grad_out):
    """Reverse pass. Returns ``(param_grads, input_grad)`` with
    ``param_grads`` ordered like ``net.params()``."""
    if len(cache) != len(net.layers):
        raise ValueError("stale cache: layer count mismatch")
    g = np.asarray(grad_out, dtype=float)
    grads = [None] * (2 * len(net.layers))
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        a_in, z = cache[i]
        if z.shape != g.shape or a_in.shape[-1] != layer.n_in:
            raise ValueError("stale cache: shape mismatch")
        if layer.activation == "relu":
            g = g * (z > 0)
        if g.ndim == 1:
            grads[2 * i] = np.outer(g, a_in)
            grads[2 * i + 1] = g.copy()
        else:
            grads[2 * i] = g.T @ a_in
            grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.W
    return grads, g


# -- losses -----------------------------------------------------------------

def mse(pred, target) -> float:
    p, t = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    p, t = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    return 2.0 * (p - t) / p.size


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, label) -> float:
    """Mean of ``-log softmax(logits)[label]``; ``label`` may be an int or an
    array of ints for batched logits."""
    ls = log_softmax(logits)
    lab = np.asarray(label)
    if np.any(lab < 0) or np.any(lab >= ls.shape[-1]):
        raise ValueError("class index out of range")
    if ls.ndim == 1:
        return float(-ls[int(lab)])
    return float(-ls[np.arange(len(ls)), lab].mean())


def cross_entropy_grad(logits, label) -> np.ndarray:
    ls = log_softmax(logits)
    p = np.exp(ls)
    lab = np.asarray(label)
    if ls.ndim == 1:
        p[int(lab)] -= 1.0
        return p
    p[np.arange(len(p)), lab] -= 1.0
    return p / len(p)


# -- optimiser --------------------------------------------------------------

@dataclass
class OptimizerState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **hyper) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def opt_step(state: OptimizerState, params: list, grads: list) -> list:
    """Bias-corrected adaptive-moment update, applied in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter / gradient count mismatch")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# -- gradient checking ------------------------------------------------------

def relative_error(analytic, numeric, floor: float = 1e-10) -> np.ndarray:
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    out = np.where(scale > floor, diff / np.where(scale > floor, scale, 1.0), 0.0)
    return out


def gradcheck_params(params: list, loss_fn: Callable[[], float], grads: list,
                     rng, n_checks: int = 200, step: float = 1e-5) -> float:
    """Compare ``grads`` to central differences of ``loss_fn`` at up to
    ``n_checks`` randomly chosen scalar parameters. Parameters are perturbed
    in place and restored."""
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(n_checks, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = np.unravel_index(int(flat - offsets[k]), params[k].shape)
        p = params[k]
        old = p[idx]
        p[idx] = old + step
        up = loss_fn()
        p[idx] = old - step
        down = loss_fn()
        p[idx] = old
        numeric = (up - down) / (2 * step)
        worst = max(worst, float(relative_error(grads[k][idx], numeric)))
    return worst


def gradcheck(net: DenseNet, loss: str, sample, rng=None, n_checks: int = 200,
              step: float = 1e-5, backward_fn=backward) -> float:
    """Max relative error between ``backward_fn`` and finite differences
    for one ``(input, target)`` sample. ``loss`` is ``"mse"`` or
    ``"cross_entropy"``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    x, target = sample
    value, grad = {"mse": (mse, mse_grad), "cross_entropy": (cross_entropy, cross_entropy_grad)}[loss]

    def f():
        return value(forward(net, x)[0], target)

    out, cache = forward(net, x)
    grads, _ = backward_fn(net, cache, grad(out, target))
    return gradcheck_params(net.params(), f, grads, rng, n_checks, step)


# -- serialisation ----------------------------------------------------------

def write_net(fh: BinaryIO, net: DenseNet) -> None:
    fh.write(MODEL_MAGIC)
    fh.write(struct.pack("<II", MODEL_VERSION, len(net.layers)))
    for layer in net.layers:
        fh.write(struct.pack("<IIB", layer.n_in, layer.n_out, ACTIVATIONS.index(layer.activation)))
        fh.write(layer.W.astype("<f4").tobytes())
        fh.write(layer.b.astype("<f4").tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ModelFormatError("truncated model file")
    return data


def read_net(fh: BinaryIO) -> DenseNet:
    if _read_exact(fh, 4) != MODEL_MAGIC:
        raise ModelFormatError("bad model magic")
    version, n_layers = struct.unpack("<II", _read_exact(fh, 8))
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    layers = []
    for _ in range(n_layers):
        n_in, n_out, act = struct.unpack("<IIB", _read_exact(fh, 9))
        if act >= len(ACTIVATIONS):
            raise ModelFormatError(f"bad activation code {act}")
        W = np.frombuffer(_read_exact(fh, 4 * n_in * n_out), "<f4").reshape(n_out, n_in).astype(float)
        b = np.frombuffer(_read_exact(fh, 4 * n_out), "<f4").astype(float)
        layers.append(Layer(W, b, ACTIVATIONS[act]))
    return DenseNet(layers)


def save_net(net: DenseNet, path) -> None:
    with open(path, "wb") as fh:
        write_net(fh, net)


def load_net(path) -> DenseNet:
    with open(path, "rb") as fh:
        net = read_net(fh)
        if fh.read(1):
            raise ModelFormatError("trailing bytes after model")
    return net
