"""Minimal float64 neural-network core with hand-derived gradients.

Every operation comes as a forward function plus a vector-Jacobian product
(`*_vjp`) that maps the upstream gradient to gradients for parameters and
inputs. The test suite verifies each pair against central finite
differences, so this module is the numerically trusted base of the stack.

All arrays are float64. Any NaN/Inf produced by an op raises NumericError.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericError, ShapeError

VARIANCE_FLOOR = 1e-10


def check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: non-finite values encountered")
    return arr


@dataclass
class Conv1dLayer:
    """Valid (unpadded) 1-d convolution along time.

    weights: (c_out, c_in, k); bias: (c_out,); output length
    T' = 1 + floor((T - k) / stride).
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1

    def __post_init__(self):
        if self.weights.ndim != 3:
            raise ShapeError("conv weights must be (c_out, c_in, k)")
        if self.stride < 1 or self.weights.shape[2] < 1:
            raise ShapeError("conv kernel and stride must be >= 1")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("conv bias must be (c_out,)")

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]


@dataclass
class AffineLayer:
    """y = W x + b, applied columnwise to matrices."""

    weights: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("affine expects weights (d_out, d_in), bias (d_out,)")


def conv_output_length(t: int, k: int, stride: int) -> int:
    if t < k:
        raise ShapeError(f"input length {t} shorter than kernel {k}")
    return 1 + (t - k) // stride


def conv1d(layer: Conv1dLayer, x: np.ndarray) -> np.ndarray:
    """y[c, t] = bias[c] + sum_{i,k} w[c, i, k] * x[i, t*stride + k]."""
    c_out, c_in, k = layer.weights.shape
    if x.ndim != 2 or x.shape[0] != c_in:
        raise ShapeError(f"conv1d input must be ({c_in}, T), got {x.shape}")
    t_out = conv_output_length(x.shape[1], k, layer.stride)
    y = np.repeat(layer.bias[:, None], t_out, axis=1)
    for j in range(k):
        cols = x[:, j : j + layer.stride * t_out : layer.stride]
        y += layer.weights[:, :, j] @ cols
    return check_finite("conv1d", y)


def conv1d_vjp(layer: Conv1dLayer, x: np.ndarray, grad_out: np.ndarray):
    """Gradients (d_weights, d_bias, d_x) for upstream grad_out (c_out, T')."""
    c_out, c_in, k = layer.weights.shape
    t_out = grad_out.shape[1]
    grad_w = np.zeros_like(layer.weights)
    grad_x = np.zeros_like(x)
    grad_b = grad_out.sum(axis=1)
    for j in range(k):
        sl = slice(j, j + layer.stride * t_out, layer.stride)
        grad_w[:, :, j] = grad_out @ x[:, sl].T
        grad_x[:, sl] += layer.weights[:, :, j].T @ grad_out
    return grad_w, grad_b, grad_x


def affine(layer: AffineLayer, x: np.ndarray) -> np.ndarray:
    d_out, d_in = layer.weights.shape
    if x.shape[0] != d_in:
        raise ShapeError(f"affine input dim {x.shape[0]} != {d_in}")
    if x.ndim == 1:
        y = layer.weights @ x + layer.bias
    elif x.ndim == 2:
        y = layer.weights @ x + layer.bias[:, None]
    else:
        raise ShapeError("affine input must be a vector or (d_in, T) matrix")
    return check_finite("affine", y)


def affine_vjp(layer: AffineLayer, x: np.ndarray, grad_out: np.ndarray):
    if x.ndim == 1:
        grad_w = np.outer(grad_out, x)
        grad_b = grad_out.copy()
        grad_x = layer.weights.T @ grad_out
    else:
        grad_w = grad_out @ x.T
        grad_b = grad_out.sum(axis=1)
        grad_x = layer.weights.T @ grad_out
    return grad_w, grad_b, grad_x


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_vjp(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # Subgradient 0 at exactly 0.
    return np.where(x > 0.0, grad_out, 0.0)


def stats_pool(x: np.ndarray) -> np.ndarray:
    """Concatenate per-channel mean and standard deviation over time.

    Population (1/T) variance, floored at VARIANCE_FLOOR before the square
    root so the gradient stays defined for constant channels.
    """
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError("stats_pool expects (C, T) with T >= 1")
    mean = x.mean(axis=1)
    var = np.maximum(((x - mean[:, None]) ** 2).mean(axis=1), VARIANCE_FLOOR)
    return check_finite("stats_pool", np.concatenate([mean, np.sqrt(var)]))


def stats_pool_vjp(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    c, t = x.shape
    grad_mean, grad_std = grad_out[:c], grad_out[c:]
    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    var = (centered**2).mean(axis=1)
    std = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    # d std / d x = centered / (T * std) where the floor is inactive, else 0.
    active = (var > VARIANCE_FLOOR).astype(np.float64)
    grad_x = grad_mean[:, None] / t
    grad_x = grad_x + (active * grad_std / (t * std))[:, None] * centered
    return grad_x


def avg_pool(x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError("avg_pool expects (C, T) with T >= 1")
    return check_finite("avg_pool", x.mean(axis=1))


def avg_pool_vjp(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    t = x.shape[1]
    return np.repeat(grad_out[:, None] / t, t, axis=1)


def softmax_xent(logits: np.ndarray, label: int):
    """Cross-entropy of softmax(logits) against a hard label.

    Stabilized with max subtraction; loss computed in log space so extreme
    logits cannot overflow. Returns (loss, grad_logits).
    """
    n = logits.shape[0]
    if not 0 <= label < n:
        raise ShapeError(f"label {label} out of range for {n} logits")
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    loss = float(log_z - shifted[label])
    probs = np.exp(shifted - log_z)
    grad = probs.copy()
    grad[label] -= 1.0
    check_finite("softmax_xent", grad)
    if not np.isfinite(loss):
        raise NumericError("softmax_xent: non-finite loss")
    return loss, grad


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Sgd:
    """Vanilla SGD with a stepped decay schedule.

    The learning rate for an update is lr0 * decay^(n_done // decay_every),
    where n_done counts previously applied updates, so the rate drops right
    after each decay_every-th update.
    """

    def __init__(self, lr=0.001, decay=0.98, decay_every=50_000):
        if lr <= 0 or not 0 < decay <= 1 or decay_every < 1:
            raise ShapeError("bad SGD hyperparameters")
        self.lr0 = float(lr)
        self.decay = float(decay)
        self.decay_every = int(decay_every)
        self.update_count = 0

    @property
    def lr(self) -> float:
        return self.lr0 * self.decay ** (self.update_count // self.decay_every)

    def step(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"gradient {name!r} contains NaN/Inf; update refused")
        lr = self.lr
        for name, g in grads.items():
            params[name] -= lr * g
        self.update_count += 1

    def state(self) -> dict:
        return {
            "lr0": self.lr0,
            "decay": self.decay,
            "decay_every": self.decay_every,
            "update_count": self.update_count,
        }

    @classmethod
    def from_state(cls, state: dict) -> "Sgd":
        opt = cls(state["lr0"], state["decay"], state["decay_every"])
        opt.update_count = state["update_count"]
        return opt


def kaiming_uniform(rng, shape, fan_in: int) -> np.ndarray:
    """Uniform(-b, b) with b = sqrt(6 / fan_in) (ReLU gain)."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# checkpoint format: magic, u64 header length, JSON header, raw f64 blocks
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"VFNET001"


def save_checkpoint(path_or_file, header: dict, params) -> None:
    """Write named float64 parameter blocks in the given order.

    ``params`` is an ordered iterable of (name, array).
    """
    blocks = []
    arrays = []
    for name, arr in params:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        blocks.append({"name": name, "shape": list(arr.shape)})
        arrays.append(arr)
    head = json.dumps(
        {"format": 1, "header": header, "blocks": blocks}, sort_keys=True
    ).encode("utf-8")

    def _write(f):
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        for arr in arrays:
            f.write(arr.tobytes())

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(Path(path_or_file), "wb") as f:
            _write(f)


def load_checkpoint(path_or_file):
    """Read a checkpoint; returns (header dict, {name: array})."""

    def _read(f):
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        (head_len,) = struct.unpack("<Q", f.read(8))
        meta = json.loads(f.read(head_len).decode("utf-8"))
        out = {}
        for block in meta["blocks"]:
            shape = tuple(block["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * count)
            if len(buf) != 8 * count:
                raise FormatError(f"truncated checkpoint block {block['name']!r}")
            out[block["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        return meta["header"], out

    if hasattr(path_or_file, "read"):
        return _read(path_or_file)
    with open(Path(path_or_file), "rb") as f:
        return _read(f)


def roundtrip_copy(header: dict, params):
    """Serialize and re-read in memory (used for in-RAM checkpoints)."""
    buf = io.BytesIO()
    save_checkpoint(buf, header, params)
    buf.seek(0)
    return load_checkpoint(buf)
