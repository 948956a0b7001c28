"""Small MLP classifier with manual backprop over a flat parameter vector.

The network is fixed-shape (one ReLU hidden layer, softmax cross-entropy)
and all parameters live in a single float64 vector so the optimizers can
treat it like any other ParamVector. Also includes a synthetic Gaussian
class generator and an IDX image/label reader for real data.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Tuple

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class MLPSpec:
    """Layer sizes of the two-layer ReLU network."""

    input_dim: int
    hidden_dim: int
    output_dim: int

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def param_count(self) -> int:
        return (
            self.input_dim * self.hidden_dim
            + self.hidden_dim
            + self.hidden_dim * self.output_dim
            + self.output_dim
        )


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be a 2-d array of shape (n, dim)")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("labels must be 1-d and match inputs row count")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def unpack_params(spec: MLPSpec, params: np.ndarray):
    """Views (no copies) of the flat vector as (W1, b1, W2, b2)."""
    if params.shape != (spec.param_count,):
        raise ValueError(
            f"expected {spec.param_count} parameters, got shape {params.shape}"
        )
    i, h, o = spec.input_dim, spec.hidden_dim, spec.output_dim
    a = 0
    w1 = params[a : a + i * h].reshape(i, h)
    a += i * h
    b1 = params[a : a + h]
    a += h
    w2 = params[a : a + h * o].reshape(h, o)
    a += h * o
    b2 = params[a : a + o]
    return w1, b1, w2, b2


def mlp_init(spec: MLPSpec, seed: int) -> np.ndarray:
    """Xavier-uniform weights, zero biases, packed flat."""
    rng = np.random.default_rng(seed)
    params = np.zeros(spec.param_count)
    w1, b1, w2, b2 = unpack_params(spec, params)
    bound1 = np.sqrt(6.0 / (spec.input_dim + spec.hidden_dim))
    bound2 = np.sqrt(6.0 / (spec.hidden_dim + spec.output_dim))
    w1[...] = rng.uniform(-bound1, bound1, size=w1.shape)
    w2[...] = rng.uniform(-bound2, bound2, size=w2.shape)
    # b1, b2 stay zero
    return params


def _forward(spec: MLPSpec, params: np.ndarray, inputs: np.ndarray):
    w1, b1, w2, b2 = unpack_params(spec, params)
    pre = inputs @ w1 + b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ w2 + b2
    return pre, hidden, logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _mean_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    # log-softmax form: stays finite even when a softmax probability
    # underflows to zero
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    return float(np.mean(log_norm - picked))


def mlp_loss(spec: MLPSpec, params: np.ndarray, inputs: np.ndarray,
             labels: np.ndarray) -> float:
    """Mean softmax cross-entropy over the batch."""
    _, _, logits = _forward(spec, params, inputs)
    return _mean_cross_entropy(logits, labels)


def mlp_loss_and_grad(spec: MLPSpec, params: np.ndarray, inputs: np.ndarray,
                      labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Loss plus the full gradient as one flat vector.

    ReLU uses subgradient 0 at the kink, so the gradient is exact wherever
    no pre-activation is exactly zero.
    """
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    w1, b1, w2, b2 = unpack_params(spec, params)
    pre, hidden, logits = _forward(spec, params, inputs)
    probs = _softmax(logits)
    loss = _mean_cross_entropy(logits, labels)

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grad = np.zeros_like(params)
    gw1, gb1, gw2, gb2 = unpack_params(spec, grad)
    gw2[...] = hidden.T @ dlogits
    gb2[...] = dlogits.sum(axis=0)
    dhidden = dlogits @ w2.T
    dhidden = np.where(pre > 0.0, dhidden, 0.0)
    gw1[...] = inputs.T @ dhidden
    gb1[...] = dhidden.sum(axis=0)
    return loss, grad


def finite_diff_check(spec: MLPSpec, params: np.ndarray, inputs: np.ndarray,
                      labels: np.ndarray, h: float = 1e-6) -> float:
    """Max relative error of backprop against central differences.

    Checks every coordinate; the relative error denominator is floored at
    1e-12 so exactly-zero gradients do not blow up the ratio.
    """
    _, grad = mlp_loss_and_grad(spec, params, inputs, labels)
    worst = 0.0
    probe = params.copy()
    for i in range(params.size):
        orig = probe[i]
        probe[i] = orig + h
        up = mlp_loss(spec, probe, inputs, labels)
        probe[i] = orig - h
        down = mlp_loss(spec, probe, inputs, labels)
        probe[i] = orig
        diff = (up - down) / (2.0 * h)
        denom = max(abs(diff), abs(grad[i]), 1e-12)
        worst = max(worst, abs(diff - grad[i]) / denom)
    return worst


def synth_gaussian_classes(n_per_class: int, dim: int, num_classes: int,
                           separation: float, seed: int) -> Dataset:
    """Unit-variance Gaussian blobs centered at separation * e_{c mod dim}.

    Rows are class-major: all of class 0, then class 1, and so on.
    """
    if n_per_class < 1 or num_classes < 1:
        raise ValueError("need at least one sample and one class")
    rng = np.random.default_rng(seed)
    blocks = []
    labels = []
    for c in range(num_classes):
        center = np.zeros(dim)
        center[c % dim] = separation
        blocks.append(center + rng.standard_normal((n_per_class, dim)))
        labels.extend([c] * n_per_class)
    return Dataset(
        inputs=np.concatenate(blocks, axis=0),
        labels=np.array(labels, dtype=np.int64),
        num_classes=num_classes,
    )


def parse_idx(data: bytes) -> Tuple[Tuple[int, ...], np.ndarray]:
    """Decode an IDX payload into (dims, array).

    Image payloads (magic 0x00000803) come back as float64 scaled to
    [0, 1]; label payloads (magic 0x00000801) as int64. Raises ValueError
    on a bad magic number or a truncated body.
    """
    if len(data) < 4:
        raise ValueError("IDX data too short for a magic number")
    magic = struct.unpack(">I", data[:4])[0]
    if magic == IDX_IMAGES_MAGIC:
        rank = 3
    elif magic == IDX_LABELS_MAGIC:
        rank = 1
    else:
        raise ValueError(f"unrecognized IDX magic 0x{magic:08X}")
    header_len = 4 + 4 * rank
    if len(data) < header_len:
        raise ValueError("IDX data truncated inside the dimension header")
    dims = struct.unpack(">" + "i" * rank, data[4:header_len])
    if any(d < 0 for d in dims):
        raise ValueError(f"negative IDX dimension in {dims}")
    count = 1
    for d in dims:
        count *= d
    body = data[header_len:]
    if len(body) != count:
        raise ValueError(
            f"IDX body holds {len(body)} bytes but dimensions {dims} imply {count}"
        )
    raw = np.frombuffer(body, dtype=np.uint8)
    if magic == IDX_IMAGES_MAGIC:
        return dims, (raw.astype(np.float64) / 255.0).reshape(dims)
    return dims, raw.astype(np.int64)


def render_idx(dims: Tuple[int, ...], array: np.ndarray) -> bytes:
    """Inverse of parse_idx; round-trips both payload kinds."""
    if len(dims) == 3:
        magic = IDX_IMAGES_MAGIC
        body = np.rint(np.asarray(array) * 255.0).astype(np.uint8)
    elif len(dims) == 1:
        magic = IDX_LABELS_MAGIC
        body = np.asarray(array).astype(np.uint8)
    else:
        raise ValueError(f"IDX rank must be 1 or 3, got {len(dims)}")
    if body.shape != tuple(dims):
        raise ValueError(f"array shape {body.shape} does not match dims {dims}")
    header = struct.pack(">I", magic) + struct.pack(">" + "i" * len(dims), *dims)
    return header + body.tobytes()


def accuracy(spec: MLPSpec, params: np.ndarray, dataset: Dataset) -> float:
    """Fraction of samples whose argmax logit matches the label.

    Ties go to the lowest class index.
    """
    _, _, logits = _forward(spec, params, dataset.inputs)
    predicted = np.argmax(logits, axis=1)
    return float(np.mean(predicted == dataset.labels))


class MLPBatchOracle:
    """Gradient oracle view of minibatch training, for the shared harness.

    Each sample() draws batch_size indices with replacement from the run's
    rng and returns the batch gradient; the batch loss is stashed on
    last_loss for the recorder.
    """

    def __init__(self, spec: MLPSpec, dataset: Dataset, batch_size: int):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.spec = spec
        self.dataset = dataset
        self.batch_size = min(batch_size, len(dataset))
        self.dim = spec.param_count
        self.feasible_box = None
        self.convergence_target = None
        self.label = f"mlp-{spec.input_dim}x{spec.hidden_dim}x{spec.output_dim}"
        self.last_loss = None

    def sample(self, theta, rng):
        n = len(self.dataset)
        idx = [rng.randrange(n) for _ in range(self.batch_size)]
        loss, grad = mlp_loss_and_grad(
            self.spec, theta, self.dataset.inputs[idx], self.dataset.labels[idx]
        )
        self.last_loss = loss
        return grad

    def true_gradient(self, theta):
        return None

    def true_loss(self, theta):
        return None
