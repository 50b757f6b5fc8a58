"""From-scratch LSTM + dense classifier over 16 tabular code metrics.

The network is a single-timestep LSTM cell (16 hidden units, zero initial
state) feeding a relu dense stack (72, 50, 36, 28) and a 2-way softmax
head. Everything is plain numpy float64. Parameters travel between
federation nodes as one flat vector with a fixed canonical layout, so
model exchange and aggregation reduce to vector arithmetic.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericError, StructuralError

INPUT_DIM = 16
HIDDEN_DIM = 16
DENSE_UNITS = (72, 50, 36, 28)
NUM_CLASSES = 2

# Probability clamp applied inside the cross-entropy; wide enough to never
# disturb reported losses, tight enough to keep log() finite.
PROB_CLAMP = 1e-12

RELU = "relu"
SOFTMAX = "softmax"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, SOFTMAX, IDENTITY)


@dataclass
class LstmCellParams:
    """Gate parameters of one LSTM cell acting on [h_prev, x] vectors.

    All four weight matrices are (hidden_dim, hidden_dim + input_dim);
    all four biases are (hidden_dim,). Gate order everywhere is forget,
    input, output, candidate.
    """

    w_f: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        shape = self.w_f.shape
        if len(shape) != 2 or shape[0] < 1:
            raise StructuralError(f"gate weights must be 2-D with hidden_dim > 0, got {shape}")
        for name in ("w_i", "w_o", "w_c"):
            if getattr(self, name).shape != shape:
                raise StructuralError(f"{name} shape {getattr(self, name).shape} != w_f shape {shape}")
        for name in ("b_f", "b_i", "b_o", "b_c"):
            if getattr(self, name).shape != (shape[0],):
                raise StructuralError(f"{name} must have length {shape[0]}")

    @property
    def hidden_dim(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]


@dataclass
class DenseLayerParams:
    """One fully-connected layer: activation(weights @ x + bias)."""

    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = RELU

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise StructuralError("dense weights must be 2-D")
        if self.bias.shape != (self.weights.shape[0],):
            raise StructuralError(
                f"bias length {self.bias.shape} does not match {self.weights.shape[0]} output rows"
            )
        if self.activation not in _ACTIVATIONS:
            raise StructuralError(f"unknown activation {self.activation!r}")


@dataclass
class ModelParams:
    """Full parameter set: LSTM cell, relu dense stack, softmax head."""

    lstm: LstmCellParams
    dense: tuple[DenseLayerParams, ...]
    output: DenseLayerParams


@dataclass(frozen=True)
class AdamState:
    """Adam moment estimates over the flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, dim: int, **kwargs) -> "AdamState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), **kwargs)


@dataclass(frozen=True)
class Hyperparams:
    """Local-training knobs shared by centralized and federated runs."""

    learning_rate: float = 0.001
    batch_size: int = 32
    local_epochs: int = 1

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise StructuralError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise StructuralError("batch_size must be >= 1")
        if self.local_epochs < 1:
            raise StructuralError("local_epochs must be >= 1")


def _architecture_param_count() -> int:
    z_dim = HIDDEN_DIM + INPUT_DIM
    count = 4 * (HIDDEN_DIM * z_dim + HIDDEN_DIM)
    fan_in = HIDDEN_DIM
    for units in DENSE_UNITS + (NUM_CLASSES,):
        count += units * fan_in + units
        fan_in = units
    return count


PARAM_COUNT = _architecture_param_count()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid exp overflow on large-magnitude inputs.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _as_finite_vector(x, length: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (length,):
        raise StructuralError(f"{what} must be a vector of length {length}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} contains non-finite values")
    return arr


def lstm_forward(x, h_prev, c_prev, p: LstmCellParams):
    """One LSTM cell step on a single input vector.

    Computes the forget/input/output gates as sigmoids of affine maps of
    the concatenation [h_prev, x], the tanh candidate, the new cell state
    f*c_prev + i*candidate and the new hidden state o*tanh(c).

    Returns (h, c, cache) where cache holds the intermediates needed for
    a backward pass.
    """
    x = _as_finite_vector(x, p.input_dim, "x")
    h_prev = _as_finite_vector(h_prev, p.hidden_dim, "h_prev")
    c_prev = _as_finite_vector(c_prev, p.hidden_dim, "c_prev")

    z = np.concatenate([h_prev, x])
    f = _sigmoid(p.w_f @ z + p.b_f)
    i = _sigmoid(p.w_i @ z + p.b_i)
    o = _sigmoid(p.w_o @ z + p.b_o)
    g = np.tanh(p.w_c @ z + p.b_c)
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    cache = {"z": z, "f": f, "i": i, "o": o, "g": g, "c": c, "c_prev": c_prev}
    return h, c, cache


@dataclass
class ForwardCache:
    """Intermediates of a batched forward pass, consumed by the backward pass."""

    z: np.ndarray  # (n, hidden+input), leading hidden block is zeros
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c_prev: np.ndarray
    tanh_c: np.ndarray
    dense_inputs: list  # input activation of each dense layer, head included
    dense_pre: list  # pre-activation of each relu layer
    probs: np.ndarray


def forward_batch(X, p: ModelParams):
    """Forward pass over a (n, 16) feature batch.

    Each row is treated as a single-timestep sequence with zero initial
    hidden and cell state. Returns (probs, cache) with probs of shape
    (n, 2) summing to 1 per row.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != p.lstm.input_dim:
        raise StructuralError(f"feature batch must be (n, {p.lstm.input_dim}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericError("feature batch contains non-finite values")

    n = X.shape[0]
    hidden = p.lstm.hidden_dim
    z = np.concatenate([np.zeros((n, hidden)), X], axis=1)
    c_prev = np.zeros((n, hidden))

    f = _sigmoid(z @ p.lstm.w_f.T + p.lstm.b_f)
    i = _sigmoid(z @ p.lstm.w_i.T + p.lstm.b_i)
    o = _sigmoid(z @ p.lstm.w_o.T + p.lstm.b_o)
    g = np.tanh(z @ p.lstm.w_c.T + p.lstm.b_c)
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    a = o * tanh_c

    dense_inputs = []
    dense_pre = []
    for layer in p.dense:
        dense_inputs.append(a)
        pre = a @ layer.weights.T + layer.bias
        dense_pre.append(pre)
        a = np.maximum(pre, 0.0)
    dense_inputs.append(a)

    logits = a @ p.output.weights.T + p.output.bias
    probs = _softmax(logits)
    if not np.all(np.isfinite(probs)):
        raise NumericError("forward pass produced non-finite probabilities")

    cache = ForwardCache(
        z=z, f=f, i=i, o=o, g=g, c_prev=c_prev, tanh_c=tanh_c,
        dense_inputs=dense_inputs, dense_pre=dense_pre, probs=probs,
    )
    return probs, cache


def model_forward(x, p: ModelParams):
    """Class probabilities for a single 16-feature vector."""
    x = _as_finite_vector(x, p.lstm.input_dim, "x")
    probs, cache = forward_batch(x[None, :], p)
    return probs[0], cache


def cross_entropy(probs, label: int) -> float:
    """Negative log-likelihood of the true class, clamp-protected."""
    if label not in (0, 1):
        raise StructuralError(f"label must be 0 or 1, got {label!r}")
    p = float(probs[label])
    p = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -math.log(p)


def mean_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean clamp-protected cross-entropy over a batch of (n, 2) probabilities."""
    picked = probs[np.arange(len(labels)), labels]
    picked = np.clip(picked, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-np.log(picked)))


def loss_and_gradient(X, y, p: ModelParams):
    """Mean batch loss and its gradient in canonical flat layout.

    Backpropagates softmax cross-entropy through the head, the relu
    stack and the LSTM gates. The initial cell state is zero, so the
    forget-gate parameters receive exactly zero gradient; that is the
    correct derivative, not an omission.
    """
    y = np.asarray(y, dtype=int)
    probs, cache = forward_batch(X, p)
    n = len(y)
    if y.shape != (n,) or probs.shape[0] != n:
        raise StructuralError("labels must align with the feature batch")
    loss = mean_cross_entropy(probs, y)

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    head_in = cache.dense_inputs[-1]
    g_out_w = dlogits.T @ head_in
    g_out_b = dlogits.sum(axis=0)
    da = dlogits @ p.output.weights

    g_dense = []
    for layer, pre, a_in in zip(reversed(p.dense), reversed(cache.dense_pre),
                                reversed(cache.dense_inputs[:-1])):
        dpre = da * (pre > 0)
        g_dense.append((dpre.T @ a_in, dpre.sum(axis=0)))
        da = dpre @ layer.weights
    g_dense.reverse()

    dh = da
    d_o = dh * cache.tanh_c
    da_o = d_o * cache.o * (1.0 - cache.o)
    dc = dh * cache.o * (1.0 - cache.tanh_c ** 2)
    d_f = dc * cache.c_prev
    da_f = d_f * cache.f * (1.0 - cache.f)
    d_i = dc * cache.g
    da_i = d_i * cache.i * (1.0 - cache.i)
    d_g = dc * cache.i
    da_c = d_g * (1.0 - cache.g ** 2)

    z = cache.z
    pieces = [
        da_f.T @ z, da_f.sum(axis=0),
        da_i.T @ z, da_i.sum(axis=0),
        da_o.T @ z, da_o.sum(axis=0),
        da_c.T @ z, da_c.sum(axis=0),
    ]
    for gw, gb in g_dense:
        pieces.extend([gw, gb])
    pieces.extend([g_out_w, g_out_b])
    grad = np.concatenate([piece.ravel() for piece in pieces])
    if not np.all(np.isfinite(grad)):
        raise NumericError("backward pass produced non-finite gradients")
    return loss, grad


def backward(batch, p: ModelParams) -> np.ndarray:
    """Gradient of the mean batch loss; batch is a sequence of (x, label) pairs."""
    batch = list(batch)
    if not batch:
        raise StructuralError("batch must be nonempty")
    X = np.asarray([np.asarray(x, dtype=float) for x, _ in batch])
    y = np.asarray([label for _, label in batch], dtype=int)
    if not np.all((y == 0) | (y == 1)):
        raise StructuralError("labels must be 0 or 1")
    _, grad = loss_and_gradient(X, y, p)
    return grad


def adam_update(values: np.ndarray, grad: np.ndarray, state: AdamState,
                learning_rate: float):
    """One bias-corrected Adam step on a flat parameter vector."""
    values = np.asarray(values, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != values.shape or state.m.shape != values.shape:
        raise StructuralError("gradient/state length does not match parameter vector")
    t = state.step_count + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_values = values - learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_values, replace(state, m=m, v=v, step_count=t)


def adam_step(p: ModelParams, grad: np.ndarray, state: AdamState,
              learning_rate: float):
    """Adam step expressed on structured parameters; returns (params, state)."""
    values = flatten_params(p)
    new_values, new_state = adam_update(values, grad, state, learning_rate)
    return unflatten_params(new_values), new_state


def _param_arrays(p: ModelParams):
    # Canonical order: gates f, i, o, c (weights then bias each), then the
    # dense stack in depth order, then the head; row-major throughout.
    lstm = p.lstm
    arrays = [lstm.w_f, lstm.b_f, lstm.w_i, lstm.b_i,
              lstm.w_o, lstm.b_o, lstm.w_c, lstm.b_c]
    for layer in (*p.dense, p.output):
        arrays.extend([layer.weights, layer.bias])
    return arrays


def flatten_params(p: ModelParams) -> np.ndarray:
    """Serialize parameters into the canonical flat float64 vector."""
    return np.concatenate([a.ravel() for a in _param_arrays(p)])


def unflatten_params(values) -> ModelParams:
    """Rebuild structured parameters from a canonical flat vector."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size != PARAM_COUNT:
        raise StructuralError(f"parameter vector must have length {PARAM_COUNT}, got {values.size}")

    cursor = 0

    def take(*shape):
        nonlocal cursor
        size = int(np.prod(shape))
        block = values[cursor:cursor + size].reshape(shape).copy()
        cursor += size
        return block

    z_dim = HIDDEN_DIM + INPUT_DIM
    gates = {}
    for gate in ("f", "i", "o", "c"):
        gates[f"w_{gate}"] = take(HIDDEN_DIM, z_dim)
        gates[f"b_{gate}"] = take(HIDDEN_DIM)
    lstm = LstmCellParams(**gates)

    dense = []
    fan_in = HIDDEN_DIM
    for units in DENSE_UNITS:
        dense.append(DenseLayerParams(take(units, fan_in), take(units), RELU))
        fan_in = units
    output = DenseLayerParams(take(NUM_CLASSES, fan_in), take(NUM_CLASSES), SOFTMAX)
    return ModelParams(lstm=lstm, dense=tuple(dense), output=output)


def init_params(seed: int) -> ModelParams:
    """Fresh parameters: Glorot-uniform weights, zero biases, seeded."""
    rng = np.random.default_rng(seed)

    def glorot(out_dim, in_dim):
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        return rng.uniform(-limit, limit, size=(out_dim, in_dim))

    z_dim = HIDDEN_DIM + INPUT_DIM
    gates = {}
    for gate in ("f", "i", "o", "c"):
        gates[f"w_{gate}"] = glorot(HIDDEN_DIM, z_dim)
        gates[f"b_{gate}"] = np.zeros(HIDDEN_DIM)
    lstm = LstmCellParams(**gates)

    dense = []
    fan_in = HIDDEN_DIM
    for units in DENSE_UNITS:
        dense.append(DenseLayerParams(glorot(units, fan_in), np.zeros(units), RELU))
        fan_in = units
    output = DenseLayerParams(glorot(NUM_CLASSES, fan_in), np.zeros(NUM_CLASSES), SOFTMAX)
    return ModelParams(lstm=lstm, dense=tuple(dense), output=output)


def save_weights(path, values) -> None:
    """Write a flat weight vector as a .fwv checkpoint.

    Format: little-endian uint32 value count, then the values as
    little-endian float64 in canonical layout order.
    """
    arr = np.ascontiguousarray(np.asarray(values, dtype="<f8").ravel())
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", arr.size))
        fh.write(arr.tobytes())


def load_weights(path) -> np.ndarray:
    """Read a .fwv checkpoint back into a flat float64 vector."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise StructuralError("checkpoint file is truncated")
    (count,) = struct.unpack_from("<I", raw)
    if len(raw) != 4 + 8 * count:
        raise StructuralError(
            f"checkpoint declares {count} values but holds {(len(raw) - 4) // 8}"
        )
    return np.frombuffer(raw, dtype="<f8", offset=4).astype(float)
