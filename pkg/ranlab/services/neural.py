"""
Dense feed-forward networks with analytic gradients, Adam, and a uniform
midrise quantizer.

Inputs may be a single vector of shape (n_in,) or a batch of shape
(n_samples, n_in). Parameter gradients of a batch are summed over samples.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from ranlab.core import constants
from ranlab.core.exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)


# ---------------------------
# Activations
# ---------------------------

def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "linear":
        return z
    raise ValueError(f"Unknown activation: '{kind}'. Supported: {list(constants.ACTIVATIONS)}")


def activate_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation, given pre-activation z and output a."""
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "tanh":
        return 1.0 - a ** 2
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "linear":
        return np.ones_like(z)
    raise ValueError(f"Unknown activation: '{kind}'. Supported: {list(constants.ACTIVATIONS)}")


# ---------------------------
# Dense network
# ---------------------------

@dataclass
class DenseNet:
    """
    Fully connected network.

    Attributes:
        layer_sizes: [n_in, hidden..., n_out]
        activations: One tag per weight layer (len(layer_sizes) - 1)
        weights: Per layer, an (n_out, n_in) matrix
        biases: Per layer, an (n_out,) vector
    """

    layer_sizes: List[int]
    activations: List[str]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2:
            raise ValueError("a network needs at least an input and an output layer")
        n_layers = len(self.layer_sizes) - 1
        if len(self.activations) != n_layers:
            raise DimensionMismatchError(
                f"{n_layers} weight layers need {n_layers} activations, got {len(self.activations)}"
            )
        for kind in self.activations:
            if kind not in constants.ACTIVATIONS:
                raise ValueError(f"Unknown activation: '{kind}'")
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise DimensionMismatchError("weights/biases do not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != expected or b.shape != (expected[0],):
                raise DimensionMismatchError(
                    f"layer {i}: expected W{expected} and b({expected[0]},), "
                    f"got W{w.shape} and b{b.shape}"
                )

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> List[np.ndarray]:
        """Parameters in optimizer order: W0, b0, W1, b1, ..."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def copy(self) -> "DenseNet":
        return DenseNet(
            layer_sizes=list(self.layer_sizes),
            activations=list(self.activations),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activations": list(self.activations),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseNet":
        return cls(
            layer_sizes=[int(n) for n in data["layer_sizes"]],
            activations=list(data["activations"]),
            weights=[np.asarray(w, dtype=float) for w in data["weights"]],
            biases=[np.asarray(b, dtype=float) for b in data["biases"]],
        )


@dataclass
class Gradients:
    """Parameter gradients laid out like DenseNet.weights / DenseNet.biases."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def as_list(self) -> List[np.ndarray]:
        grads = []
        for w, b in zip(self.weights, self.biases):
            grads.extend([w, b])
        return grads


def init_net(layer_sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator) -> DenseNet:
    """Glorot-uniform weights and zero biases drawn from the given generator."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseNet(
        layer_sizes=[int(n) for n in layer_sizes],
        activations=list(activations),
        weights=weights,
        biases=biases,
    )


def _as_batch(net: DenseNet, x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != net.n_in:
        raise DimensionMismatchError(f"expected input of length {net.n_in}, got shape {x.shape}")
    return batch, single


def _forward_cache(net: DenseNet, batch: np.ndarray):
    activations = [batch]
    pre = []
    a = batch
    for w, b, kind in zip(net.weights, net.biases, net.activations):
        z = a @ w.T + b
        a = activate(kind, z)
        pre.append(z)
        activations.append(a)
    return pre, activations


def forward(net: DenseNet, x) -> np.ndarray:
    """
    Evaluate the network.

    Args:
        net: Network
        x: Input vector (n_in,) or batch (n_samples, n_in)

    Returns:
        Output with the same leading shape as x

    Raises:
        DimensionMismatchError: If the input length differs from layer_sizes[0]
    """
    batch, single = _as_batch(net, x)
    _, activations = _forward_cache(net, batch)
    out = activations[-1]
    return out[0] if single else out


def gradients(net: DenseNet, x, dloss_dy) -> Tuple[Gradients, np.ndarray]:
    """
    Backpropagate dLoss/dy through the network.

    Args:
        net: Network
        x: Input vector or batch
        dloss_dy: Gradient of the loss w.r.t. the output, same leading shape as x

    Returns:
        Tuple of (parameter gradients summed over the batch, dLoss/dx)
    """
    batch, single = _as_batch(net, x)
    dy = np.asarray(dloss_dy, dtype=float)
    dy = dy[None, :] if single else dy
    if dy.shape != (batch.shape[0], net.n_out):
        raise DimensionMismatchError(
            f"expected output gradient of shape {(batch.shape[0], net.n_out)}, got {dy.shape}"
        )

    pre, activations = _forward_cache(net, batch)
    grad_w: List[np.ndarray] = [None] * len(net.weights)
    grad_b: List[np.ndarray] = [None] * len(net.weights)
    delta = dy
    for i in reversed(range(len(net.weights))):
        dz = delta * activate_grad(net.activations[i], pre[i], activations[i + 1])
        grad_w[i] = dz.T @ activations[i]
        grad_b[i] = dz.sum(axis=0)
        delta = dz @ net.weights[i]

    dx = delta[0] if single else delta
    return Gradients(weights=grad_w, biases=grad_b), dx


def gradient_check(net: DenseNet, x, rng: np.random.Generator, h: float = 1e-5, atol: float = 1e-7) -> float:
    """
    Compare analytic gradients with central finite differences.

    The scalar loss is c . forward(x) for a random direction c. Entries whose
    absolute disagreement is at most atol count as exact.

    Returns:
        Maximum relative error over all parameters
    """
    out = forward(net, x)
    c = rng.standard_normal(out.shape)
    grads, _ = gradients(net, x, c)

    worst = 0.0
    for param, analytic in zip(net.parameters(), grads.as_list()):
        numeric = np.zeros_like(param)
        flat = param.reshape(-1)
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + h
            up = float(np.sum(c * forward(net, x)))
            flat[idx] = saved - h
            down = float(np.sum(c * forward(net, x)))
            flat[idx] = saved
            numeric.reshape(-1)[idx] = (up - down) / (2.0 * h)
        diff = np.abs(analytic - numeric)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        rel = np.where(diff <= atol, 0.0, diff / np.maximum(scale, 1e-300))
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst


def save_checkpoint(net: DenseNet, path: Union[str, Path]) -> None:
    """Write the network as JSON with full decimal precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(net.to_dict()))


def load_checkpoint(path: Union[str, Path]) -> DenseNet:
    return DenseNet.from_dict(json.loads(Path(path).read_text()))


# ---------------------------
# Optimizer
# ---------------------------

@dataclass
class AdamState:
    """First/second moment accumulators for a list of parameters."""

    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    lr: float = constants.ADAM_LR
    beta1: float = constants.ADAM_BETA1
    beta2: float = constants.ADAM_BETA2
    eps: float = constants.ADAM_EPS

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = constants.ADAM_LR, **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            lr=lr,
            **kwargs,
        )


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> List[np.ndarray]:
    """
    Apply one Adam update in place.

    Args:
        state: Optimizer state, advanced by one step
        params: Parameter arrays (updated in place)
        grads: Gradients with the same shapes

    Returns:
        The updated parameter list

    Raises:
        DimensionMismatchError: If shapes do not match the state
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise DimensionMismatchError("parameter, gradient and state lists differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionMismatchError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return list(params)


class NetTrainer:
    """Adam bound to one network's parameters."""

    def __init__(self, net: DenseNet, lr: float = constants.ADAM_LR):
        self.net = net
        self.state = AdamState.for_params(net.parameters(), lr=lr)

    def step(self, grads: Gradients) -> None:
        adam_step(self.state, self.net.parameters(), grads.as_list())


# ---------------------------
# Quantizer
# ---------------------------

@dataclass(frozen=True)
class UniformQuantizer:
    """Midrise uniform quantizer with 2**bits levels inside [lo, hi]."""

    bits: int
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise ValueError(f"bits must be >= 1, got {self.bits}")
        if not self.lo < self.hi:
            raise ValueError(f"quantizer range must satisfy lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def levels(self) -> int:
        return 2 ** self.bits

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.levels


def quantize(q: UniformQuantizer, v) -> Tuple[np.ndarray, np.ndarray]:
    """
    Map values to codes and to their midrise reconstruction levels.

    Values outside [lo, hi] are clamped to the outermost level.

    Returns:
        Tuple of (integer codes in [0, 2**bits), dequantized values)
    """
    v = np.asarray(v, dtype=float)
    codes = np.floor((v - q.lo) / q.step)
    codes = np.clip(codes, 0, q.levels - 1).astype(np.int64)
    return codes, dequantize(q, codes)


def dequantize(q: UniformQuantizer, codes) -> np.ndarray:
    """
    Reconstruction levels of the given codes.

    Raises:
        ValueError: If a code lies outside [0, 2**bits)
    """
    codes = np.asarray(codes)
    if codes.size and (codes.min() < 0 or codes.max() >= q.levels):
        raise ValueError(f"codes must lie in [0, {q.levels}), got [{codes.min()}, {codes.max()}]")
    return q.lo + (codes.astype(float) + 0.5) * q.step


def straight_through(q: UniformQuantizer, v, grad) -> np.ndarray:
    """Backward pass of the quantizer: identity inside [lo, hi], zero where clamped."""
    v = np.asarray(v, dtype=float)
    inside = (v >= q.lo) & (v <= q.hi)
    return np.where(inside, np.asarray(grad, dtype=float), 0.0)
