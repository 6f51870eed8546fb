"""Small dense-network engine in float64 numpy.

Forward pass, exact backprop, inverted dropout and Adam. Layers may carry a
fixed 0/1 connectivity mask; this is how the additive (per-feature) nets are
expressed as block-diagonal dense layers while sharing one engine.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, ShapeError, StateError

MODES = ("train", "eval", "mc_sample")
ACTIVATIONS = ("relu", "identity")

_version_counter = itertools.count()


@dataclass
class DenseLayer:
    weights: np.ndarray  # (fan_out, fan_in)
    biases: np.ndarray  # (fan_out,)
    activation: str = "relu"
    mask: Optional[np.ndarray] = None  # same shape as weights; 0 = no connection

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"weights {self.weights.shape} and biases {self.biases.shape} are inconsistent"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=np.float64)
            if self.mask.shape != self.weights.shape:
                raise ShapeError("mask shape must match weights")
            self.weights = self.weights * self.mask

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class MlpNet:
    layers: list
    dropout_rate: float = 0.0
    l2_penalty: float = 0.0
    version: int = field(default_factory=lambda: next(_version_counter), compare=False)

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("a net needs at least one layer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.l2_penalty < 0:
            raise ConfigurationError("l2_penalty must be nonnegative")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ShapeError(f"layer sizes {prev.fan_out} -> {nxt.fan_in} do not chain")
        if self.layers[-1].activation != "identity":
            raise ConfigurationError("the output layer must use the identity activation")

    @property
    def n_in(self) -> int:
        return self.layers[0].fan_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].fan_out

    def parameters(self) -> list:
        """Parameter arrays in the order [W0, b0, W1, b1, ...] (views, not copies)."""
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.biases])
        return out

    def masks(self) -> list:
        """Per-parameter masks aligned with parameters(); None means all entries free."""
        out = []
        for layer in self.layers:
            out.extend([layer.mask, None])
        return out

    def n_parameters(self) -> int:
        return sum(
            int(p.size if m is None else m.sum()) for p, m in zip(self.parameters(), self.masks())
        )

    def penalty(self) -> float:
        if self.l2_penalty == 0:
            return 0.0
        return 0.5 * self.l2_penalty * sum(float(np.sum(l.weights ** 2)) for l in self.layers)

    def copy(self) -> "MlpNet":
        layers = [
            DenseLayer(l.weights.copy(), l.biases.copy(), l.activation,
                       None if l.mask is None else l.mask.copy())
            for l in self.layers
        ]
        return MlpNet(layers, self.dropout_rate, self.l2_penalty)

    def touch(self):
        """Mark parameters as modified so caches from earlier passes go stale."""
        self.version = next(_version_counter)


@dataclass
class ForwardCache:
    net_version: int
    inputs: np.ndarray
    pre_activations: list
    post_activations: list  # after activation and dropout, one per layer
    masks: list  # dropout masks (already scaled by 1/(1-p)) or None per layer


@dataclass
class OptimizerState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def init_net(layer_sizes, dropout_rate=0.0, l2=0.0, rng=None, masks=None) -> MlpNet:
    """He-normal initialised relu MLP with an identity head.

    ``masks`` optionally gives a connectivity mask per layer (None for dense).
    For masked layers the He scale uses the number of live inputs per unit.
    """
    sizes = list(layer_sizes)
    if len(sizes) < 2 or any(int(s) != s or s <= 0 for s in sizes):
        raise ConfigurationError(f"invalid layer sizes {layer_sizes!r}")
    if rng is None:
        rng = np.random.default_rng()
    if masks is None:
        masks = [None] * (len(sizes) - 1)
    if len(masks) != len(sizes) - 1:
        raise ConfigurationError("need one mask entry per layer")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        mask = masks[i]
        if mask is None:
            scale = np.sqrt(2.0 / fan_in)
        else:
            live = np.maximum(np.asarray(mask).sum(axis=1, keepdims=True), 1.0)
            scale = np.sqrt(2.0 / live)
        W = rng.standard_normal((fan_out, fan_in)) * scale
        act = "identity" if i == len(sizes) - 2 else "relu"
        layers.append(DenseLayer(W, np.zeros(fan_out), act, mask))
    return MlpNet(layers, float(dropout_rate), float(l2))


def forward(net: MlpNet, X, mode="eval", rng=None):
    """Run the net on X (N x n_in).

    train: fresh inverted-dropout mask per row, cache returned.
    mc_sample: one mask per hidden layer shared by every row, i.e. a single
    sampled sub-network evaluated on the whole batch; no cache.
    eval: no dropout, no cache.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.n_in:
        raise ShapeError(f"expected input with {net.n_in} columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("non-finite entries in network input")
    p = net.dropout_rate
    stochastic = mode != "eval" and p > 0
    if stochastic and rng is None:
        raise ConfigurationError(f"mode {mode!r} with dropout needs a random generator")

    pre, post, dmasks = [], [], []
    h = X
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        z = h @ layer.weights.T + layer.biases
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        m = None
        if stochastic and i < last:
            shape = (1, z.shape[1]) if mode == "mc_sample" else z.shape
            m = (rng.random(shape) >= p) / (1.0 - p)
            h = h * m
        pre.append(z)
        post.append(h)
        dmasks.append(m)
    cache = ForwardCache(net.version, X, pre, post, dmasks) if mode == "train" else None
    return h, cache


def backward(net: MlpNet, cache: Optional[ForwardCache], output_grad):
    """Gradients of (loss + l2 * |W|^2 / 2) given dloss/doutput.

    Returns (param_grads aligned with net.parameters(), input_grad).
    """
    if cache is None:
        raise StateError("backward needs the cache of a train-mode forward pass")
    if cache.net_version != net.version or len(cache.pre_activations) != len(net.layers):
        raise StateError("stale cache: parameters changed since the forward pass")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != cache.post_activations[-1].shape:
        raise ShapeError(
            f"output_grad shape {g.shape} != output shape {cache.post_activations[-1].shape}"
        )
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if cache.masks[i] is not None:
            g = g * cache.masks[i]
        if layer.activation == "relu":
            g = g * (cache.pre_activations[i] > 0)
        h_in = cache.inputs if i == 0 else cache.post_activations[i - 1]
        dW = g.T @ h_in
        if net.l2_penalty:
            dW = dW + net.l2_penalty * layer.weights
        if layer.mask is not None:
            dW = dW * layer.mask
        grads[2 * i] = dW
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weights
    return grads, g


def adam_update(params, grads, state: OptimizerState):
    """In-place bias-corrected Adam step over a list of arrays."""
    if len(grads) != len(params) or len(state.first_moment) != len(params):
        raise ShapeError("gradient/parameter/state lists differ in length")
    for p, g in zip(params, grads):
        if np.shape(g) != p.shape:
            raise ShapeError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


def adam_step(net: MlpNet, grads, state: OptimizerState):
    adam_update(net.parameters(), grads, state)
    net.touch()
    return net, state


def squared_loss(out, y):
    """Mean squared error over all entries and its gradient w.r.t. ``out``."""
    r = out - np.asarray(y, dtype=np.float64).reshape(out.shape)
    return float(np.mean(r ** 2)), 2.0 * r / r.size


def numeric_grad_check(loss_fn: Callable[[], float], params, analytic, h=1e-6, masks=None,
                       norm: str = "entry") -> float:
    """Max relative error between analytic grads and central differences.

    ``loss_fn`` is re-evaluated after perturbing each entry of ``params`` in
    place. Masked-out entries (mask == 0) are not parameters and are skipped.

    ``norm="entry"`` takes |a - n| / max(|a|, |n|) per entry; ``norm="tensor"``
    takes ||a - n|| / max(||a||, ||n||) per parameter array. The per-entry form
    is dominated by round-off for gradients near 1e-6 and below.
    """
    if norm not in ("entry", "tensor"):
        raise ValueError("norm must be 'entry' or 'tensor'")
    worst = 0.0
    if masks is None:
        masks = [None] * len(params)
    for p, a, mk in zip(params, analytic, masks):
        flat = p.reshape(-1)
        a_flat = np.asarray(a).reshape(-1)
        live = np.arange(flat.size) if mk is None else np.flatnonzero(np.asarray(mk).reshape(-1))
        if live.size == 0:
            continue
        num = np.empty(live.size)
        for i, k in enumerate(live):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_fn()
            flat[k] = orig - h
            down = loss_fn()
            flat[k] = orig
            num[i] = (up - down) / (2 * h)
        ana = a_flat[live]
        if norm == "entry":
            denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-8)
            err = float(np.max(np.abs(ana - num) / denom))
        else:
            denom = max(np.linalg.norm(ana), np.linalg.norm(num), 1e-12)
            err = float(np.linalg.norm(ana - num) / denom)
        worst = max(worst, err)
    return worst


def grad_check(net: MlpNet, X, y, loss=squared_loss, h=1e-6) -> float:
    """Finite-difference check of backward() for ``loss(out, y) -> (value, dvalue/dout)``.

    Dropout is switched off for the check (the function must be deterministic);
    the L2 term is included.
    """
    quiet = MlpNet(net.layers, 0.0, net.l2_penalty)

    def total():
        out, _ = forward(quiet, X, "eval")
        return loss(out, y)[0] + quiet.penalty()

    quiet.touch()
    out, cache = forward(quiet, X, "train")
    grads, _ = backward(quiet, cache, loss(out, y)[1])
    return numeric_grad_check(total, quiet.parameters(), grads, h, quiet.masks())
