"""Dense float64 multilayer perceptrons with exact reverse-mode gradients.

Everything downstream (metric training, generative samplers, latent-space
projection, diagnostics discriminators) computes on the primitives here:
plain 2-D float64 numpy arrays, explicit forward/backward passes for MLP
chains, SGD/Adam steps, and central-difference gradient verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Layer",
    "Mlp",
    "LayerGrads",
    "init_mlp",
    "forward",
    "forward_cached",
    "backward",
    "input_gradient",
    "zeros_like_grads",
    "SgdState",
    "AdamState",
    "optim_step",
    "numeric_gradients",
    "gradient_check",
    "flatten_grads",
]

ACTIVATIONS = ("identity", "relu", "leaky_relu")

# Gradients of one layer: (dW, db), shapes mirroring Layer.w / Layer.b.
LayerGrads = list[tuple[np.ndarray, np.ndarray]]


@dataclass
class Layer:
    """One affine + activation block. ``w`` is (in_dim, out_dim)."""

    w: np.ndarray
    b: np.ndarray
    act: str = "identity"
    slope: float = 0.2  # leaky_relu only; must stay in (0, 1)

    def __post_init__(self) -> None:
        if self.act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.act!r}")
        if self.act == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky_relu slope must be in (0,1), got {self.slope}")


@dataclass
class Mlp:
    layers: list[Layer] = field(default_factory=list)

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[1]

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.w.copy(), l.b.copy(), l.act, l.slope) for l in self.layers])

    def param_arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for l in self.layers:
            out.append(l.w)
            out.append(l.b)
        return out


def init_mlp(
    dims: Sequence[int],
    rng: np.random.Generator,
    hidden_act: str = "leaky_relu",
    out_act: str = "identity",
    slope: float = 0.2,
) -> Mlp:
    """Glorot-uniform MLP: weights in +/- sqrt(6/(fan_in+fan_out)), zero bias."""
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    layers = []
    last = len(dims) - 2
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        layers.append(Layer(w, b, out_act if i == last else hidden_act, slope))
    return Mlp(layers)


def _check_dims(mlp: Mlp, x: np.ndarray) -> None:
    if x.ndim != 2:
        raise ValueError(f"expected 2-D input, got shape {x.shape}")
    if x.shape[1] != mlp.in_dim:
        raise ValueError(f"input dim {x.shape[1]} != first layer in-dim {mlp.in_dim}")
    prev = mlp.layers[0].w.shape[1]
    for l in mlp.layers[1:]:
        if l.w.shape[0] != prev:
            raise ValueError("layer dimensions do not chain")
        prev = l.w.shape[1]


def _activate(pre: np.ndarray, layer: Layer) -> np.ndarray:
    if layer.act == "relu":
        return np.maximum(pre, 0.0)
    if layer.act == "leaky_relu":
        return np.where(pre > 0.0, pre, layer.slope * pre)
    return pre


def forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Activations of the final layer for a (batch, in_dim) input."""
    _check_dims(mlp, x)
    h = x
    for layer in mlp.layers:
        h = _activate(h @ layer.w + layer.b, layer)
    return h


def forward_cached(mlp: Mlp, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass that also returns per-layer pre-activations for backward."""
    _check_dims(mlp, x)
    pres: list[np.ndarray] = []
    h = x
    for layer in mlp.layers:
        pre = h @ layer.w + layer.b
        pres.append(pre)
        h = _activate(pre, layer)
    return h, pres


def _act_grad(pre: np.ndarray, layer: Layer) -> np.ndarray:
    if layer.act == "relu":
        return (pre > 0.0).astype(np.float64)
    if layer.act == "leaky_relu":
        return np.where(pre > 0.0, 1.0, layer.slope)
    return np.ones_like(pre)


def backward(
    mlp: Mlp, x: np.ndarray, upstream: np.ndarray
) -> tuple[LayerGrads, np.ndarray]:
    """Exact reverse-mode gradients contracted with ``upstream``.

    ``upstream`` has the output's shape (batch, out_dim). Returns per-layer
    (dW, db) plus the gradient w.r.t. the input.
    """
    out, pres = forward_cached(mlp, x)
    if upstream.shape != out.shape:
        raise ValueError(f"upstream shape {upstream.shape} != output shape {out.shape}")
    # Re-derive layer inputs from cached pre-activations.
    inputs = [x]
    for pre, layer in zip(pres[:-1], mlp.layers[:-1]):
        inputs.append(_activate(pre, layer))
    grads: LayerGrads = [None] * len(mlp.layers)  # type: ignore[list-item]
    delta = upstream
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        delta = delta * _act_grad(pres[i], layer)
        grads[i] = (inputs[i].T @ delta, delta.sum(axis=0))
        delta = delta @ layer.w.T
    return grads, delta


def input_gradient(mlp: Mlp, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the input only (parameter grads discarded)."""
    return backward(mlp, x, upstream)[1]


def zeros_like_grads(mlp: Mlp) -> LayerGrads:
    return [(np.zeros_like(l.w), np.zeros_like(l.b)) for l in mlp.layers]


@dataclass
class SgdState:
    lr: float
    momentum: float = 0.0
    velocity: LayerGrads | None = None

    def __post_init__(self) -> None:
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: LayerGrads | None = None
    v: LayerGrads | None = None

    def __post_init__(self) -> None:
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")


def _check_finite_grads(grads: LayerGrads) -> None:
    for dw, db in grads:
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise FloatingPointError("non-finite gradient")


def optim_step(state: SgdState | AdamState, mlp: Mlp, grads: LayerGrads) -> None:
    """Advance ``mlp`` in place by one optimizer step; accumulators advance too."""
    _check_finite_grads(grads)
    if isinstance(state, SgdState):
        if state.momentum == 0.0:
            for layer, (dw, db) in zip(mlp.layers, grads):
                layer.w -= state.lr * dw
                layer.b -= state.lr * db
            return
        if state.velocity is None:
            state.velocity = zeros_like_grads(mlp)
        for layer, (dw, db), (vw, vb) in zip(mlp.layers, grads, state.velocity):
            vw *= state.momentum
            vw += dw
            vb *= state.momentum
            vb += db
            layer.w -= state.lr * vw
            layer.b -= state.lr * vb
        return
    if isinstance(state, AdamState):
        if state.m is None:
            state.m = zeros_like_grads(mlp)
            state.v = zeros_like_grads(mlp)
        state.step += 1
        t = state.step
        c1 = 1.0 - state.beta1**t
        c2 = 1.0 - state.beta2**t
        for layer, (dw, db), (mw, mb), (vw, vb) in zip(
            mlp.layers, grads, state.m, state.v
        ):
            for p, g, m, v in ((layer.w, dw, mw, vw), (layer.b, db, mb, vb)):
                m *= state.beta1
                m += (1.0 - state.beta1) * g
                v *= state.beta2
                v += (1.0 - state.beta2) * g * g
                p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        return
    raise TypeError(f"unknown optimizer state {type(state)!r}")


def numeric_gradients(
    loss: Callable[[], float], arrays: list[np.ndarray], h: float = 1e-6
) -> list[np.ndarray]:
    """Central-difference gradients of ``loss()`` w.r.t. every array entry.

    Entries are perturbed in place and restored; ``loss`` must be a pure
    function of the current array contents.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss()
            flat[i] = orig - h
            lm = loss()
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise FloatingPointError("non-finite loss during finite differencing")
            gflat[i] = (lp - lm) / (2.0 * h)
        grads.append(g)
    return grads


def gradient_check(
    loss_and_grads: Callable[[], tuple[float, list[np.ndarray]]],
    arrays: list[np.ndarray],
    h: float = 1e-6,
) -> float:
    """Max over entries of |analytic - numeric| / max(1, |numeric|).

    ``loss_and_grads`` evaluates the loss and its analytic gradients w.r.t.
    ``arrays`` (same order, same shapes) at the arrays' current values.
    """
    _, analytic = loss_and_grads()
    numeric = numeric_gradients(lambda: loss_and_grads()[0], arrays, h=h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(1.0, np.abs(n))
        worst = max(worst, float(np.max(np.abs(a - n) / denom))) if a.size else worst
    return worst


def flatten_grads(grads: LayerGrads) -> list[np.ndarray]:
    """[(dW, db), ...] -> flat [dW, db, dW, db, ...] matching param_arrays()."""
    out: list[np.ndarray] = []
    for dw, db in grads:
        out.append(dw)
        out.append(db)
    return out
