"""Label-clustered feature space learned from pairwise cosine similarities.

The extractor maps inputs to a feature space where same-class pairs score
cosine similarity near 1 and different-class pairs near -1, irrespective of
their domain. Scores are temperature-scaled into sigmoid logits and trained
with binary cross entropy over all ordered pairs of a minibatch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .datasets import Dataset
from .seeding import derive_rng

__all__ = [
    "MetricModel",
    "FeatureBank",
    "MetricTrainConfig",
    "cosine_sim",
    "pair_prob",
    "pairwise_loss",
    "pairwise_loss_grads",
    "train_metric",
    "embed",
    "embed_features",
]

PROB_CLAMP = 1e-12


@dataclass
class MetricModel:
    """Feature extractor plus the temperature used for pair logits."""

    net: nn.Mlp
    tau: float = 0.1
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")

    @property
    def feature_dim(self) -> int:
        return self.net.out_dim


@dataclass
class FeatureBank:
    """Extracted source features with their class and domain ids."""

    features: np.ndarray  # (n, feature_dim)
    labels: np.ndarray  # (n,)
    domains: np.ndarray  # (n,)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.domains = np.asarray(self.domains, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise FloatingPointError("cosine similarity of zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def pair_prob(s: float, tau: float) -> float:
    """Similarity score in (0,1): sigmoid of the temperature-scaled cosine."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    x = s / tau
    if x >= 0.0:
        return float(1.0 / (1.0 + np.exp(-x)))
    e = np.exp(x)
    return float(e / (1.0 + e))


def _normalize_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms < 1e-12):
        idx = int(np.argmin(norms))
        raise FloatingPointError(f"zero-norm feature row at example {idx}")
    return z / norms[:, None], norms


def _pair_targets(y: np.ndarray) -> np.ndarray:
    return (y[:, None] == y[None, :]).astype(np.float64)


def _bce_matrix(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))


def _pair_loss_on_features(
    z: np.ndarray, y: np.ndarray, tau: float
) -> tuple[float, np.ndarray]:
    """Mean pair BCE over all n^2 ordered pairs and its gradient w.r.t. z."""
    n = len(y)
    zh, norms = _normalize_rows(z)
    s = np.clip(zh @ zh.T, -1.0, 1.0)
    p = 1.0 / (1.0 + np.exp(-s / tau))
    t = _pair_targets(y)
    loss = float(np.mean(_bce_matrix(p, t)))
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    g_s = np.where(inside, p - t, 0.0) / (tau * n * n)
    g_zh = (g_s + g_s.T) @ zh
    # Chain through row normalization: project out the radial component.
    radial = np.sum(g_zh * zh, axis=1, keepdims=True)
    g_z = (g_zh - radial * zh) / norms[:, None]
    return loss, g_z


def pairwise_loss(model: MetricModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean BCE over all ordered feature pairs of the batch, self-pairs included."""
    if len(y) == 0:
        raise ValueError("empty batch")
    z = nn.forward(model.net, x)
    return _pair_loss_on_features(z, y, model.tau)[0]


def pairwise_loss_grads(
    model: MetricModel, x: np.ndarray, y: np.ndarray
) -> tuple[float, nn.LayerGrads]:
    if len(y) == 0:
        raise ValueError("empty batch")
    z = nn.forward(model.net, x)
    loss, g_z = _pair_loss_on_features(z, y, model.tau)
    grads, _ = nn.backward(model.net, x, g_z)
    return loss, grads


@dataclass
class MetricTrainConfig:
    feature_dim: int = 16
    hidden_width: int = 64
    hidden_depth: int = 3
    tau: float = 0.1
    lr: float = 0.001
    epochs: int = 200
    batch_size: int = 128
    seed: int = 0
    normalize: bool = True


def init_metric(config: MetricTrainConfig, input_dim: int) -> MetricModel:
    rng = derive_rng(config.seed, "metric-init")
    dims = [input_dim] + [config.hidden_width] * config.hidden_depth + [config.feature_dim]
    net = nn.init_mlp(dims, rng, hidden_act="leaky_relu", out_act="identity")
    return MetricModel(net, tau=config.tau, normalize=config.normalize)


def train_metric(
    sources: Dataset, config: MetricTrainConfig
) -> tuple[MetricModel, list[float]]:
    """Train the extractor on pooled source domains; returns per-epoch losses."""
    if len(np.unique(sources.y)) < 2:
        raise ValueError("metric training needs at least two classes")
    model = init_metric(config, sources.dim)
    state = nn.SgdState(lr=config.lr)
    batches = derive_rng(config.seed, "metric-batches")
    history: list[float] = []
    n = len(sources)
    for _ in range(config.epochs):
        perm = batches.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = pairwise_loss_grads(model, sources.x[idx], sources.y[idx])
            nn.optim_step(state, model.net, grads)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return model, history


def embed_features(model: MetricModel, x: np.ndarray) -> np.ndarray:
    """Extractor outputs for raw inputs, row-normalized when the model says so."""
    z = nn.forward(model.net, x)
    if model.normalize:
        z, _ = _normalize_rows(z)
    return z


def embed(model: MetricModel, dataset: Dataset) -> FeatureBank:
    return FeatureBank(embed_features(model, dataset.x), dataset.y, dataset.d)
