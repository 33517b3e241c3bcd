"""Synthetic multi-domain datasets, CSV interchange, and stratified splits.

Domains are realized as geometric transforms of a shared base distribution.
Labels are assigned on the base points *before* the transform, so the
ground-truth labeling function is identical across domains by construction,
and every domain carries equal class counts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .seeding import derive_rng

__all__ = [
    "LabeledExample",
    "Dataset",
    "ShiftSpec",
    "gen_two_moons",
    "gen_gaussian_classes",
    "save_csv",
    "load_csv",
    "split",
    "subsample_fraction",
]


class LabeledExample(NamedTuple):
    x: np.ndarray
    y: int
    d: int


@dataclass
class Dataset:
    """Feature matrix with per-row class and domain ids."""

    x: np.ndarray  # (n, dim) float64
    y: np.ndarray  # (n,) int class ids
    d: np.ndarray  # (n,) int domain ids
    num_classes: int
    domain_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.d = np.asarray(self.d, dtype=np.int64)
        if self.x.ndim != 2:
            raise ValueError(f"expected 2-D features, got shape {self.x.shape}")
        if self.x.shape[0] != len(self.y) or len(self.y) != len(self.d):
            raise ValueError("feature/label/domain lengths disagree")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("non-finite feature values")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("class id out of range")
        if not self.domain_names:
            n_dom = int(self.d.max()) + 1 if len(self.d) else 0
            self.domain_names = [f"d{i}" for i in range(n_dom)]
        if len(self.d) and self.d.max() >= len(self.domain_names):
            raise ValueError("domain id out of range")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def example(self, i: int) -> LabeledExample:
        return LabeledExample(self.x[i], int(self.y[i]), int(self.d[i]))

    def select(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.x[mask], self.y[mask], self.d[mask],
                       self.num_classes, list(self.domain_names))

    def domain_subset(self, domain_ids) -> "Dataset":
        mask = np.isin(self.d, np.asarray(list(domain_ids)))
        return self.select(mask)


@dataclass
class ShiftSpec:
    """Concrete domain shift: a rigid/affine transform plus a sampling seed."""

    kind: str = "none"  # none | rotation | affine
    angle_deg: float = 0.0
    translation: np.ndarray | None = None
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "rotation", "affine"):
            raise ValueError(f"unknown shift kind {self.kind!r}")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return x
        out = x @ _rotation_matrix(self.angle_deg, x.shape[1]).T
        if self.kind == "affine":
            out = self.scale * out
            if self.translation is not None:
                t = np.asarray(self.translation, dtype=np.float64)
                if t.shape != (x.shape[1],):
                    raise ValueError("translation length must equal data dim")
                out = out + t
        return out


def rotation_domains(angles_deg, base_seed: int = 0) -> list[ShiftSpec]:
    return [ShiftSpec("rotation", angle_deg=a, seed=base_seed + i)
            for i, a in enumerate(angles_deg)]


def _rotation_matrix(angle_deg: float, dim: int) -> np.ndarray:
    """Rotation in the first two coordinates, identity elsewhere."""
    theta = np.deg2rad(angle_deg)
    r = np.eye(dim)
    c, s = np.cos(theta), np.sin(theta)
    r[0, 0], r[0, 1], r[1, 0], r[1, 1] = c, -s, s, c
    return r


def _per_class_count(n_per_domain: int, num_classes: int) -> int:
    n_class, rem = divmod(n_per_domain, num_classes)
    if rem:
        warnings.warn(
            f"n_per_domain={n_per_domain} not divisible by {num_classes} classes; "
            f"rounding down to {n_class} per class"
        )
    return n_class


def _base_moons(n_per_class: int, noise_sd: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two interleaving half circles centered at the origin, one per class."""
    t0 = rng.uniform(0.0, np.pi, size=n_per_class)
    t1 = rng.uniform(0.0, np.pi, size=n_per_class)
    upper = np.column_stack([np.cos(t0) - 0.5, np.sin(t0) - 0.25])
    lower = np.column_stack([0.5 - np.cos(t1), 0.25 - np.sin(t1)])
    pts = np.vstack([upper, lower])
    if noise_sd > 0.0:
        pts = pts + noise_sd * rng.normal(size=pts.shape)
    labels = np.repeat([0, 1], n_per_class)
    return pts, labels


def gen_two_moons(
    domains: list[ShiftSpec], n_per_domain: int, noise_sd: float, seed: int
) -> Dataset:
    """Per-domain two-moons sample; labels ride the base points through the shift."""
    if n_per_domain < 0 or noise_sd < 0.0:
        raise ValueError("n_per_domain and noise_sd must be non-negative")
    n_class = _per_class_count(n_per_domain, 2)
    xs, ys, ds = [], [], []
    for dom_id, spec in enumerate(domains):
        rng = derive_rng(seed, "two-moons", spec.seed)
        base, labels = _base_moons(n_class, noise_sd, rng)
        xs.append(spec.apply(base))
        ys.append(labels)
        ds.append(np.full(len(labels), dom_id))
    x = np.vstack(xs) if xs else np.zeros((0, 2))
    y = np.concatenate(ys) if ys else np.zeros(0, int)
    d = np.concatenate(ds) if ds else np.zeros(0, int)
    return Dataset(x, y, d, num_classes=2,
                   domain_names=[f"d{i}" for i in range(len(domains))])


def gen_gaussian_classes(
    domains: list[ShiftSpec],
    n_per_domain: int,
    num_classes: int,
    dim: int,
    seed: int,
    noise_sd: float = 0.2,
) -> Dataset:
    """Gaussian blobs with class means on a unit circle in the first two coords."""
    if num_classes < 2 or dim < 2:
        raise ValueError("need num_classes >= 2 and dim >= 2")
    n_class = _per_class_count(n_per_domain, num_classes)
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    means = np.zeros((num_classes, dim))
    means[:, 0] = np.cos(angles)
    means[:, 1] = np.sin(angles)
    xs, ys, ds = [], [], []
    for dom_id, spec in enumerate(domains):
        rng = derive_rng(seed, "gauss-classes", spec.seed)
        base = np.repeat(means, n_class, axis=0) + noise_sd * rng.normal(
            size=(num_classes * n_class, dim)
        )
        labels = np.repeat(np.arange(num_classes), n_class)
        xs.append(spec.apply(base))
        ys.append(labels)
        ds.append(np.full(len(labels), dom_id))
    x = np.vstack(xs) if xs else np.zeros((0, dim))
    y = np.concatenate(ys) if ys else np.zeros(0, int)
    d = np.concatenate(ds) if ds else np.zeros(0, int)
    return Dataset(x, y, d, num_classes=num_classes,
                   domain_names=[f"d{i}" for i in range(len(domains))])


def save_csv(dataset: Dataset, path) -> None:
    """Write `domain,label,x0,...` rows; floats use shortest exact decimals."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cols = ",".join(f"x{i}" for i in range(dataset.dim))
        fh.write(f"domain,label,{cols}\n")
        for i in range(len(dataset)):
            vals = ",".join(repr(float(v)) for v in dataset.x[i])
            fh.write(f"{int(dataset.d[i])},{int(dataset.y[i])},{vals}\n")


class CsvFormatError(ValueError):
    pass


def load_csv(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CsvFormatError(f"{path}: empty file, expected a header row")
    header = lines[0].split(",")
    if header[:2] != ["domain", "label"] or any(
        h != f"x{i}" for i, h in enumerate(header[2:])
    ):
        raise CsvFormatError(f"{path}: line 1: unknown header {lines[0]!r}")
    dim = len(header) - 2
    if dim < 1:
        raise CsvFormatError(f"{path}: line 1: header has no feature columns")
    xs, ys, ds = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise CsvFormatError(
                f"{path}: line {lineno}: expected {len(header)} fields, got {len(parts)}"
            )
        try:
            ds.append(int(parts[0]))
            ys.append(int(parts[1]))
            xs.append([float(v) for v in parts[2:]])
        except ValueError as exc:
            raise CsvFormatError(f"{path}: line {lineno}: {exc}") from None
    x = np.asarray(xs, dtype=np.float64) if xs else np.zeros((0, dim))
    y = np.asarray(ys, dtype=np.int64)
    d = np.asarray(ds, dtype=np.int64)
    num_classes = int(y.max()) + 1 if len(y) else 2
    return Dataset(x, y, d, num_classes=num_classes)


def split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified-by-(domain, class) split into (fraction, 1-fraction) parts."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    take = np.zeros(len(dataset), dtype=bool)
    for dom in np.unique(dataset.d):
        for cls in np.unique(dataset.y):
            idx = np.flatnonzero((dataset.d == dom) & (dataset.y == cls))
            if not len(idx):
                continue
            k = int(np.floor(fraction * len(idx) + 0.5))
            rng = derive_rng(seed, "split", int(dom), int(cls))
            chosen = rng.permutation(idx)[:k]
            take[chosen] = True
    return dataset.select(take), dataset.select(~take)


def subsample_fraction(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    return split(dataset, fraction, seed)[0]
