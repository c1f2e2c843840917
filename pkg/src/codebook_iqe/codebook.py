"""Codebook construction: k-means learned codes, natural patches, i.i.d. noise.

All codebook kinds store unit-L2-norm columns so that dot-product encodings
are comparable across kinds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imgproc import GrayImage, sample_patches, standardize

__all__ = [
    "KINDS",
    "Codebook",
    "ZcaTransform",
    "fit_zca",
    "apply_zca",
    "kmeans_cluster",
    "kmeans",
    "patch_codebook",
    "noise_samples",
    "noise_codebook",
    "save_codebook",
    "load_codebook",
]

KINDS = ("learned", "patches", "normal", "laplace", "uniform")

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class Codebook:
    """Matrix of unit-norm codes (columns) plus provenance."""

    codes: np.ndarray  # (d, k) float64, unit-norm columns
    kind: str
    seed: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown codebook kind {self.kind!r}")
        c = self.codes
        if c.ndim != 2 or c.size == 0:
            raise ValueError("codes must be a non-empty (d, k) array")
        if not np.all(np.isfinite(c)):
            raise ValueError("codes contain non-finite values")
        norms = np.linalg.norm(c, axis=0)
        if np.any(np.abs(norms - 1.0) > _NORM_TOL):
            raise ValueError("codebook columns must have unit L2 norm")

    @property
    def dim(self) -> int:
        return self.codes.shape[0]

    @property
    def size(self) -> int:
        return self.codes.shape[1]


@dataclass(frozen=True)
class ZcaTransform:
    """Whitening transform E (Lambda + eps I)^(-1/2) E^T around a data mean."""

    mean: np.ndarray  # (d,)
    matrix: np.ndarray  # (d, d), symmetric
    epsilon: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_zca(data: np.ndarray, epsilon: float = 1e-6) -> ZcaTransform:
    """Fit ZCA whitening on a (d, l) descriptor set.

    Uses the sample covariance (1/(l-1)) of mean-centered columns; eigenvalues
    are regularized by `epsilon` before the inverse square root.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("need a (d, l) array with at least 2 columns")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite descriptor data")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    cov = centered @ centered.T / (x.shape[1] - 1)
    evals, evecs = np.linalg.eigh(cov)
    scale = 1.0 / np.sqrt(np.maximum(evals, 0.0) + epsilon)
    matrix = (evecs * scale) @ evecs.T
    matrix = 0.5 * (matrix + matrix.T)  # exact symmetry despite rounding
    return ZcaTransform(mean=mean, matrix=matrix, epsilon=float(epsilon))


def apply_zca(t: ZcaTransform, data: np.ndarray) -> np.ndarray:
    """Center columns by the fitted mean and apply the whitening matrix."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != t.dim:
        raise ValueError(f"dimension mismatch: data {x.shape} vs transform dim {t.dim}")
    return t.matrix @ (x - t.mean[:, None])


def _kpp_seed(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ initial centroids from the (d, l) data columns."""
    d, l = data.shape
    centroids = np.empty((d, k), dtype=np.float64)
    first = int(rng.integers(0, l))
    centroids[:, 0] = data[:, first]
    dist2 = np.sum((data - centroids[:, [0]]) ** 2, axis=0)
    for j in range(1, k):
        total = dist2.sum()
        if total > 0:
            idx = int(rng.choice(l, p=dist2 / total))
        else:
            idx = int(rng.integers(0, l))  # duplicates everywhere; fall back to uniform
        centroids[:, j] = data[:, idx]
        dist2 = np.minimum(dist2, np.sum((data - centroids[:, [j]]) ** 2, axis=0))
    return centroids


def _sq_dists(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(k, l) squared distances between centroids and data columns."""
    x2 = np.sum(data**2, axis=0)
    c2 = np.sum(centroids**2, axis=0)
    d2 = c2[:, None] - 2.0 * (centroids.T @ data) + x2[None, :]
    return np.maximum(d2, 0.0)


def kmeans_cluster(
    data: np.ndarray, k: int, max_iters: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns (centroids (d, k), labels (l,), per-iteration objectives). Empty
    clusters are re-seeded to the point farthest from its assigned centroid.
    Stops when no assignment changes or after `max_iters`.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.size == 0:
        raise ValueError("need a non-empty (d, l) array")
    l = x.shape[1]
    if k <= 0 or k > l:
        raise ValueError(f"k must be in [1, {l}], got {k}")
    if max_iters <= 0:
        raise ValueError("max_iters must be positive")

    centroids = _kpp_seed(x, k, rng)
    labels = np.full(l, -1, dtype=np.int64)
    objectives: list[float] = []
    for _ in range(max_iters):
        d2 = _sq_dists(x, centroids)
        new_labels = np.argmin(d2, axis=0)
        point_cost = d2[new_labels, np.arange(l)]
        # re-seed empty clusters with the currently worst-fit points; only
        # steal from clusters that keep at least one member
        counts = np.bincount(new_labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            cand = np.where(counts[new_labels] >= 2, point_cost, -1.0)
            far = int(np.argmax(cand))
            if cand[far] < 0.0:
                break
            counts[new_labels[far]] -= 1
            new_labels[far] = empty
            counts[empty] = 1
            centroids[:, empty] = x[:, far]
            point_cost[far] = 0.0
        objectives.append(float(point_cost.sum()))
        converged = bool(np.array_equal(new_labels, labels))
        labels = new_labels
        for j in range(k):
            centroids[:, j] = x[:, labels == j].mean(axis=1)
        if converged:
            break
    return centroids, labels, objectives


def _unit_columns(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=0)
    if np.any(norms <= 0):
        raise ValueError("cannot normalize a zero column to unit length")
    return m / norms


def kmeans(data: np.ndarray, k: int, max_iters: int = 100, seed: int = 0) -> Codebook:
    """Learn a codebook of k unit-norm centroids from whitened descriptors."""
    rng = np.random.default_rng(seed)
    centroids, _, _ = kmeans_cluster(data, k, max_iters, rng)
    return Codebook(codes=_unit_columns(centroids), kind="learned", seed=seed)


def patch_codebook(images: list[GrayImage], k: int, size: int, seed: int = 0) -> Codebook:
    """Codebook of k standardized, unit-normalized natural-image patches.

    Patches are sampled uniformly across images (image first, then position);
    constant patches are rejected and resampled. No whitening is applied.
    """
    if not images:
        raise ValueError("need at least one image")
    if k <= 0:
        raise ValueError("k must be positive")
    rng = np.random.default_rng(seed)
    codes = np.empty((size * size, k), dtype=np.float64)
    filled = 0
    attempts = 0
    while filled < k:
        attempts += 1
        if attempts > 100 * k + 100:
            raise ValueError("could not sample enough non-constant patches")
        img = images[int(rng.integers(0, len(images)))]
        patch = sample_patches(img, 1, size, rng)
        if np.ptp(patch) == 0.0:
            continue
        codes[:, filled] = standardize(patch)[:, 0]
        filled += 1
    return Codebook(codes=_unit_columns(codes), kind="patches", seed=seed)


def noise_samples(kind: str, d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """(d, k) matrix of i.i.d. draws from Normal(0,1), Laplace(0,1) or Uniform(0,1)."""
    if kind == "normal":
        return rng.standard_normal((d, k))
    if kind == "laplace":
        return rng.laplace(0.0, 1.0, (d, k))
    if kind == "uniform":
        return rng.uniform(0.0, 1.0, (d, k))
    raise ValueError(f"unknown noise kind {kind!r}")


def noise_codebook(kind: str, d: int, k: int, seed: int = 0) -> Codebook:
    """Random codebook with i.i.d. entries, columns normalized to unit length."""
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    rng = np.random.default_rng(seed)
    return Codebook(codes=_unit_columns(noise_samples(kind, d, k, rng)), kind=kind, seed=seed)


# binary codebook file: magic, u32 d, u32 k, u8 kind tag, u64 seed, d*k f64 column-major
_MAGIC = b"CBK1"
_KIND_TAG = {kind: i for i, kind in enumerate(KINDS)}


def save_codebook(cb: Codebook, path) -> None:
    header = _MAGIC + struct.pack("<IIBQ", cb.dim, cb.size, _KIND_TAG[cb.kind], cb.seed)
    Path(path).write_bytes(header + cb.codes.astype("<f8").tobytes(order="F"))


def load_codebook(path) -> Codebook:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"not a codebook file: {path}")
    d, k, tag, seed = struct.unpack("<IIBQ", raw[4:21])
    if tag >= len(KINDS):
        raise ValueError(f"unknown codebook kind tag {tag}")
    expected = 21 + 8 * d * k
    if len(raw) != expected:
        raise ValueError(f"codebook file truncated: {len(raw)} bytes, expected {expected}")
    codes = np.frombuffer(raw, dtype="<f8", offset=21).reshape((d, k), order="F")
    return Codebook(codes=np.ascontiguousarray(codes), kind=KINDS[tag], seed=seed)
