"""Soft encoding of descriptors against a codebook, max-pooled to features.

A descriptor set X' (d, l) is encoded as S = D^T X' (k, l); each column is
split into rectified positive and negative channels and the 2k channels are
max-pooled over the l descriptors into one feature vector.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .codebook import Codebook
from .imgproc import GrayImage, sample_patches, standardize

__all__ = [
    "encode",
    "soft_encode_pool",
    "extract_features",
    "extract_features_batch",
    "image_rng",
    "save_features_csv",
    "load_features_csv",
]


def encode(codebook: Codebook, descriptors: np.ndarray) -> np.ndarray:
    """Encoding matrix S = D^T X', shape (k, l)."""
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != codebook.dim:
        raise ValueError(f"dimension mismatch: descriptors {x.shape} vs codebook dim {codebook.dim}")
    return codebook.codes.T @ x


def soft_encode_pool(encoding: np.ndarray) -> np.ndarray:
    """Row-wise maxima of the rectified +/- split of an encoding matrix.

    beta[i] = max_j max(s_ij, 0), beta[k+i] = max_j max(-s_ij, 0); length 2k.
    """
    s = np.asarray(encoding, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] < 1:
        raise ValueError("encoding matrix must have at least one descriptor column")
    row_max = s.max(axis=1)
    row_min = s.min(axis=1)
    return np.concatenate([np.maximum(row_max, 0.0), np.maximum(-row_min, 0.0)])


def image_rng(master_seed: int, image_index: int) -> np.random.Generator:
    """Per-image generator derived from a master seed and the image's position."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, image_index]))


def extract_features(
    codebook: Codebook, img: GrayImage, count: int, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample, standardize and soft-encode patches of one image into beta (2k,)."""
    descriptors = standardize(sample_patches(img, count, size, rng))
    return soft_encode_pool(encode(codebook, descriptors))


def _extract_one(args):
    codebook, path, count, size, master_seed, index = args
    from .imgproc import load_grayscale

    img = load_grayscale(path)
    return extract_features(codebook, img, count, size, image_rng(master_seed, index))


def extract_features_batch(
    codebook: Codebook,
    paths: list,
    count: int,
    size: int,
    master_seed: int,
    jobs: int = 1,
) -> np.ndarray:
    """Feature matrix (n, 2k) for a list of image paths, order preserved.

    Each image gets its own generator seeded by (master_seed, position), so
    the result is independent of scheduling.
    """
    tasks = [(codebook, p, count, size, master_seed, i) for i, p in enumerate(paths)]
    if jobs > 1 and len(paths) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_extract_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        rows = [_extract_one(t) for t in tasks]
    return np.vstack(rows) if rows else np.empty((0, 2 * codebook.size))


def save_features_csv(path, image_ids: list[str], features: np.ndarray) -> None:
    """Write features as CSV with header image_id,f0..f{2k-1}; floats round-trip."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != len(image_ids):
        raise ValueError("features must be (n, 2k) matching image_ids")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id"] + [f"f{i}" for i in range(features.shape[1])])
        for image_id, row in zip(image_ids, features):
            writer.writerow([image_id] + [repr(v) for v in row.tolist()])


def load_features_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "image_id":
            raise ValueError(f"not a feature CSV: {path}")
        ids, rows = [], []
        for rec in reader:
            ids.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    n_cols = len(header) - 1
    feats = np.array(rows, dtype=np.float64).reshape(len(ids), n_cols)
    return ids, feats
