"""Deterministic label embeddings shared by the sensor model and grounding."""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_DIM = 16


def _label_seed(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def label_embedding(label: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Unit vector derived from the label text alone; stable across runs."""
    rng = np.random.Generator(np.random.PCG64(_label_seed(label)))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"embedding dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
