"""Prototypes, query-to-prototype distances, modality-specific posteriors,
and absolute certainty."""

from __future__ import annotations

import numpy as np

SQ_EUCLIDEAN = "sq_euclidean"
EUCLIDEAN = "euclidean"


def compute_prototypes(features: np.ndarray, labels: np.ndarray, n_way: int) -> np.ndarray:
    """Per-class arithmetic mean of support features.

    features: (n_support, d), labels: (n_support,) in [0, n_way).
    Returns (n_way, d).
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    protos = np.empty((n_way, features.shape[1]))
    for k in range(n_way):
        mask = labels == k
        if not mask.any():
            raise ValueError(f"episode class {k} has no support samples")
        protos[k] = features[mask].mean(axis=0)
    return protos


def distances(queries: np.ndarray, prototypes: np.ndarray, mode: str = SQ_EUCLIDEAN) -> np.ndarray:
    """(M, N) matrix of query-to-prototype distances."""
    queries = np.asarray(queries, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    if queries.shape[1] != prototypes.shape[1]:
        raise ValueError(
            f"query dim {queries.shape[1]} != prototype dim {prototypes.shape[1]}"
        )
    diff = queries[:, None, :] - prototypes[None, :, :]
    sq = np.einsum("mnd,mnd->mn", diff, diff)
    if mode == SQ_EUCLIDEAN:
        return sq
    if mode == EUCLIDEAN:
        return np.sqrt(sq)
    raise ValueError(f"unknown distance mode {mode!r}")


def posterior(dist: np.ndarray) -> np.ndarray:
    """Softmax of negated distances, max-subtracted for overflow safety.

    Accepts a single row (N,) or a matrix (M, N); rows sum to 1.
    """
    dist = np.asarray(dist, dtype=np.float64)
    z = -dist
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def certainty(post: np.ndarray) -> np.ndarray:
    """Max posterior probability per row; scalar for a single row."""
    post = np.asarray(post, dtype=np.float64)
    return post.max(axis=-1)
