"""Active sample inference: per-sample, per-modality reliability scores and
the partition of queries into RGB-dominant and flow-dominant groups."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VFE = "vfe"
ENTROPY = "entropy"

RGB_DOMINANT = "r"
FLOW_DOMINANT = "f"


def entropy(post: np.ndarray) -> np.ndarray:
    """Shannon entropy (natural log) per posterior row."""
    post = np.asarray(post, dtype=np.float64)
    logp = np.log(np.clip(post, np.finfo(np.float64).tiny, None))
    return -(post * logp).sum(axis=-1)


def free_energy(dist: np.ndarray, post: np.ndarray, mode: str = VFE) -> np.ndarray:
    """Reliability score per row; lower means more reliable.

    vfe: expected energy minus posterior entropy, sum_k p(k) psi(k) - H(p).
    For a Boltzmann posterior this equals -ln sum_k exp(-psi(k)).
    entropy: H(p) alone, bounded by [0, ln N] and insensitive to a uniform
    distance offset.
    """
    dist = np.asarray(dist, dtype=np.float64)
    post = np.asarray(post, dtype=np.float64)
    if dist.shape != post.shape:
        raise ValueError(f"distance shape {dist.shape} != posterior shape {post.shape}")
    h = entropy(post)
    if mode == ENTROPY:
        return h
    if mode == VFE:
        return (post * dist).sum(axis=-1) - h
    raise ValueError(f"unknown reliability mode {mode!r}")


@dataclass(frozen=True)
class ReliabilityScores:
    f_r: np.ndarray  # (M,)
    f_f: np.ndarray  # (M,)
    mode: str

    def __post_init__(self):
        if self.f_r.shape != self.f_f.shape:
            raise ValueError("modality score shapes differ")
        if not (np.all(np.isfinite(self.f_r)) and np.all(np.isfinite(self.f_f))):
            raise ValueError("non-finite reliability score")


@dataclass(frozen=True)
class GroupAssignment:
    tags: tuple[str, ...]  # per query: "r" or "f"

    @property
    def rgb_indices(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.tags) == RGB_DOMINANT)

    @property
    def flow_indices(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.tags) == FLOW_DOMINANT)


def score_reliability(dist_r, post_r, dist_f, post_f, mode: str = VFE) -> ReliabilityScores:
    return ReliabilityScores(
        f_r=free_energy(dist_r, post_r, mode),
        f_f=free_energy(dist_f, post_f, mode),
        mode=mode,
    )


def assign_groups(scores: ReliabilityScores, margin: float = 0.0) -> GroupAssignment:
    """Lower free energy wins; exact ties (and the +/- margin band) go to RGB."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    diff = scores.f_f - scores.f_r  # positive -> RGB more reliable
    tags = tuple(RGB_DOMINANT if d >= -margin else FLOW_DOMINANT for d in diff)
    return GroupAssignment(tags=tags)


def forced_groups(n_queries: int, modality: str) -> GroupAssignment:
    """All queries assigned to one dominance group (ablation rows)."""
    if modality not in (RGB_DOMINANT, FLOW_DOMINANT):
        raise ValueError(f"bad modality {modality!r}")
    return GroupAssignment(tags=(modality,) * n_queries)
