"""Adaptive multimodal inference at meta-test: certainty-ratio fusion
weights, fused posteriors, episode evaluation, and metric aggregation."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import asi, metric
from .amd import episode_forward, resolve_groups
from .data import Episode
from .model import ModelBundle

FUSION_MODES = ("adaptive", "rgb_only", "flow_only", "mean")


def fusion_weights(c_r: np.ndarray, c_f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """alpha_m = c_m / (c_r + c_f); elementwise over query certainties."""
    c_r = np.asarray(c_r, dtype=np.float64)
    c_f = np.asarray(c_f, dtype=np.float64)
    denom = c_r + c_f
    if np.any(denom <= 0):
        raise ValueError("certainties must be positive")
    return c_r / denom, c_f / denom


def fused_posterior(dist_r: np.ndarray, dist_f: np.ndarray, alpha_r, alpha_f) -> np.ndarray:
    """Softmax of -(alpha_r * dist_r + alpha_f * dist_f), max-subtracted.

    Accepts single rows or (M, N) matrices with per-query weights.
    """
    dist_r = np.asarray(dist_r, dtype=np.float64)
    dist_f = np.asarray(dist_f, dtype=np.float64)
    if dist_r.shape != dist_f.shape:
        raise ValueError(f"distance shapes differ: {dist_r.shape} vs {dist_f.shape}")
    a_r = np.asarray(alpha_r, dtype=np.float64)
    a_f = np.asarray(alpha_f, dtype=np.float64)
    if dist_r.ndim == 2:
        a_r = a_r.reshape(-1, 1)
        a_f = a_f.reshape(-1, 1)
    return metric.posterior(a_r * dist_r + a_f * dist_f)


@dataclass(frozen=True)
class EpisodeResult:
    fused_post: np.ndarray  # (M, N)
    predicted: np.ndarray  # (M,)
    true_labels: np.ndarray  # (M,)
    group_tags: tuple[str, ...]
    pred_r: np.ndarray
    pred_f: np.ndarray
    accuracy: float
    accuracy_r: float
    accuracy_f: float
    # per-query: True where the ASI tag matches ground-truth dominance,
    # None-masked via asi_known when the record has no dominant field
    asi_match: np.ndarray
    asi_known: np.ndarray
    fusion_mode: str


def _argmax_low_tie(rows: np.ndarray) -> np.ndarray:
    # np.argmax already returns the lowest index among ties
    return rows.argmax(axis=-1)


def evaluate_episode(
    episode: Episode, model: ModelBundle, fusion_mode: str = "adaptive"
) -> EpisodeResult:
    """Full meta-test pass on one episode; query labels touched only at scoring."""
    if fusion_mode not in FUSION_MODES:
        raise ValueError(f"unknown fusion mode {fusion_mode!r}")
    fwd = episode_forward(episode, model)
    r, f = fwd["r"], fwd["f"]
    if fusion_mode == "adaptive":
        a_r, a_f = fusion_weights(r.cert, f.cert)
        fused = fused_posterior(r.dist, f.dist, a_r, a_f)
    elif fusion_mode == "mean":
        m = r.dist.shape[0]
        fused = fused_posterior(r.dist, f.dist, np.full(m, 0.5), np.full(m, 0.5))
    elif fusion_mode == "rgb_only":
        fused = r.post
    else:
        fused = f.post

    groups = resolve_groups(fwd, model.hyper.reliability_mode)
    pred = _argmax_low_tie(fused)
    pred_r = _argmax_low_tie(r.post)
    pred_f = _argmax_low_tie(f.post)
    y = episode.query_labels

    dominant = episode.query_dominant()
    known = np.array([d is not None for d in dominant])
    tags = np.asarray(groups.tags)
    match = np.zeros(len(dominant), dtype=bool)
    if known.any():
        truth = np.array([d if d is not None else "" for d in dominant])
        match[known] = tags[known] == truth[known]

    return EpisodeResult(
        fused_post=fused,
        predicted=pred,
        true_labels=y,
        group_tags=groups.tags,
        pred_r=pred_r,
        pred_f=pred_f,
        accuracy=float((pred == y).mean()),
        accuracy_r=float((pred_r == y).mean()),
        accuracy_f=float((pred_f == y).mean()),
        asi_match=match,
        asi_known=known,
        fusion_mode=fusion_mode,
    )


@dataclass(frozen=True)
class RunMetrics:
    episodes: int
    mean_accuracy: float
    ci95_half_width: float
    mean_accuracy_r: float
    mean_accuracy_f: float
    asi_agreement: float | None  # None when no record carries ground truth
    fusion_mode: str
    episode_accuracies: tuple[float, ...]


def aggregate_metrics(results: list[EpisodeResult]) -> RunMetrics:
    """Means over episodes; 95% CI half-width by normal approximation."""
    if not results:
        raise ValueError("no episode results to aggregate")
    accs = np.array([r.accuracy for r in results])
    half = 0.0
    if len(accs) > 1:
        half = float(1.96 * accs.std(ddof=1) / np.sqrt(len(accs)))
    known = np.concatenate([r.asi_known for r in results])
    match = np.concatenate([r.asi_match for r in results])
    agreement = float(match[known].mean()) if known.any() else None
    return RunMetrics(
        episodes=len(results),
        mean_accuracy=float(accs.mean()),
        ci95_half_width=half,
        mean_accuracy_r=float(np.mean([r.accuracy_r for r in results])),
        mean_accuracy_f=float(np.mean([r.accuracy_f for r in results])),
        asi_agreement=agreement,
        fusion_mode=results[0].fusion_mode,
        episode_accuracies=tuple(float(a) for a in accs),
    )


def write_metrics(metrics: RunMetrics, path, config: dict | None = None) -> None:
    """Single serialized object holding every RunMetrics field plus the run
    configuration."""
    obj = {
        "kind": "metrics",
        "format_version": 1,
        "episodes": metrics.episodes,
        "mean_accuracy": metrics.mean_accuracy,
        "ci95_half_width": metrics.ci95_half_width,
        "mean_accuracy_r": metrics.mean_accuracy_r,
        "mean_accuracy_f": metrics.mean_accuracy_f,
        "asi_agreement": metrics.asi_agreement,
        "fusion_mode": metrics.fusion_mode,
        "episode_accuracies": list(metrics.episode_accuracies),
        "config": config or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True) + "\n")
