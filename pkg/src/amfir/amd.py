"""Certainty-weighted mutual distillation, the episodic training objective,
closed-form gradients, and the SGD meta-training loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import asi, metric
from .data import Episode, MultimodalDataset, sample_episode
from .model import HeadParams, ModelBundle, embed


@dataclass(frozen=True)
class ModalityForward:
    """Everything the pipeline derives from one modality's head on an episode."""

    query_feat: np.ndarray  # (M, d_proj)
    support_feat: np.ndarray  # (NK, d_proj)
    prototypes: np.ndarray  # (N, d_proj)
    dist: np.ndarray  # (M, N)
    post: np.ndarray  # (M, N)
    cert: np.ndarray  # (M,)


def forward_modality(
    head: HeadParams,
    query_raw: np.ndarray,
    support_raw: np.ndarray,
    support_labels: np.ndarray,
    n_way: int,
    distance_mode: str,
) -> ModalityForward:
    qf = embed(head, query_raw)
    sf = embed(head, support_raw)
    protos = metric.compute_prototypes(sf, support_labels, n_way)
    dist = metric.distances(qf, protos, distance_mode)
    post = metric.posterior(dist)
    return ModalityForward(qf, sf, protos, dist, post, metric.certainty(post))


def episode_forward(episode: Episode, model: ModelBundle) -> dict[str, ModalityForward]:
    s_rgb, s_flow = episode.support_arrays()
    q_rgb, q_flow = episode.query_arrays()
    mode = model.hyper.distance_mode
    return {
        "r": forward_modality(model.head_r, q_rgb, s_rgb, episode.support_labels, episode.n_way, mode),
        "f": forward_modality(model.head_f, q_flow, s_flow, episode.support_labels, episode.n_way, mode),
    }


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum_k p(k) (ln p(k) - ln q(k)); natural log, both rows on the simplex."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch {p.shape} vs {q.shape}")
    tiny = np.finfo(np.float64).tiny
    return float((p * (np.log(np.clip(p, tiny, None)) - np.log(np.clip(q, tiny, None)))).sum())


def distillation_loss(
    group: np.ndarray,
    teacher_post: np.ndarray,
    teacher_cert: np.ndarray,
    student_post: np.ndarray,
) -> float:
    """Certainty-weighted mean of KL(teacher || student) over the teacher's
    dominance group; 0 for an empty group. Teacher quantities are constants."""
    group = np.asarray(group, dtype=np.int64)
    if group.size == 0:
        return 0.0
    c = np.asarray(teacher_cert, dtype=np.float64)[group]
    kls = np.array([kl_divergence(teacher_post[i], student_post[i]) for i in group])
    return float((c * kls).sum() / c.sum())


def cross_entropy_loss(post: np.ndarray, labels: np.ndarray) -> float:
    """(1/M) sum_i -ln p_i(y_i)."""
    post = np.asarray(post, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= post.shape[1]:
        raise ValueError("label out of range")
    tiny = np.finfo(np.float64).tiny
    picked = post[np.arange(post.shape[0]), labels]
    return float(-np.log(np.clip(picked, tiny, None)).mean())


@dataclass(frozen=True)
class LossBreakdown:
    ce_r: float
    ce_f: float
    distill_r_to_f: float
    distill_f_to_r: float
    lam: float

    @property
    def total(self) -> float:
        return self.ce_r + self.ce_f + self.lam * (self.distill_r_to_f + self.distill_f_to_r)


@dataclass(frozen=True)
class GradientSet:
    grad_w_r: np.ndarray
    grad_b_r: np.ndarray
    grad_w_f: np.ndarray
    grad_b_f: np.ndarray

    def __post_init__(self):
        for g in (self.grad_w_r, self.grad_b_r, self.grad_w_f, self.grad_b_f):
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")


def _teacher_weights(group: np.ndarray, cert: np.ndarray, n_queries: int) -> np.ndarray:
    """Per-query distillation weights c_i / sum(c) inside the group, 0 outside."""
    w = np.zeros(n_queries)
    group = np.asarray(group, dtype=np.int64)
    if group.size:
        c = cert[group]
        w[group] = c / c.sum()
    return w


def _active_directions(distill_mode: str) -> tuple[bool, bool]:
    """Returns (r_to_f on, f_to_r on)."""
    return {
        "both": (True, True),
        "t_rgb": (True, False),
        "t_flow": (False, True),
        "none": (False, False),
    }[distill_mode]


def resolve_groups(
    fwd: dict[str, ModalityForward],
    reliability_mode: str,
    asi_force: str = "off",
    margin: float = 0.0,
) -> asi.GroupAssignment:
    n_q = fwd["r"].post.shape[0]
    if asi_force == "force_rgb":
        return asi.forced_groups(n_q, asi.RGB_DOMINANT)
    if asi_force == "force_flow":
        return asi.forced_groups(n_q, asi.FLOW_DOMINANT)
    if asi_force != "off":
        raise ValueError(f"bad asi_force {asi_force!r}")
    scores = asi.score_reliability(
        fwd["r"].dist, fwd["r"].post, fwd["f"].dist, fwd["f"].post, reliability_mode
    )
    return asi.assign_groups(scores, margin)


def loss_from_forward(
    episode: Episode,
    fwd: dict[str, ModalityForward],
    groups: asi.GroupAssignment,
    lam: float,
    distill_mode: str = "both",
) -> LossBreakdown:
    r, f = fwd["r"], fwd["f"]
    on_rf, on_fr = _active_directions(distill_mode)
    gr, gf = groups.rgb_indices, groups.flow_indices
    d_rf = distillation_loss(gr, r.post, r.cert, f.post) if on_rf else 0.0
    d_fr = distillation_loss(gf, f.post, f.cert, r.post) if on_fr else 0.0
    return LossBreakdown(
        ce_r=cross_entropy_loss(r.post, episode.query_labels),
        ce_f=cross_entropy_loss(f.post, episode.query_labels),
        distill_r_to_f=d_rf,
        distill_f_to_r=d_fr,
        lam=lam,
    )


def total_loss(episode: Episode, model: ModelBundle, asi_force: str = "off") -> LossBreakdown:
    fwd = episode_forward(episode, model)
    groups = resolve_groups(fwd, model.hyper.reliability_mode, asi_force)
    return loss_from_forward(episode, fwd, groups, model.hyper.lam, model.hyper.distill_mode)


def _grad_modality(
    fwd: ModalityForward,
    query_raw: np.ndarray,
    support_raw: np.ndarray,
    support_labels: np.ndarray,
    query_labels: np.ndarray,
    teacher_post: np.ndarray | None,
    teacher_w: np.ndarray | None,
    lam: float,
    distance_mode: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of CE + lam * (distillation into this modality) w.r.t. the
    modality's weight and bias. Teacher posterior and weights are constants."""
    M, N = fwd.post.shape
    onehot = np.zeros((M, N))
    onehot[np.arange(M), query_labels] = 1.0
    # d(loss)/d(logits) with logits z = -dist
    dz = (fwd.post - onehot) / M
    if teacher_post is not None and teacher_w is not None:
        dz = dz + lam * teacher_w[:, None] * (fwd.post - teacher_post)
    g_psi = -dz  # d(loss)/d(dist)

    diff = fwd.query_feat[:, None, :] - fwd.prototypes[None, :, :]  # (M, N, d)
    if distance_mode == metric.SQ_EUCLIDEAN:
        coef = 2.0 * g_psi
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(fwd.dist > 0, 1.0 / np.where(fwd.dist > 0, fwd.dist, 1.0), 0.0)
        coef = g_psi * inv
    d_q = np.einsum("mn,mnd->md", coef, diff)
    d_t = -np.einsum("mn,mnd->nd", coef, diff)

    # prototypes are class means of support features
    counts = np.bincount(support_labels, minlength=fwd.prototypes.shape[0]).astype(np.float64)
    d_s = d_t[support_labels] / counts[support_labels][:, None]

    d_w = d_q.T @ query_raw + d_s.T @ support_raw
    d_b = d_q.sum(axis=0) + d_s.sum(axis=0)
    return d_w, d_b


def grad_total_loss(
    episode: Episode, model: ModelBundle, asi_force: str = "off"
) -> GradientSet:
    """Exact gradient of each modality's objective CE^m + lam * (distillation
    from the other modality) w.r.t. that modality's head. Teacher posteriors,
    certainties, and group assignments are detached."""
    fwd = episode_forward(episode, model)
    groups = resolve_groups(fwd, model.hyper.reliability_mode, asi_force)
    lam = model.hyper.lam
    on_rf, on_fr = _active_directions(model.hyper.distill_mode)
    M = len(episode.query)
    s_rgb, s_flow = episode.support_arrays()
    q_rgb, q_flow = episode.query_arrays()

    # student r <- teacher f over the flow-dominant group
    t_post_r = fwd["f"].post if on_fr else None
    t_w_r = _teacher_weights(groups.flow_indices, fwd["f"].cert, M) if on_fr else None
    # student f <- teacher r over the RGB-dominant group
    t_post_f = fwd["r"].post if on_rf else None
    t_w_f = _teacher_weights(groups.rgb_indices, fwd["r"].cert, M) if on_rf else None

    dw_r, db_r = _grad_modality(
        fwd["r"], q_rgb, s_rgb, episode.support_labels, episode.query_labels,
        t_post_r, t_w_r, lam, model.hyper.distance_mode,
    )
    dw_f, db_f = _grad_modality(
        fwd["f"], q_flow, s_flow, episode.support_labels, episode.query_labels,
        t_post_f, t_w_f, lam, model.hyper.distance_mode,
    )
    return GradientSet(dw_r, db_r, dw_f, db_f)


def sgd_step(model: ModelBundle, grads: GradientSet, gamma: float | None = None) -> ModelBundle:
    """theta^m <- theta^m - gamma * grad, each modality independently."""
    if gamma is None:
        gamma = model.hyper.gamma
    head_r = HeadParams(
        weight=model.head_r.weight - gamma * grads.grad_w_r,
        bias=model.head_r.bias - gamma * grads.grad_b_r,
    )
    head_f = HeadParams(
        weight=model.head_f.weight - gamma * grads.grad_w_f,
        bias=model.head_f.bias - gamma * grads.grad_b_f,
    )
    return model.with_heads(head_r, head_f)


@dataclass(frozen=True)
class TraceRow:
    episode: int
    total: float
    ce_r: float
    ce_f: float
    d_rf: float
    d_fr: float
    f_r: float  # mean per-episode variational free energy, RGB
    f_f: float
    g_r: int  # RGB-dominant group size
    g_f: int

    def as_line(self) -> str:
        vals = (self.total, self.ce_r, self.ce_f, self.d_rf, self.d_fr, self.f_r, self.f_f)
        return "\t".join(
            [str(self.episode)] + [repr(v) for v in vals] + [str(self.g_r), str(self.g_f)]
        )


def train_meta(
    dataset: MultimodalDataset,
    model: ModelBundle,
    n_way: int,
    k_shot: int,
    q_per_class: int,
    episodes: int,
    rng: np.random.Generator,
    asi_force: str = "off",
) -> tuple[ModelBundle, list[TraceRow]]:
    """Episodic SGD loop; returns the trained model and per-episode traces.

    The trace's free-energy columns always use the vfe score so the emitted
    series is comparable across runs regardless of the grouping mode.
    """
    trace: list[TraceRow] = []
    for ep_idx in range(episodes):
        episode = sample_episode(dataset, n_way, k_shot, q_per_class, rng)
        fwd = episode_forward(episode, model)
        groups = resolve_groups(fwd, model.hyper.reliability_mode, asi_force)
        losses = loss_from_forward(
            episode, fwd, groups, model.hyper.lam, model.hyper.distill_mode
        )
        if not np.isfinite(losses.total):
            raise RuntimeError(
                f"non-finite loss at episode {ep_idx}: {losses!r}; aborting training"
            )
        grads = grad_total_loss(episode, model, asi_force)
        model = sgd_step(model, grads)
        f_r = float(asi.free_energy(fwd["r"].dist, fwd["r"].post, asi.VFE).mean())
        f_f = float(asi.free_energy(fwd["f"].dist, fwd["f"].post, asi.VFE).mean())
        trace.append(
            TraceRow(
                episode=ep_idx,
                total=losses.total,
                ce_r=losses.ce_r,
                ce_f=losses.ce_f,
                d_rf=losses.distill_r_to_f,
                d_fr=losses.distill_f_to_r,
                f_r=f_r,
                f_f=f_f,
                g_r=int(groups.rgb_indices.size),
                g_f=int(groups.flow_indices.size),
            )
        )
    return model, trace


def write_trace(trace: list[TraceRow], path) -> None:
    header = "episode\ttotal\tce_r\tce_f\td_rf\td_fr\tF_r\tF_f\tg_r\tg_f"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in trace:
            fh.write(row.as_line() + "\n")
