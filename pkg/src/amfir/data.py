"""Datasets, episodes, the line-delimited embedding file format, and the
synthetic two-modality benchmark with known per-sample modality dominance."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class DataFormatError(Exception):
    """Raised when an embedding file is malformed or inconsistent."""


FORMAT_VERSION = 1

RGB = "r"
FLOW = "f"


@dataclass(frozen=True)
class EmbeddingRecord:
    """One labeled sample: an RGB-role vector and a flow-role vector.

    ``dominant`` is the ground-truth low-noise modality tag ("r" or "f");
    it is present only on synthetic data.
    """

    id: str
    label: int
    rgb: np.ndarray
    flow: np.ndarray
    dominant: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "rgb", np.asarray(self.rgb, dtype=np.float64))
        object.__setattr__(self, "flow", np.asarray(self.flow, dtype=np.float64))


@dataclass(frozen=True)
class MultimodalDataset:
    dim_rgb: int
    dim_flow: int
    num_classes: int
    records: tuple[EmbeddingRecord, ...]

    def __post_init__(self):
        validate_dataset(self)

    def __len__(self):
        return len(self.records)

    def records_by_class(self) -> dict[int, list[EmbeddingRecord]]:
        by_class: dict[int, list[EmbeddingRecord]] = {k: [] for k in range(self.num_classes)}
        for rec in self.records:
            by_class[rec.label].append(rec)
        return by_class


def validate_dataset(ds: MultimodalDataset) -> None:
    if ds.dim_rgb < 1 or ds.dim_flow < 1 or ds.num_classes < 1:
        raise DataFormatError("dataset dims and class count must be >= 1")
    seen: set[str] = set()
    populated = np.zeros(ds.num_classes, dtype=bool)
    for rec in ds.records:
        if rec.id in seen:
            raise DataFormatError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if not 0 <= rec.label < ds.num_classes:
            raise DataFormatError(
                f"record {rec.id!r}: label {rec.label} out of range [0, {ds.num_classes})"
            )
        if rec.rgb.shape != (ds.dim_rgb,):
            raise DataFormatError(
                f"record {rec.id!r}: rgb has {rec.rgb.shape[0] if rec.rgb.ndim == 1 else '?'}"
                f" entries, expected {ds.dim_rgb}"
            )
        if rec.flow.shape != (ds.dim_flow,):
            raise DataFormatError(
                f"record {rec.id!r}: flow has {rec.flow.shape[0] if rec.flow.ndim == 1 else '?'}"
                f" entries, expected {ds.dim_flow}"
            )
        if not (np.all(np.isfinite(rec.rgb)) and np.all(np.isfinite(rec.flow))):
            raise DataFormatError(f"record {rec.id!r}: non-finite embedding entry")
        if rec.dominant not in (None, RGB, FLOW):
            raise DataFormatError(f"record {rec.id!r}: bad dominant tag {rec.dominant!r}")
        populated[rec.label] = True
    if not populated.all():
        missing = int(np.flatnonzero(~populated)[0])
        raise DataFormatError(f"class {missing} has no records")


def load_dataset(path) -> MultimodalDataset:
    """Parse the line-delimited embedding format (see save_dataset)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise DataFormatError(f"{path}: empty file, metadata record missing")
    try:
        meta = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}:1: malformed metadata line: {exc}") from exc
    if not isinstance(meta, dict) or meta.get("kind") != "meta":
        raise DataFormatError(f"{path}:1: first line must be a meta record")
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"{path}:1: unsupported format_version {meta.get('format_version')!r}")
    try:
        dim_rgb = int(meta["dim_rgb"])
        dim_flow = int(meta["dim_flow"])
        num_classes = int(meta["num_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}:1: bad metadata fields: {exc}") from exc

    records: list[EmbeddingRecord] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = EmbeddingRecord(
                id=str(obj["id"]),
                label=int(obj["label"]),
                rgb=np.asarray(obj["rgb"], dtype=np.float64),
                flow=np.asarray(obj["flow"], dtype=np.float64),
                dominant=obj.get("dominant"),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}:{lineno}: malformed record: {exc}") from exc
        records.append(rec)
    try:
        return MultimodalDataset(dim_rgb, dim_flow, num_classes, tuple(records))
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def save_dataset(ds: MultimodalDataset, path) -> None:
    """Write the line-delimited format; bit-reproducible for a given dataset."""
    with open(path, "w", encoding="utf-8") as fh:
        meta = {
            "kind": "meta",
            "dim_rgb": ds.dim_rgb,
            "dim_flow": ds.dim_flow,
            "num_classes": ds.num_classes,
            "format_version": FORMAT_VERSION,
        }
        fh.write(json.dumps(meta) + "\n")
        for rec in ds.records:
            obj = {
                "id": rec.id,
                "label": rec.label,
                "rgb": rec.rgb.tolist(),
                "flow": rec.flow.tolist(),
            }
            if rec.dominant is not None:
                obj["dominant"] = rec.dominant
            fh.write(json.dumps(obj) + "\n")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the Gaussian-mixture benchmark with per-sample dominance.

    Each sample's dominant modality gets low-noise features (sigma_low) around
    its class mean; the other modality gets high-noise features (sigma_high).
    """

    num_classes: int = 24
    per_class: int = 40
    dim_rgb: int = 64
    dim_flow: int = 64
    sep: float = 1.0
    sigma_low: float = 0.2
    sigma_high: float = 1.0
    p_rgb_dominant: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.num_classes, self.per_class, self.dim_rgb, self.dim_flow) < 1:
            raise ValueError("counts and dims must be >= 1")
        if not self.sigma_low < self.sigma_high:
            raise ValueError(
                f"sigma_low ({self.sigma_low}) must be < sigma_high ({self.sigma_high})"
            )
        if not 0.0 <= self.p_rgb_dominant <= 1.0:
            raise ValueError("p_rgb_dominant must lie in [0, 1]")
        if self.sep < 0:
            raise ValueError("sep must be >= 0")


def generate_synthetic(spec: SyntheticSpec) -> MultimodalDataset:
    """Draw the benchmark: fixed class means, per-sample dominance, two noise levels.

    Class means are zero-mean Gaussian with per-coordinate std sep / dim**0.25,
    so the squared class separation grows like sep^2 * sqrt(dim): large enough
    to dominate prototype-noise bias, small enough that posteriors stay off the
    softmax saturation plateau at the default noise levels.
    """
    rng = np.random.default_rng(spec.seed)
    std_rgb = spec.sep / spec.dim_rgb**0.25
    std_flow = spec.sep / spec.dim_flow**0.25
    mu_rgb = rng.normal(0.0, std_rgb, size=(spec.num_classes, spec.dim_rgb))
    mu_flow = rng.normal(0.0, std_flow, size=(spec.num_classes, spec.dim_flow))
    records = []
    for c in range(spec.num_classes):
        for j in range(spec.per_class):
            rgb_dom = rng.random() < spec.p_rgb_dominant
            s_rgb = spec.sigma_low if rgb_dom else spec.sigma_high
            s_flow = spec.sigma_high if rgb_dom else spec.sigma_low
            rgb = mu_rgb[c] + s_rgb * rng.standard_normal(spec.dim_rgb)
            flow = mu_flow[c] + s_flow * rng.standard_normal(spec.dim_flow)
            records.append(
                EmbeddingRecord(
                    id=f"s{c:04d}_{j:04d}",
                    label=c,
                    rgb=rgb,
                    flow=flow,
                    dominant=RGB if rgb_dom else FLOW,
                )
            )
    return MultimodalDataset(spec.dim_rgb, spec.dim_flow, spec.num_classes, tuple(records))


@dataclass(frozen=True)
class Episode:
    """One N-way K-shot task with labels remapped to [0, N)."""

    n_way: int
    k_shot: int
    q_per_class: int
    support: tuple[EmbeddingRecord, ...]
    support_labels: np.ndarray
    query: tuple[EmbeddingRecord, ...]
    query_labels: np.ndarray
    classes: tuple[int, ...] = field(default=())  # original labels, bookkeeping only

    def support_arrays(self):
        rgb = np.stack([r.rgb for r in self.support])
        flow = np.stack([r.flow for r in self.support])
        return rgb, flow

    def query_arrays(self):
        rgb = np.stack([r.rgb for r in self.query])
        flow = np.stack([r.flow for r in self.query])
        return rgb, flow

    def query_dominant(self) -> list[str | None]:
        return [r.dominant for r in self.query]


def sample_episode(
    dataset: MultimodalDataset,
    n_way: int,
    k_shot: int,
    q_per_class: int,
    rng: np.random.Generator,
) -> Episode:
    """Sample classes uniformly, then k_shot + q_per_class records per class
    without replacement. Deterministic given the rng state."""
    if min(n_way, k_shot, q_per_class) < 1:
        raise ValueError("n_way, k_shot, q_per_class must be >= 1")
    if dataset.num_classes < n_way:
        raise ValueError(
            f"dataset has {dataset.num_classes} classes, need {n_way} for the episode"
        )
    by_class = dataset.records_by_class()
    classes = rng.choice(dataset.num_classes, size=n_way, replace=False)
    need = k_shot + q_per_class
    support, query = [], []
    support_labels, query_labels = [], []
    for new_label, c in enumerate(classes):
        pool = by_class[int(c)]
        if len(pool) < need:
            raise ValueError(
                f"class {int(c)} has {len(pool)} records, need {need} per episode"
            )
        picked = rng.choice(len(pool), size=need, replace=False)
        for idx in picked[:k_shot]:
            support.append(pool[int(idx)])
            support_labels.append(new_label)
        for idx in picked[k_shot:]:
            query.append(pool[int(idx)])
            query_labels.append(new_label)
    return Episode(
        n_way=n_way,
        k_shot=k_shot,
        q_per_class=q_per_class,
        support=tuple(support),
        support_labels=np.asarray(support_labels, dtype=np.int64),
        query=tuple(query),
        query_labels=np.asarray(query_labels, dtype=np.int64),
        classes=tuple(int(c) for c in classes),
    )


def split_by_class(
    dataset: MultimodalDataset, train_fraction: float, rng: np.random.Generator
) -> tuple[MultimodalDataset, MultimodalDataset]:
    """Assign disjoint class subsets to train/test datasets (class labels are
    re-densified within each split)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    C = dataset.num_classes
    perm = rng.permutation(C)
    n_train = int(round(C * train_fraction))
    n_train = min(max(n_train, 1), C - 1)
    train_classes = sorted(int(c) for c in perm[:n_train])
    test_classes = sorted(int(c) for c in perm[n_train:])

    def subset(classes):
        remap = {c: i for i, c in enumerate(classes)}
        recs = tuple(
            EmbeddingRecord(r.id, remap[r.label], r.rgb, r.flow, r.dominant)
            for r in dataset.records
            if r.label in remap
        )
        return MultimodalDataset(dataset.dim_rgb, dataset.dim_flow, len(classes), recs)

    return subset(train_classes), subset(test_classes)
