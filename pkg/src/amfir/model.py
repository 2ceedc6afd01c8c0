"""Modality-specific affine heads mapping raw embeddings into the metric
space, plus model (de)serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .data import DataFormatError

MODEL_FORMAT_VERSION = 1

DEFAULT_PROJ_DIM = 64
DEFAULT_LAMBDA = 1.0
DEFAULT_GAMMA = 1e-3


@dataclass(frozen=True)
class HeadParams:
    weight: np.ndarray  # (d_proj, d_in)
    bias: np.ndarray  # (d_proj,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent head shapes {w.shape} / {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite head parameters")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_proj(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class Hyper:
    d_proj: int = DEFAULT_PROJ_DIM
    lam: float = DEFAULT_LAMBDA
    gamma: float = DEFAULT_GAMMA
    reliability_mode: str = "vfe"  # vfe | entropy
    distance_mode: str = "sq_euclidean"  # sq_euclidean | euclidean
    distill_mode: str = "both"  # both | t_rgb | t_flow | none

    def __post_init__(self):
        if self.reliability_mode not in ("vfe", "entropy"):
            raise ValueError(f"bad reliability_mode {self.reliability_mode!r}")
        if self.distance_mode not in ("sq_euclidean", "euclidean"):
            raise ValueError(f"bad distance_mode {self.distance_mode!r}")
        if self.distill_mode not in ("both", "t_rgb", "t_flow", "none"):
            raise ValueError(f"bad distill_mode {self.distill_mode!r}")
        if self.lam < 0 or self.gamma <= 0 or self.d_proj < 1:
            raise ValueError("need lambda >= 0, gamma > 0, d_proj >= 1")


@dataclass(frozen=True)
class ModelBundle:
    head_r: HeadParams
    head_f: HeadParams
    hyper: Hyper = field(default_factory=Hyper)

    def __post_init__(self):
        if self.head_r.d_proj != self.head_f.d_proj:
            raise ValueError("heads must share d_proj")

    def head(self, modality: str) -> HeadParams:
        if modality == "r":
            return self.head_r
        if modality == "f":
            return self.head_f
        raise ValueError(f"unknown modality {modality!r}")

    def with_heads(self, head_r: HeadParams, head_f: HeadParams) -> "ModelBundle":
        return replace(self, head_r=head_r, head_f=head_f)


def init_heads(
    dim_rgb: int,
    dim_flow: int,
    d_proj: int = DEFAULT_PROJ_DIM,
    rng: np.random.Generator | None = None,
    hyper: Hyper | None = None,
) -> ModelBundle:
    """Glorot-style Gaussian weights, std sqrt(2 / (d_in + d_proj)); zero biases."""
    if min(dim_rgb, dim_flow, d_proj) < 1:
        raise ValueError("dims must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    heads = []
    for d_in in (dim_rgb, dim_flow):
        std = np.sqrt(2.0 / (d_in + d_proj))
        w = rng.normal(0.0, std, size=(d_proj, d_in))
        heads.append(HeadParams(weight=w, bias=np.zeros(d_proj)))
    if hyper is None:
        hyper = Hyper(d_proj=d_proj)
    elif hyper.d_proj != d_proj:
        hyper = replace(hyper, d_proj=d_proj)
    return ModelBundle(head_r=heads[0], head_f=heads[1], hyper=hyper)


def embed(head: HeadParams, x: np.ndarray) -> np.ndarray:
    """Affine map weight @ x + bias; accepts a vector or a (n, d_in) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != head.d_in:
        raise ValueError(f"input dim {x.shape[-1]} != head d_in {head.d_in}")
    return x @ head.weight.T + head.bias


def save_model(model: ModelBundle, path) -> None:
    """Line-delimited model format: a meta line, then one line per head with
    row-major weights; bit-exact round-trip."""
    h = model.hyper
    with open(path, "w", encoding="utf-8") as fh:
        meta = {
            "kind": "model",
            "format_version": MODEL_FORMAT_VERSION,
            "d_proj": h.d_proj,
            "lambda": h.lam,
            "gamma": h.gamma,
            "reliability_mode": h.reliability_mode,
            "distance_mode": h.distance_mode,
            "distill_mode": h.distill_mode,
        }
        fh.write(json.dumps(meta) + "\n")
        for name, head in (("r", model.head_r), ("f", model.head_f)):
            obj = {
                "modality": name,
                "d_in": head.d_in,
                "d_proj": head.d_proj,
                "weight": head.weight.ravel().tolist(),
                "bias": head.bias.tolist(),
            }
            fh.write(json.dumps(obj) + "\n")


def load_model(path) -> ModelBundle:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) != 3:
        raise DataFormatError(f"{path}: expected meta line plus two head lines")
    try:
        meta = json.loads(lines[0])
        if meta.get("kind") != "model" or meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise DataFormatError(f"{path}:1: not a supported model file")
        hyper = Hyper(
            d_proj=int(meta["d_proj"]),
            lam=float(meta["lambda"]),
            gamma=float(meta["gamma"]),
            reliability_mode=meta["reliability_mode"],
            distance_mode=meta["distance_mode"],
            distill_mode=meta["distill_mode"],
        )
        heads = {}
        for lineno, line in enumerate(lines[1:], start=2):
            obj = json.loads(line)
            w = np.asarray(obj["weight"], dtype=np.float64).reshape(
                int(obj["d_proj"]), int(obj["d_in"])
            )
            heads[obj["modality"]] = HeadParams(
                weight=w, bias=np.asarray(obj["bias"], dtype=np.float64)
            )
        return ModelBundle(head_r=heads["r"], head_f=heads["f"], hyper=hyper)
    except DataFormatError:
        raise
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: malformed model file: {exc}") from exc
