"""Command-line surface: generate | split | train | eval | ablate."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .amd import train_meta, write_trace
from .ami import aggregate_metrics, evaluate_episode, write_metrics
from .data import (
    DataFormatError,
    MultimodalDataset,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    sample_episode,
    save_dataset,
    split_by_class,
)
from .model import Hyper, init_heads, load_model, save_model

ABLATION_CELLS = (
    # name, distill_mode, asi_force, fusion_mode
    ("full", "both", "off", "adaptive"),
    ("force_rgb", "both", "force_rgb", "adaptive"),
    ("force_flow", "both", "force_flow", "adaptive"),
    ("amd_off", "none", "off", "adaptive"),
    ("ami_off", "both", "off", "mean"),
    ("t_rgb", "t_rgb", "off", "adaptive"),
    ("t_flow", "t_flow", "off", "adaptive"),
)


def _load_config_file(path: str) -> dict[str, str]:
    cfg = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, val = line.split("=", 1)
                cfg[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise ValueError(f"cannot read config file: {exc}") from exc
    return cfg


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Flags override config-file values, which override built-in defaults."""
    pre, _ = parser.parse_known_args(argv)
    cfg = getattr(pre, "config", None)
    if cfg:
        raw = _load_config_file(cfg)
        sub_action = next(
            a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
        )
        subparser = sub_action.choices[pre.command]
        typed = {}
        for action in subparser._actions:
            if action.dest in raw:
                value = raw[action.dest]
                typed[action.dest] = action.type(value) if action.type else value
                if action.choices and typed[action.dest] not in action.choices:
                    raise ValueError(
                        f"config value {action.dest}={value!r} not in {sorted(action.choices)}"
                    )
        subparser.set_defaults(**typed)
    return parser.parse_args(argv)


def _episode_rng(seed: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(purpose,)))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="key=value config file")
    p.add_argument("--seed", type=int, default=0)


def _add_episode_shape(p: argparse.ArgumentParser, k_shot_default: int) -> None:
    p.add_argument("--n-way", type=int, default=5)
    p.add_argument("--k-shot", type=int, default=k_shot_default)
    p.add_argument("--q-per-class", type=int, default=5)


def _add_hyper(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--lr", dest="gamma", type=float, default=1e-3)
    p.add_argument("--proj-dim", type=int, default=64)
    p.add_argument("--reliability", choices=("vfe", "entropy"), default="vfe")
    p.add_argument("--distance", choices=("sq_euclidean", "euclidean"), default="sq_euclidean")
    p.add_argument("--distill", choices=("both", "t_rgb", "t_flow", "none"), default="both")
    p.add_argument("--asi-force", choices=("off", "force_rgb", "force_flow"), default="off")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amfir",
        description="Active multimodal few-shot inference over two-modality embeddings",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic two-modality benchmark")
    _add_common(g)
    g.add_argument("--classes", type=int, default=24)
    g.add_argument("--per-class", type=int, default=40)
    g.add_argument("--dim-rgb", type=int, default=64)
    g.add_argument("--dim-flow", type=int, default=64)
    g.add_argument("--sep", type=float, default=1.0)
    g.add_argument("--sigma-low", type=float, default=0.2)
    g.add_argument("--sigma-high", type=float, default=1.0)
    g.add_argument("--p-rgb-dominant", type=float, default=0.5)
    g.add_argument("--out", type=str, required=True)

    s = sub.add_parser("split", help="split a dataset into class-disjoint train/test files")
    _add_common(s)
    s.add_argument("--data", type=str, required=True)
    s.add_argument("--out-train", type=str, required=True)
    s.add_argument("--out-test", type=str, required=True)
    s.add_argument("--ratio", type=float, default=0.7)

    t = sub.add_parser("train", help="meta-train the modality heads")
    _add_common(t)
    _add_episode_shape(t, k_shot_default=5)
    _add_hyper(t)
    t.add_argument("--data", type=str, required=True)
    t.add_argument("--model", type=str, required=True, help="output model file")
    t.add_argument("--trace", type=str, default=None, help="output trace file")
    t.add_argument("--metrics", type=str, default=None, help="held-in training metrics file")
    t.add_argument("--episodes", type=int, default=2000)

    e = sub.add_parser("eval", help="episodic meta-test of a trained model")
    _add_common(e)
    _add_episode_shape(e, k_shot_default=1)
    e.add_argument("--data", type=str, required=True)
    e.add_argument("--model", type=str, required=True)
    e.add_argument("--metrics", type=str, required=True)
    e.add_argument("--episodes", type=int, default=600)
    e.add_argument("--fusion", choices=("adaptive", "rgb_only", "flow_only", "mean"), default="adaptive")

    a = sub.add_parser("ablate", help="train/eval the ablation grid with shared seeds")
    _add_common(a)
    _add_episode_shape(a, k_shot_default=5)
    a.add_argument("--eval-k-shot", type=int, default=1, help="support size at evaluation")
    _add_hyper(a)
    a.add_argument("--data", type=str, required=True)
    a.add_argument("--eval-data", type=str, default=None, help="defaults to --data")
    a.add_argument("--out", type=str, required=True, help="consolidated table file")
    a.add_argument("--train-episodes", type=int, default=2000)
    a.add_argument("--eval-episodes", type=int, default=600)
    a.add_argument("--seeds", type=str, default="0,1,2", help="comma-separated")
    return parser


def cmd_generate(args) -> int:
    spec = SyntheticSpec(
        num_classes=args.classes,
        per_class=args.per_class,
        dim_rgb=args.dim_rgb,
        dim_flow=args.dim_flow,
        sep=args.sep,
        sigma_low=args.sigma_low,
        sigma_high=args.sigma_high,
        p_rgb_dominant=args.p_rgb_dominant,
        seed=args.seed,
    )
    ds = generate_synthetic(spec)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} records (dim_rgb={ds.dim_rgb}, dim_flow={ds.dim_flow}, "
          f"classes={ds.num_classes}) to {args.out}")
    return 0


def cmd_split(args) -> int:
    ds = load_dataset(args.data)
    rng = _episode_rng(args.seed, 9)
    train, test = split_by_class(ds, args.ratio, rng)
    save_dataset(train, args.out_train)
    save_dataset(test, args.out_test)
    print(f"train: {train.num_classes} classes / {len(train)} records -> {args.out_train}")
    print(f"test:  {test.num_classes} classes / {len(test)} records -> {args.out_test}")
    return 0


def _hyper_from_args(args) -> Hyper:
    return Hyper(
        d_proj=args.proj_dim,
        lam=args.lam,
        gamma=args.gamma,
        reliability_mode=args.reliability,
        distance_mode=args.distance,
        distill_mode=args.distill,
    )


def _train_once(ds: MultimodalDataset, args, seed: int, hyper: Hyper, asi_force: str):
    model = init_heads(ds.dim_rgb, ds.dim_flow, hyper.d_proj,
                       rng=_episode_rng(seed, 0), hyper=hyper)
    rng = _episode_rng(seed, 1)
    episodes = args.episodes if hasattr(args, "episodes") else args.train_episodes
    return train_meta(ds, model, args.n_way, args.k_shot, args.q_per_class,
                      episodes, rng, asi_force=asi_force)


def _eval_run(ds, model, args, seed: int, episodes: int, fusion: str, k_shot: int | None = None):
    rng = _episode_rng(seed, 2)
    k = args.k_shot if k_shot is None else k_shot
    results = []
    for _ in range(episodes):
        episode = sample_episode(ds, args.n_way, k, args.q_per_class, rng)
        results.append(evaluate_episode(episode, model, fusion))
    return aggregate_metrics(results)


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    hyper = _hyper_from_args(args)
    model, trace = _train_once(ds, args, args.seed, hyper, args.asi_force)
    save_model(model, args.model)
    print(f"trained {args.episodes} episodes -> {args.model}")
    if args.trace:
        write_trace(trace, args.trace)
        print(f"trace -> {args.trace}")
    if args.metrics:
        metrics = _eval_run(ds, model, args, args.seed, min(100, max(args.episodes, 1)), "adaptive")
        write_metrics(metrics, args.metrics, config=_config_dict(args))
        print(f"held-in metrics -> {args.metrics} (accuracy {metrics.mean_accuracy:.4f})")
    return 0


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    model = load_model(args.model)
    if model.head_r.d_in != ds.dim_rgb or model.head_f.d_in != ds.dim_flow:
        raise RuntimeError(
            f"model dims (rgb {model.head_r.d_in}, flow {model.head_f.d_in}) do not "
            f"match dataset (rgb {ds.dim_rgb}, flow {ds.dim_flow})"
        )
    metrics = _eval_run(ds, model, args, args.seed, args.episodes, args.fusion)
    write_metrics(metrics, args.metrics, config=_config_dict(args))
    agree = "n/a" if metrics.asi_agreement is None else f"{metrics.asi_agreement:.4f}"
    print(f"accuracy {metrics.mean_accuracy:.4f} +/- {metrics.ci95_half_width:.4f} "
          f"(rgb {metrics.mean_accuracy_r:.4f}, flow {metrics.mean_accuracy_f:.4f}, "
          f"asi agreement {agree}) over {metrics.episodes} episodes -> {args.metrics}")
    return 0


def cmd_ablate(args) -> int:
    ds = load_dataset(args.data)
    eval_ds = load_dataset(args.eval_data) if args.eval_data else ds
    seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    if not seeds:
        raise ValueError("--seeds must name at least one seed")
    base_hyper = _hyper_from_args(args)
    cells: dict[str, dict] = {}
    for name, distill, force, fusion in ABLATION_CELLS:
        cells[name] = {"distill": distill, "asi_force": force, "fusion": fusion,
                       "accuracies": [], "accuracies_r": [], "accuracies_f": []}
    for seed in seeds:
        trained: dict[tuple[str, str], object] = {}
        for name, distill, force, fusion in ABLATION_CELLS:
            key = (distill, force)
            if key not in trained:
                hyper = Hyper(
                    d_proj=base_hyper.d_proj, lam=base_hyper.lam, gamma=base_hyper.gamma,
                    reliability_mode=base_hyper.reliability_mode,
                    distance_mode=base_hyper.distance_mode, distill_mode=distill,
                )
                model, _ = _train_once(ds, args, seed, hyper, force)
                trained[key] = model
            metrics = _eval_run(
                eval_ds, trained[key], args, seed, args.eval_episodes, fusion,
                k_shot=args.eval_k_shot,
            )
            cells[name]["accuracies"].append(metrics.mean_accuracy)
            cells[name]["accuracies_r"].append(metrics.mean_accuracy_r)
            cells[name]["accuracies_f"].append(metrics.mean_accuracy_f)
    for cell in cells.values():
        cell["mean_accuracy"] = float(np.mean(cell["accuracies"]))
        cell["mean_accuracy_r"] = float(np.mean(cell["accuracies_r"]))
        cell["mean_accuracy_f"] = float(np.mean(cell["accuracies_f"]))
    obj = {
        "kind": "ablation",
        "format_version": 1,
        "seeds": seeds,
        "cells": cells,
        "config": _config_dict(args),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True) + "\n")
    width = max(len(n) for n in cells)
    print(f"{'cell':<{width}}  mean_acc  rgb_acc  flow_acc")
    for name in cells:
        c = cells[name]
        print(f"{name:<{width}}  {c['mean_accuracy']:.4f}    {c['mean_accuracy_r']:.4f}   "
              f"{c['mean_accuracy_f']:.4f}")
    print(f"table -> {args.out}")
    return 0


def _config_dict(args) -> dict:
    skip = {"command", "func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


COMMANDS = {
    "generate": cmd_generate,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_defaults(parser, argv)
        return COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, RuntimeError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
