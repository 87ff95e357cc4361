"""Command-line entry points: train, generate, eval, ablate.

Exit codes: 0 success, 1 runtime failure, 2 config or validation failure.
All outputs are JSON/JSONL; metrics.jsonl carries only deterministic fields
so identical config and seed reproduce it byte for byte, while wall-clock
and memory readings go to timings.jsonl.
"""

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .augmentation import RhaConfig, augment
from .expansion import build_back_projection, expand
from .hypergraph import SyntheticConfig, generate_synthetic, load_hypergraph, save_hypergraph, split_dataset
from .models import load_checkpoint, save_checkpoint
from .trainer import TrainConfig, evaluate, train

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
_SYNTH_FIELDS = {f.name for f in dataclasses.fields(SyntheticConfig)}


class ConfigError(Exception):
    pass


def _read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: parse error at line {e.lineno}: {e.msg}") from None


def _load_run_config(path, out_override=None):
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    extra = {"dataset", "out_dir", "seeds"}
    for key in doc:
        if key not in _TRAIN_FIELDS and key not in extra:
            raise ConfigError(f"unknown config key '{key}'")
    if "dataset" not in doc:
        raise ConfigError("config is missing required key 'dataset'")
    fields = {k: v for k, v in doc.items() if k in _TRAIN_FIELDS}
    if "split_ratios" in fields:
        fields["split_ratios"] = tuple(fields["split_ratios"])
    try:
        cfg = TrainConfig(**fields)
        cfg.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    out_dir = out_override or doc.get("out_dir")
    dataset = Path(path).parent / doc["dataset"]
    seeds = doc.get("seeds", [0, 1, 2, 3, 4])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("'seeds' must be a nonempty list of integers")
    return cfg, dataset, out_dir, seeds


def _metrics_row(m):
    # deterministic fields only; timing fields are written separately
    return {
        "epoch": m.epoch,
        "train_loss": m.train_loss,
        "policy_loss": m.policy_loss,
        "val_accuracy": m.val_accuracy,
        "test_accuracy": m.test_accuracy,
        "entropy_mean": m.entropy_mean,
        "entropy_std": m.entropy_std,
        "sampled_node_count": m.sampled_node_count,
    }


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def cmd_train(args):
    cfg, dataset, out_dir, _ = _load_run_config(args.config, args.out)
    if not out_dir:
        raise ConfigError("no output directory: set 'out_dir' in the config or pass --out")
    try:
        h = load_hypergraph(dataset)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    model, policy, metrics = train(h, cfg)
    wall = time.perf_counter() - t0

    _write_jsonl(out / "metrics.jsonl", [_metrics_row(m) for m in metrics])
    _write_jsonl(
        out / "timings.jsonl",
        [
            {"epoch": m.epoch, "epoch_time_s": m.epoch_time_s, "peak_resident_mb": m.peak_resident_mb}
            for m in metrics
        ],
    )
    save_checkpoint(model, out / "checkpoint.hsmp")
    save_checkpoint(policy, out / "policy.hsmp")
    summary = {
        "epochs": cfg.epochs,
        "final_val_accuracy": metrics[-1].val_accuracy if metrics else None,
        "final_test_accuracy": metrics[-1].test_accuracy if metrics else None,
        "wall_time_s": wall,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_generate(args):
    doc = _read_json(args.spec)
    if not isinstance(doc, dict):
        raise ConfigError(f"{args.spec}: generator spec must be a JSON object")
    for key in doc:
        if key not in _SYNTH_FIELDS:
            raise ConfigError(f"unknown config key '{key}'")
    try:
        cfg = SyntheticConfig(**doc)
        h = generate_synthetic(cfg, args.seed)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_hypergraph(h, out, features_file=args.external_features)
    return EXIT_OK


def cmd_eval(args):
    try:
        h = load_hypergraph(args.data)
        model = load_checkpoint(args.checkpoint)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    ratios = tuple(args.ratios)
    split = split_dataset(h, ratios, args.seed)
    ids = {"train": split.train_ids, "val": split.val_ids, "test": split.test_ids}[args.split]
    h_run = augment(h, RhaConfig(ratio=args.rha_ratio, seed=args.seed)) if args.rha_ratio > 0 else h
    g = expand(h_run)
    bp = build_back_projection(g)
    policy = load_checkpoint(args.policy) if args.policy else None
    mode = "adaptive" if policy is not None else "random"
    acc = evaluate(
        model, h_run, g, bp, ids,
        k_eval=args.k_eval, mode=mode if args.k_eval else "full",
        seed=args.seed, policy=policy,
    )
    print(json.dumps({"split": args.split, "accuracy": acc}))
    return EXIT_OK


def cmd_ablate(args):
    cfg, dataset, out_dir, seeds = _load_run_config(args.config, args.out)
    if not out_dir:
        raise ConfigError("no output directory: set 'out_dir' in the config or pass --out")
    try:
        h = load_hypergraph(dataset)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rha = cfg.rha_ratio if cfg.rha_ratio > 0 else 1.0
    variants = [
        ("Rdm-GCN", {"mode": "random", "rha_ratio": 0.0}),
        ("Ada-GCN", {"mode": "adaptive", "rha_ratio": 0.0}),
        ("Ada-GCN+RHA", {"mode": "adaptive", "rha_ratio": rha}),
    ]
    rows = []
    runs_log = []
    for name, overrides in variants:
        accs, epoch_times = [], []
        for seed in seeds:
            run_cfg = dataclasses.replace(cfg, seed=seed, **overrides)
            _, _, metrics = train(h, run_cfg)
            acc = metrics[-1].test_accuracy if metrics else 0.0
            accs.append(acc)
            epoch_times.append(float(np.mean([m.epoch_time_s for m in metrics])) if metrics else 0.0)
            runs_log.append({"row": name, "seed": seed, "test_accuracy": acc})
            run_dir = out / "runs" / f"{name}-seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            _write_jsonl(run_dir / "metrics.jsonl", [_metrics_row(m) for m in metrics])
        rows.append(
            {
                "row": name,
                "mean_test_accuracy": float(np.mean(accs)),
                "std_test_accuracy": float(np.std(accs)),
                "mean_epoch_time_s": float(np.mean(epoch_times)),
                "seeds": list(seeds),
                "accuracies": accs,
            }
        )

    (out / "ablation.json").write_text(
        json.dumps({"rows": rows, "runs": runs_log}, indent=2) + "\n", encoding="utf-8"
    )
    header = f"{'row':<14} {'mean':>8} {'std':>8} {'epoch_s':>9}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['row']:<14} {r['mean_test_accuracy']:>8.4f} "
            f"{r['std_test_accuracy']:>8.4f} {r['mean_epoch_time_s']:>9.4f}"
        )
    table = "\n".join(lines)
    (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(prog="hypersample")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier per a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="write a synthetic hypergraph dataset")
    p.add_argument("--spec", required=True, help="generator parameter JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--external-features", default=None,
        help="store features in this binary sidecar (relative path) instead of inline",
    )
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--seed", type=int, default=0, help="split seed used at training time")
    p.add_argument("--ratios", type=float, nargs=3, default=(0.4, 0.1, 0.5))
    p.add_argument("--k-eval", type=int, default=0, help="0 evaluates full-batch")
    p.add_argument("--rha-ratio", type=float, default=0.0)
    p.add_argument("--policy", default=None, help="policy checkpoint for adaptive eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the random/adaptive/RHA comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # runtime failure lane
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
