"""Batch command-line surface: prepare, train, eval, sweep, ablate, synth.

Every command writes a run_manifest.json into its output directory with the
resolved configuration, dataset fingerprint, and seeds, which is enough to
re-run it identically. Errors leave a machine-readable JSON line on stderr
and a nonzero exit code. Log verbosity comes from the GROUPREC_LOG
environment variable (DEBUG/INFO/WARNING/ERROR).
"""

import argparse
import itertools
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, resolve_variant
from .datasets import (
    GROUP_EDGES_FILE,
    load_dataset,
    load_prepared,
    save_dataset,
    split_holdout,
    subsample,
    synthesize_group_items,
    write_splits,
)
from .evaluate import evaluate_popularity, evaluate_ranking
from .reporting import export_report, metric_rows
from .synthetic import generate_synthetic
from .trainer import Trainer, build_model_from_arrays

log = logging.getLogger(__name__)


def write_manifest(out_dir, command, config_dict, fingerprint, seeds, argv):
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "command": command,
        "argv": list(argv),
        "config": config_dict,
        "dataset_fingerprint": fingerprint,
        "seeds": list(seeds),
        "out_dir": os.path.abspath(out_dir),
        "version": f"grouprec-{__version__}",
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_config(args):
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = TrainConfig.from_dict({**cfg.as_dict(), **overrides})
    return cfg.validate()


def parse_ks(text):
    ks = tuple(int(tok) for tok in text.split(",") if tok)
    if not ks or any(k < 1 for k in ks):
        raise ValueError(f"bad cutoff list {text!r}")
    return ks


def cmd_prepare(args):
    ds = load_dataset(args.data)
    out_dir = args.out or args.data
    if args.subsample is not None:
        if out_dir == args.data:
            raise ValueError("--subsample would clobber the source; pass --out")
        ds = subsample(ds, args.subsample, args.seed)
    had_group_edges = len(ds.group_items) > 0
    if args.synthesize_groups and had_group_edges:
        raise ValueError(
            "dataset already ships group-item interactions; refusing to synthesize over them"
        )

    ds.user_items = split_holdout(ds.user_items, args.seed)
    if args.synthesize_groups:
        ds.group_items = synthesize_group_items(ds, cap=args.cap)
    if len(ds.group_items):
        ds.group_items = split_holdout(ds.group_items, args.seed + 1)

    if out_dir != args.data:
        save_dataset(ds, out_dir)
    elif args.synthesize_groups:
        # only the synthesized file is new; the rest is already in place
        with open(os.path.join(out_dir, GROUP_EDGES_FILE), "w") as f:
            for g, v in zip(ds.group_items.anchors, ds.group_items.items):
                f.write(f"{g}\t{v}\n")
    write_splits(ds.user_items, os.path.join(out_dir, "splits_user.tsv"))
    if len(ds.group_items):
        write_splits(ds.group_items, os.path.join(out_dir, "splits_group.tsv"))

    write_manifest(out_dir, "prepare", {"cap": args.cap}, ds.fingerprint(), [args.seed], args.argv_used)
    print(
        f"prepared {out_dir}: {ds.n_users} users, {ds.n_items} items, "
        f"{ds.n_groups} groups, {len(ds.user_items)} user edges, "
        f"{len(ds.group_items)} group edges"
    )
    return 0


def cmd_train(args):
    cfg = load_config(args)
    ds = load_prepared(args.data)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    trainer = Trainer(ds, cfg)
    result = trainer.train(log_path=os.path.join(args.out, "train_log.csv"))
    wall = time.perf_counter() - t0
    ckpt_path = os.path.join(args.out, "best.ckpt")
    # timing is deliberately absent: same-seed runs must rewrite this file byte for byte
    save_checkpoint(
        ckpt_path,
        cfg.as_dict(),
        trainer.model.named_params_data(),
        meta={
            "best_epoch": result.best_epoch,
            "best_metric": result.best_metric,
            "epochs_run": result.epochs_run,
            "stopped_early": result.stopped_early,
            "dataset_fingerprint": ds.fingerprint(),
        },
    )
    write_manifest(args.out, "train", cfg.as_dict(), ds.fingerprint(), [cfg.seed], args.argv_used)
    print(
        f"trained {result.epochs_run} epochs in {wall:.1f}s; "
        f"best val ndcg@10 {result.best_metric:.4f} at epoch {result.best_epoch}; "
        f"checkpoint {ckpt_path}"
    )
    return 0


def _tasks_of(arg):
    if arg == "both":
        return ("user", "group")
    if arg in ("user", "group"):
        return (arg,)
    raise ValueError(f"--task must be user, group, or both, got {arg!r}")


def cmd_eval(args):
    ds = load_prepared(args.data)
    ks = parse_ks(args.k)
    tasks = _tasks_of(args.task)
    if bool(args.checkpoint) == (args.baseline is not None):
        raise ValueError("pass either --checkpoint paths or --baseline, not both or neither")

    t0 = time.perf_counter()
    rows = []
    similarity = None
    config_echo = {}
    seeds = []
    if args.baseline == "popularity":
        for seed in range(args.seeds):
            seeds.append(seed)
            for task in tasks:
                metrics, n = evaluate_popularity(ds, task, ks=ks)
                if n == 0:
                    raise ValueError(f"no {task} anchors with test edges")
                rows.extend(metric_rows(task, metrics, seed))
        config_echo = {"baseline": "popularity"}
    else:
        for path in args.checkpoint:
            cfg_dict, arrays, _meta = load_checkpoint(path)
            cfg = TrainConfig.from_dict(cfg_dict)
            model = build_model_from_arrays(ds, cfg, arrays)
            state = model.forward()
            seed = cfg.seed
            seeds.append(seed)
            for task in tasks:
                metrics, n = evaluate_ranking(model, ds, task, ks=ks, state=state)
                if n == 0:
                    raise ValueError(f"no {task} anchors with test edges")
                rows.extend(metric_rows(task, metrics, seed))
            if similarity is None and state.interests is not None:
                similarity = model.interest_similarity(state)
            config_echo = cfg.as_dict()

    summary = export_report(
        rows,
        config_echo,
        os.path.basename(os.path.normpath(args.data)),
        time.perf_counter() - t0,
        args.out,
        similarity=similarity,
    )
    write_manifest(args.out, "eval", config_echo, ds.fingerprint(), seeds, args.argv_used)
    for task, metrics in sorted(summary["results"].items()):
        parts = ", ".join(
            f"{key} {val['mean']:.4f}±{val['std']:.4f}" for key, val in sorted(metrics.items())
        )
        print(f"{task}: {parts}")
    return 0


def _train_and_validate(ds, cfg, out_dir=None):
    trainer = Trainer(ds, cfg)
    log_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "train_log.csv")
    result = trainer.train(log_path=log_path)
    return trainer, result


SENSITIVITY_AXES = (
    "n_interests",
    "interest_reg_weight",
    "sim_threshold",
    "temperature",
    "user_task_weight",
)


def cmd_sweep(args):
    if args.budget < 1:
        raise ValueError("--budget must be >= 1")
    cfg = load_config(args)
    ds = load_prepared(args.data)
    with open(args.grid) as f:
        grid = json.load(f)
    if not isinstance(grid, dict) or not grid:
        raise ValueError("grid file must map config keys to value lists")
    axes = sorted(grid)
    points = list(itertools.product(*(grid[a] for a in axes)))[: args.budget]
    seeds = [cfg.seed + i for i in range(args.seeds)]

    os.makedirs(args.out, exist_ok=True)
    trials = []
    for values in points:
        point = dict(zip(axes, values))
        vals = []
        for seed in seeds:
            trial_cfg = TrainConfig.from_dict({**cfg.as_dict(), **point, "seed": seed})
            _, result = _train_and_validate(ds, trial_cfg)
            vals.append(result.best_metric)
        trials.append((point, float(np.mean(vals)), float(np.std(vals))))
        log.info("sweep point %s: val ndcg@10 %.4f", point, trials[-1][1])

    trials.sort(key=lambda t: -t[1])
    import csv as _csv

    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as f:
        writer = _csv.writer(f)
        writer.writerow(axes + ["val_ndcg10_mean", "val_ndcg10_std"])
        for point, mean, std in trials:
            writer.writerow([point[a] for a in axes] + [f"{mean:.6f}", f"{std:.6f}"])

    for axis in axes:
        if axis not in SENSITIVITY_AXES:
            continue
        best_by_value = {}
        for point, mean, _std in trials:
            v = point[axis]
            if v not in best_by_value or mean > best_by_value[v]:
                best_by_value[v] = mean
        with open(os.path.join(args.out, f"sensitivity_{axis}.csv"), "w", newline="") as f:
            writer = _csv.writer(f)
            writer.writerow([axis, "val_ndcg10"])
            for v in sorted(best_by_value):
                writer.writerow([v, f"{best_by_value[v]:.6f}"])

    write_manifest(args.out, "sweep", cfg.as_dict(), ds.fingerprint(), seeds, args.argv_used)
    best = trials[0]
    print(f"best point {best[0]} with val ndcg@10 {best[1]:.4f} over {len(trials)} trials")
    return 0


VARIANT_LETTERS = {
    "full": "Full",
    "mean_members": "A",
    "uniform_mix": "B",
    "no_interest_reg": "C",
    "hard_select": "D",
}


def _test_metrics(trainer, ds, task, ks):
    state = trainer.model.forward()
    metrics, n = evaluate_ranking(trainer.model, ds, task, ks=ks, state=state)
    if n == 0:
        raise ValueError(f"no {task} anchors with test edges")
    return metrics


def cmd_ablate(args):
    cfg = load_config(args)
    ds = load_prepared(args.data)
    ks = parse_ks(args.k)
    seeds = [cfg.seed + i for i in range(args.seeds)]
    os.makedirs(args.out, exist_ok=True)
    import csv as _csv

    variants = [resolve_variant(v) for v in args.variants.split(",") if v]
    per_variant = {}
    rows = []
    for variant in variants:
        for seed in seeds:
            vcfg = cfg.replace(variant=variant, seed=seed).validate()
            trainer, _ = _train_and_validate(ds, vcfg)
            metrics = _test_metrics(trainer, ds, args.task, ks)
            rows.append((variant, seed, metrics))
            per_variant.setdefault(variant, []).append(metrics)
    metric_names = [f"{m}@{k}" for m in ("recall", "ndcg") for k in ks]
    with open(os.path.join(args.out, "ablation.csv"), "w", newline="") as f:
        writer = _csv.writer(f)
        writer.writerow(["variant", "letter", "seed"] + metric_names)
        for variant, seed, metrics in rows:
            writer.writerow(
                [variant, VARIANT_LETTERS[variant], seed]
                + [f"{metrics[name]:.6f}" for name in metric_names]
            )

    anchor = "ndcg@10" if 10 in ks else metric_names[-1]
    means = {
        v: {name: float(np.mean([m[name] for m in ms])) for name in metric_names}
        for v, ms in per_variant.items()
    }
    full_mean = means.get("full", {}).get(anchor)
    with open(os.path.join(args.out, "ablation_summary.csv"), "w", newline="") as f:
        writer = _csv.writer(f)
        writer.writerow(["variant", "letter"] + [f"{n}_mean" for n in metric_names] + [f"rel_delta_{anchor}_pct"])
        for variant in variants:
            delta = ""
            if full_mean:
                delta = f"{100.0 * (means[variant][anchor] - full_mean) / full_mean:.2f}"
            writer.writerow(
                [variant, VARIANT_LETTERS[variant]]
                + [f"{means[variant][nm]:.6f}" for nm in metric_names]
                + [delta]
            )

    if args.interest_modes:
        modes = [m.strip() for m in args.interest_modes.split(",") if m.strip()]
        with open(os.path.join(args.out, "interest_modes.csv"), "w", newline="") as f:
            writer = _csv.writer(f)
            writer.writerow(["mode", "interest_params", "seed"] + metric_names)
            for mode in modes:
                for seed in seeds:
                    mcfg = cfg.replace(interest_mode=mode, variant="full", seed=seed).validate()
                    trainer, _ = _train_and_validate(ds, mcfg)
                    metrics = _test_metrics(trainer, ds, args.task, ks)
                    writer.writerow(
                        [mode, trainer.model.generator.param_count(), seed]
                        + [f"{metrics[nm]:.6f}" for nm in metric_names]
                    )

    write_manifest(args.out, "ablate", cfg.as_dict(), ds.fingerprint(), seeds, args.argv_used)
    print(f"ablation over {variants} written to {args.out}")
    return 0


def cmd_synth(args):
    ds, labels = generate_synthetic(
        args.users,
        args.items,
        args.groups,
        args.interests,
        args.noise,
        args.seed,
        edges_per_user=args.edges_per_user,
    )
    save_dataset(ds, args.out)
    with open(os.path.join(args.out, "labels.json"), "w") as f:
        json.dump(
            {
                "user_interests": [list(t) for t in labels.user_interests],
                "group_interest": labels.group_interest.tolist(),
                "item_block": labels.item_block.tolist(),
            },
            f,
        )
        f.write("\n")
    knobs = {
        "users": args.users,
        "items": args.items,
        "groups": args.groups,
        "interests": args.interests,
        "noise": args.noise,
        "edges_per_user": args.edges_per_user,
    }
    write_manifest(args.out, "synth", knobs, ds.fingerprint(), [args.seed], args.argv_used)
    print(f"synthetic world at {args.out}: {ds.n_users} users, {ds.n_items} items, {ds.n_groups} groups")
    return 0


def add_config_args(p):
    p.add_argument("--config", help="JSON config file; defaults apply when omitted")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="grouprec", description="Group-aware multi-interest recommender toolkit"
    )
    parser.add_argument("--version", action="version", version=f"grouprec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="split a canonical dataset directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", help="write prepared copy here instead of in place")
    p.add_argument("--synthesize-groups", action="store_true")
    p.add_argument("--cap", type=int, default=30, help="max synthesized items per group")
    p.add_argument("--subsample", type=float, default=None, metavar="FRACTION")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank-based evaluation of checkpoints or a baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", nargs="*", default=[], help="one row per checkpoint")
    p.add_argument("--baseline", choices=["popularity"], default=None)
    p.add_argument("--task", default="both")
    p.add_argument("--k", default="5,10")
    p.add_argument("--seeds", type=int, default=1, help="baseline repetition count")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid search ranked by validation ndcg@10")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", required=True, help="JSON file mapping config keys to value lists")
    p.add_argument("--budget", type=int, default=10**6, help="max grid points to run")
    p.add_argument("--seeds", type=int, default=1, help="seeds per grid point")
    add_config_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="train and compare model variants")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variants", default="Full,A,B,C,D")
    p.add_argument("--interest-modes", default=None, help="e.g. gate,fc1,fc2,table")
    p.add_argument("--task", default="user", choices=["user", "group"])
    p.add_argument("--k", default="5,10")
    p.add_argument("--seeds", type=int, default=1)
    add_config_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate a planted-interest synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=100)
    p.add_argument("--items", type=int, default=120)
    p.add_argument("--groups", type=int, default=20)
    p.add_argument("--interests", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--edges-per-user", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    level = os.environ.get("GROUPREC_LOG", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    args.argv_used = list(sys.argv[1:] if argv is None else argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a parseable failure line, not a traceback
        log.debug("command failed", exc_info=True)
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
