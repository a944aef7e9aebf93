"""gapctl: command-line front end for the toolkit.

Exit codes: 0 success, 1 validation/usage error, 2 runtime or numeric error.
All output files are written atomically (temp file + rename). Every JSON
report embeds the tool version and the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np

from . import __version__
from .embedstore import read_dataset, read_manifest, write_dataset
from .errors import GapkitError, NumericError, ParameterError, TruncatedFileError
from .geometry import (
    AlignmentConfig,
    align,
    compute_gap,
    pca_project,
)
from .probe import TrainConfig, evaluate_auc, train_probe
from .sweep import (
    DEFAULT_LAMBDAS,
    SweepConfig,
    SweepReport,
    _aggregate_cells,
    aggregate_csv,
    derive_cell_seed,
    flat_csv,
    run_sweep,
)
from . import conesim

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the CLI contract wants 1.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def write_text_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gapctl-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(payload: str, out: str | None) -> None:
    if out:
        write_text_atomic(out, payload)
    else:
        sys.stdout.write(payload)
        if not payload.endswith("\n"):
            sys.stdout.write("\n")


def _json_report(body: dict, config: dict) -> str:
    report = {"schema_version": SCHEMA_VERSION, "tool_version": __version__}
    report.update(body)
    report["config"] = config
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def parse_lambda_grid(text: str) -> list[float]:
    """Either 'start:end:step' or a comma list; values rounded to 3 decimals."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParameterError(f"grid {text!r} is not start:end:step")
        start, end, step = (float(p) for p in parts)
        if step <= 0:
            raise ParameterError(f"grid step must be > 0, got {step}")
        values = []
        i = 0
        while True:
            v = round(start + i * step, 3)
            if v > end + 1e-9:
                break
            values.append(v)
            i += 1
    else:
        values = [round(float(p), 3) for p in text.split(",") if p.strip()]
    if not values:
        raise ParameterError(f"lambda grid {text!r} is empty")
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ParameterError(f"lambda {v} outside [0, 1]")
    return values


def parse_seeds(text: str) -> list[int]:
    """A bare integer K means seeds {0..K-1}; otherwise a comma list."""
    if "," in text:
        return [int(p) for p in text.split(",") if p.strip()]
    count = int(text)
    if count < 1:
        raise ParameterError(f"seed count must be >= 1, got {count}")
    return list(range(count))


def _check_lambda(value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"lambda={value} outside [0, 1]")
    return value


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--no-class-weights", action="store_true",
                   help="disable inverse-frequency class weighting")


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=seed,
        val_fraction=args.val_fraction,
        class_weighted=not args.no_class_weights,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gapctl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gapctl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="geometry report for one split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train", choices=["train", "val", "test", "all"])
    p.add_argument("--out")

    p = sub.add_parser("project", help="PCA projection CSV of pooled embeddings")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=2, choices=[2, 3])
    p.add_argument("--out")

    p = sub.add_parser("align", help="write a lambda-aligned copy of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("probe", help="train and evaluate one linear probe")
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_train_flags(p)

    p = sub.add_parser("sweep", help="lambda grid x seeds protocol")
    p.add_argument("--data", required=True)
    p.add_argument("--lambdas", default="0:1:0.1",
                   help="start:end:step or comma list")
    p.add_argument("--seeds", default="5", help="count K (seeds 0..K-1) or comma list")
    p.add_argument("--workers", type=int,
                   default=int(os.environ.get("GAPCTL_WORKERS", "1")))
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="basename for <csv>.cells.csv and <csv>.agg.csv")
    _add_train_flags(p)

    p = sub.add_parser("simulate", help="synthetic theory reproductions")
    sim = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)

    q = sim.add_parser("cone", help="cone effect vs depth in random networks")
    q.add_argument("--depths", default="0,1,2,4,8,16")
    q.add_argument("--width", type=int, default=64)
    q.add_argument("--input-dim", type=int, default=64)
    q.add_argument("--n-samples", type=int, default=2000)
    q.add_argument("--activation", default="relu",
                   choices=list(conesim.ACTIVATIONS))
    q.add_argument("--seeds", default="10")
    q.add_argument("--out")

    q = sim.add_parser("variance", help="law-of-total-variance decomposition")
    q.add_argument("--depth", type=int, default=2)
    q.add_argument("--width", type=int, default=32)
    q.add_argument("--input-dim", type=int, default=16)
    q.add_argument("--activation", default="tanh",
                   choices=list(conesim.ACTIVATIONS))
    q.add_argument("--clusters", type=int, default=4)
    q.add_argument("--spread", type=float, default=1.0)
    q.add_argument("--n-samples", type=int, default=500)
    q.add_argument("--weight-draws", type=int, default=8)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")

    q = sim.add_parser("infonce", help="attraction/repulsion decomposition")
    q.add_argument("--batch-size", type=int, default=32)
    q.add_argument("--dim", type=int, default=16)
    q.add_argument("--temperature", type=float, default=0.07)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")

    q = sim.add_parser("toyclip", help="toy contrastive training, gap trajectory")
    q.add_argument("--n-samples", type=int, default=256)
    q.add_argument("--input-dim", type=int, default=16)
    q.add_argument("--width", type=int, default=16)
    q.add_argument("--depth", type=int, default=2)
    q.add_argument("--steps", type=int, default=2000)
    q.add_argument("--temperature", type=float, default=0.07)
    q.add_argument("--lr", type=float, default=0.1)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")
    q.add_argument("--csv", help="trajectory CSV path")

    p = sub.add_parser("report", help="re-aggregate an existing sweep report")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out")
    p.add_argument("--csv")

    return parser


def cmd_analyze(args) -> None:
    ds = read_dataset(args.data)
    manifest = read_manifest(args.data)
    geo = compute_gap(ds, args.split)
    body = {
        "dataset": manifest.dataset if manifest else None,
        "backbone": manifest.backbone if manifest else None,
        "split": args.split,
        "gap_norm": geo.gap_norm,
        "r_image": geo.r_image,
        "r_text": geo.r_text,
        "mu_norms": {
            "image": float(np.linalg.norm(geo.mu_image)),
            "text": float(np.linalg.norm(geo.mu_text)),
        },
        "n": geo.n_samples,
    }
    _emit(_json_report(body, {"data": args.data, "split": args.split}), args.out)


def cmd_project(args) -> None:
    ds = read_dataset(args.data)
    proj = pca_project(ds, args.k)
    header = "modality,index," + ",".join(f"pc{i + 1}" for i in range(args.k))
    lines = [header]
    for name, mat in (("image", proj.projected_image), ("text", proj.projected_text)):
        for i, row in enumerate(mat):
            coords = ",".join(f"{x:.10f}" for x in row)
            lines.append(f"{name},{i},{coords}")
    _emit("\n".join(lines) + "\n", args.out)


def cmd_align(args) -> None:
    _check_lambda(args.lam)
    ds = read_dataset(args.data)
    geo = compute_gap(ds, "train")
    aligned = align(ds, AlignmentConfig(lam=args.lam, delta=geo.delta))
    manifest = read_manifest(args.data)
    if manifest is not None:
        manifest.extra = dict(manifest.extra, aligned_lambda=args.lam)
    write_dataset(aligned, args.out, manifest)
    sys.stdout.write(
        json.dumps({"out": args.out, "lambda": args.lam, "delta_norm": geo.gap_norm})
        + "\n"
    )


def cmd_probe(args) -> None:
    _check_lambda(args.lam)
    ds = read_dataset(args.data)
    geo = compute_gap(ds, "train")
    aligned = align(ds, AlignmentConfig(lam=args.lam, delta=geo.delta))
    effective_seed = derive_cell_seed(args.seed, args.lam)
    cfg = _train_config(args, effective_seed)
    model, history = train_probe(aligned, cfg)
    overall, per_class, excluded = evaluate_auc(model, aligned, "test")
    config = {
        "data": args.data,
        "lambda": args.lam,
        "seed": args.seed,
        "effective_seed": effective_seed,
        "learning_rate": cfg.learning_rate,
        "momentum": cfg.momentum,
        "batch_size": cfg.batch_size,
        "patience": cfg.patience,
        "max_epochs": cfg.max_epochs,
        "val_fraction": cfg.val_fraction,
        "class_weighted": cfg.class_weighted,
    }
    body = {
        "lambda": args.lam,
        "seed": args.seed,
        "overall_auc": overall,
        "per_class_auc": [None if np.isnan(x) else float(x) for x in per_class],
        "excluded_classes": excluded,
        "best_epoch": history.best_epoch,
        "epochs_run": history.epochs_run,
    }
    _emit(_json_report(body, config), args.out)


def cmd_sweep(args) -> None:
    ds = read_dataset(args.data)
    cfg = SweepConfig(
        lambdas=tuple(parse_lambda_grid(args.lambdas)),
        seeds=tuple(parse_seeds(args.seeds)),
        train=_train_config(args, 0),
        workers=args.workers,
    )
    report = run_sweep(ds, cfg)
    report.config["data"] = args.data
    write_text_atomic(
        args.out, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    if args.csv:
        write_text_atomic(args.csv + ".cells.csv", flat_csv(report))
        write_text_atomic(args.csv + ".agg.csv", aggregate_csv(report))
    sys.stdout.write(
        json.dumps({"out": args.out, "complete": report.complete}) + "\n"
    )


def cmd_simulate(args) -> None:
    if args.kind == "cone":
        depths = [int(d) for d in args.depths.split(",")]
        seeds = parse_seeds(args.seeds)
        rows = []
        for depth in depths:
            for seed in seeds:
                rng = np.random.default_rng(derive_cell_seed(seed, 0.0) ^ depth)
                inputs = rng.standard_normal((args.n_samples, args.input_dim))
                spec = conesim.RandomNetSpec(
                    depth=depth, width=args.width, input_dim=args.input_dim,
                    activation=args.activation, seed=seed,
                )
                emb = conesim.random_net_forward(spec, inputs)
                r, cos = conesim.cone_metrics(emb)
                rows.append(
                    {"depth": depth, "seed": seed, "r": r, "mean_pairwise_cosine": cos}
                )
        body = {"results": rows}
        config = {
            "depths": depths, "width": args.width, "input_dim": args.input_dim,
            "n_samples": args.n_samples, "activation": args.activation,
            "seeds": seeds,
        }
    elif args.kind == "variance":
        corpus = conesim.make_corpus(
            args.n_samples, args.input_dim, args.clusters, args.spread, args.seed
        )
        spec = conesim.RandomNetSpec(
            depth=args.depth, width=args.width, input_dim=args.input_dim,
            activation=args.activation, seed=args.seed,
        )
        data_term, weight_term, total = conesim.variance_decomposition(
            spec, corpus, args.weight_draws
        )
        body = {
            "data_term": data_term,
            "weight_term": weight_term,
            "total": total,
            "corpus_diversity": corpus.diversity,
        }
        config = {
            "depth": args.depth, "width": args.width, "input_dim": args.input_dim,
            "activation": args.activation, "clusters": args.clusters,
            "spread": args.spread, "n_samples": args.n_samples,
            "weight_draws": args.weight_draws, "seed": args.seed,
        }
    elif args.kind == "infonce":
        rng = np.random.default_rng(args.seed)
        v = rng.standard_normal((args.batch_size, args.dim))
        t = rng.standard_normal((args.batch_size, args.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        b = conesim.infonce_decomposed(v, t, args.temperature)
        body = {
            "total_loss": b.total_loss,
            "attraction": b.attraction,
            "repulsion": b.repulsion,
            "temperature": b.temperature,
            "batch_size": b.batch_size,
        }
        config = {
            "batch_size": args.batch_size, "dim": args.dim,
            "temperature": args.temperature, "seed": args.seed,
        }
    else:  # toyclip
        corpus_v = conesim.make_corpus(
            args.n_samples, args.input_dim, 4, 0.5, args.seed
        )
        corpus_t = conesim.make_corpus(
            args.n_samples, args.input_dim, 4, 0.5, args.seed + 1
        )
        spec_v = conesim.RandomNetSpec(
            depth=args.depth, width=args.width, input_dim=args.input_dim,
            activation="tanh", seed=args.seed,
        )
        spec_t = conesim.RandomNetSpec(
            depth=args.depth, width=args.width, input_dim=args.input_dim,
            activation="tanh", seed=args.seed + 1,
        )
        traj = conesim.train_toy_clip(
            corpus_v, corpus_t, spec_v, spec_t,
            steps=args.steps, temperature=args.temperature,
            learning_rate=args.lr, batch_size=args.n_samples,
            log_every=max(1, args.steps // 100), seed=args.seed,
        )
        if args.csv:
            lines = ["step,loss,gap_norm,r_image,r_text"]
            for rec in traj:
                loss = "" if rec["loss"] is None else f"{rec['loss']:.10f}"
                lines.append(
                    f"{rec['step']},{loss},{rec['gap_norm']:.10f},"
                    f"{rec['r_image']:.10f},{rec['r_text']:.10f}"
                )
            write_text_atomic(args.csv, "\n".join(lines) + "\n")
        body = {
            "initial_gap_norm": traj[0]["gap_norm"],
            "final_gap_norm": traj[-1]["gap_norm"],
            "steps": args.steps,
            "trajectory_points": len(traj),
        }
        config = {
            "n_samples": args.n_samples, "input_dim": args.input_dim,
            "width": args.width, "depth": args.depth, "steps": args.steps,
            "temperature": args.temperature, "lr": args.lr, "seed": args.seed,
        }
    _emit(_json_report(body, config), args.out)


def cmd_report(args) -> None:
    with open(args.infile, encoding="utf-8") as fh:
        report = SweepReport.from_dict(json.load(fh))
    report.verify_aggregates()
    geometry_keys = ("gap_norm_prenorm", "gap_norm_post", "r_image", "r_text")
    geometry = {
        a["lambda"]: {k: a[k] for k in geometry_keys if k in a}
        for a in report.aggregates
    }
    report.aggregates = _aggregate_cells(report.cells)
    for agg in report.aggregates:
        agg.update(geometry.get(agg["lambda"], {}))
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    _emit(payload, args.out)
    if args.csv:
        write_text_atomic(args.csv + ".cells.csv", flat_csv(report))
        if all("gap_norm_prenorm" in a for a in report.aggregates):
            write_text_atomic(args.csv + ".agg.csv", aggregate_csv(report))


_COMMANDS = {
    "analyze": cmd_analyze,
    "project": cmd_project,
    "align": cmd_align,
    "probe": cmd_probe,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        _COMMANDS[args.command](args)
        return 0
    except (ParameterError, ValueError) as exc:
        print(f"gapctl: {exc}", file=sys.stderr)
        return 1
    except (NumericError, TruncatedFileError) as exc:
        print(f"gapctl: {exc}", file=sys.stderr)
        return 2
    except GapkitError as exc:
        print(f"gapctl: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"gapctl: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
