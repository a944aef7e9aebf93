"""Lambda-grid x seed sweep: align once per lambda, train one probe per seed,
aggregate to mean +/- sample std, and record per-lambda geometry.

Cell seeds depend only on (user seed, lambda value), never on scheduling or
grid position, so reports are identical for any worker count and existing
cells survive grid edits.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .embedstore import PairedEmbeddingDataset
from .errors import GapkitError, ParameterError
from .geometry import AlignmentConfig, compute_gap, align, pre_normalization_gap
from .probe import TrainConfig, evaluate_auc, train_probe

DEFAULT_LAMBDAS = tuple(round(0.1 * i, 3) for i in range(11))
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
SCHEMA_VERSION = 1


def derive_cell_seed(user_seed: int, lam: float) -> int:
    """Stable 63-bit seed from (user seed, lambda rounded to 3 decimals)."""
    digest = hashlib.blake2b(
        struct.pack("<qd", user_seed, round(lam, 3)), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)


@dataclass
class SweepConfig:
    lambdas: tuple = DEFAULT_LAMBDAS
    seeds: tuple = DEFAULT_SEEDS
    train: TrainConfig = field(default_factory=TrainConfig)
    workers: int = 1

    def __post_init__(self):
        self.lambdas = tuple(round(float(x), 3) for x in self.lambdas)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.lambdas:
            raise ParameterError("lambda grid is empty")
        for lam in self.lambdas:
            if not 0.0 <= lam <= 1.0:
                raise ParameterError(f"lambda {lam} outside [0, 1]")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ParameterError("seeds must be non-empty and distinct")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")


@dataclass
class SweepReport:
    cells: list                 # per-(lambda, seed) records, sorted
    aggregates: list            # per-lambda mean/std plus geometry
    delta_norm: float
    complete: bool
    config: dict
    schema_version: int = SCHEMA_VERSION
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "config": self.config,
            "delta_norm": self.delta_norm,
            "complete": self.complete,
            "cells": self.cells,
            "aggregates": self.aggregates,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls(
            cells=d["cells"],
            aggregates=d["aggregates"],
            delta_norm=d["delta_norm"],
            complete=d["complete"],
            config=d.get("config", {}),
            schema_version=d.get("schema_version", SCHEMA_VERSION),
            tool_version=d.get("tool_version", __version__),
        )

    def verify_aggregates(self, tol: float = 1e-9) -> None:
        """Recompute per-lambda aggregates from raw cells; raise on mismatch."""
        recomputed = {a["lambda"]: a for a in _aggregate_cells(self.cells)}
        for agg in self.aggregates:
            ref = recomputed.get(agg["lambda"])
            if ref is None:
                raise GapkitError(f"aggregate for lambda={agg['lambda']} has no cells")
            for key in ("mean_auc", "std_auc"):
                a, b = agg[key], ref[key]
                if a is None or b is None:
                    if a != b:
                        raise GapkitError(
                            f"aggregate {key} mismatch at lambda={agg['lambda']}"
                        )
                elif abs(a - b) > tol:
                    raise GapkitError(
                        f"aggregate {key} mismatch at lambda={agg['lambda']}: "
                        f"{a} vs {b}"
                    )


def aggregate(values) -> tuple[float, float]:
    """Arithmetic mean and sample (n-1) standard deviation; std 0 when n = 1."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ParameterError("aggregate needs at least one value")
    mean = float(arr.mean())
    std = 0.0 if arr.size == 1 else float(arr.std(ddof=1))
    return mean, std


def _aggregate_cells(cells):
    by_lambda = {}
    for cell in cells:
        by_lambda.setdefault(cell["lambda"], []).append(cell)
    out = []
    for lam in sorted(by_lambda):
        ok = [c["overall_auc"] for c in by_lambda[lam] if c.get("error") is None]
        if ok:
            mean, std = aggregate(ok)
        else:
            mean, std = None, None
        out.append(
            {"lambda": lam, "mean_auc": mean, "std_auc": std, "n": len(ok)}
        )
    return out


def _run_cell(aligned: PairedEmbeddingDataset, train_template: TrainConfig,
              lam: float, seed: int) -> dict:
    record = {"lambda": lam, "seed": seed}
    try:
        cfg = replace(train_template, seed=derive_cell_seed(seed, lam))
        model, history = train_probe(aligned, cfg)
        overall, per_class, excluded = evaluate_auc(model, aligned, "test")
        record.update(
            overall_auc=overall,
            per_class_auc=[None if np.isnan(x) else float(x) for x in per_class],
            excluded_classes=excluded,
            best_epoch=history.best_epoch,
            error=None,
        )
    except GapkitError as exc:
        record.update(
            overall_auc=None,
            per_class_auc=None,
            excluded_classes=None,
            best_epoch=None,
            error=f"{type(exc).__name__}: {exc}",
        )
    return record


def run_sweep(dataset: PairedEmbeddingDataset, config: SweepConfig) -> SweepReport:
    """Full protocol: per lambda align with the train-split gap vector, then
    train/evaluate one probe per seed. Failed cells are recorded, not fatal."""
    base_gap = compute_gap(dataset, "train")
    aligned_by_lambda = {}
    geometry_by_lambda = {}
    for lam in config.lambdas:
        acfg = AlignmentConfig(lam=lam, delta=base_gap.delta)
        aligned = align(dataset, acfg)
        aligned_by_lambda[lam] = aligned
        geo = compute_gap(aligned, "train")
        geometry_by_lambda[lam] = {
            "gap_norm_prenorm": pre_normalization_gap(dataset, acfg, "train"),
            "gap_norm_post": geo.gap_norm,
            "r_image": geo.r_image,
            "r_text": geo.r_text,
        }

    tasks = [(lam, seed) for lam in config.lambdas for seed in config.seeds]
    if config.workers == 1:
        cells = [
            _run_cell(aligned_by_lambda[lam], config.train, lam, seed)
            for lam, seed in tasks
        ]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            cells = list(
                pool.map(
                    lambda t: _run_cell(
                        aligned_by_lambda[t[0]], config.train, t[0], t[1]
                    ),
                    tasks,
                )
            )
    cells.sort(key=lambda c: (c["lambda"], c["seed"]))

    aggregates = _aggregate_cells(cells)
    for agg in aggregates:
        agg.update(geometry_by_lambda[agg["lambda"]])
    complete = all(c["error"] is None for c in cells)

    cfg_dict = {
        "lambdas": list(config.lambdas),
        "seeds": list(config.seeds),
        "workers": config.workers,
        "train": {
            "learning_rate": config.train.learning_rate,
            "momentum": config.train.momentum,
            "batch_size": config.train.batch_size,
            "max_epochs": config.train.max_epochs,
            "patience": config.train.patience,
            "val_fraction": config.train.val_fraction,
            "class_weighted": config.train.class_weighted,
        },
        "seed_note": (
            "seeds affect probe shuffling and val carving only; "
            "cell seed = blake2b(user_seed, lambda)"
        ),
    }
    return SweepReport(
        cells=cells,
        aggregates=aggregates,
        delta_norm=base_gap.gap_norm,
        complete=complete,
        config=cfg_dict,
    )


def flat_csv(report: SweepReport) -> str:
    lines = ["lambda,seed,auc"]
    for cell in report.cells:
        auc = "" if cell["overall_auc"] is None else f"{cell['overall_auc']:.10f}"
        lines.append(f"{cell['lambda']},{cell['seed']},{auc}")
    return "\n".join(lines) + "\n"


def aggregate_csv(report: SweepReport) -> str:
    # gap_norm is the pre-normalization residual gap: (1 - lambda) * delta_norm,
    # measured numerically on the shifted rows, so it decreases linearly in lambda.
    lines = ["lambda,mean_auc,std_auc,gap_norm,r_image,r_text"]
    for agg in report.aggregates:
        mean = "" if agg["mean_auc"] is None else f"{agg['mean_auc']:.10f}"
        std = "" if agg["std_auc"] is None else f"{agg['std_auc']:.10f}"
        lines.append(
            f"{agg['lambda']},{mean},{std},"
            f"{agg['gap_norm_prenorm']:.10f},{agg['r_image']:.10f},{agg['r_text']:.10f}"
        )
    return "\n".join(lines) + "\n"
