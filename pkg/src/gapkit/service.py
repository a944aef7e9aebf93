"""FastAPI wrapper around the toolkit for multi-client use.

Run with: uvicorn gapkit.service:app

Endpoints operate on GAPEMB files reachable from the server's filesystem and
return the same JSON shapes the CLI emits.
"""

from __future__ import annotations

import os

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, conesim
from .embedstore import read_dataset, read_manifest, write_dataset
from .errors import GapkitError, NumericError, TruncatedFileError
from .geometry import AlignmentConfig, align, compute_gap
from .probe import TrainConfig, evaluate_auc, train_probe
from .sweep import SweepConfig, aggregate_csv, derive_cell_seed, run_sweep

app = FastAPI(title="gapkit", version=__version__)


class TrainOptions(BaseModel):
    learning_rate: float = 3e-4
    momentum: float = 0.9
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    val_fraction: float = 0.1
    class_weighted: bool = True

    def to_config(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(seed=seed, **self.model_dump())


class AnalyzeRequest(BaseModel):
    data_path: str
    split: str = "train"


class GeometryResponse(BaseModel):
    dataset: str | None
    backbone: str | None
    split: str
    gap_norm: float
    r_image: float
    r_text: float
    mu_norms: dict
    n: int


class AlignRequest(BaseModel):
    data_path: str
    lam: float = Field(alias="lambda", ge=0.0, le=1.0)
    out_path: str

    model_config = {"populate_by_name": True}


class AlignResponse(BaseModel):
    out_path: str
    lam: float = Field(serialization_alias="lambda")
    delta_norm: float


class ProbeRequest(BaseModel):
    data_path: str
    lam: float = Field(default=0.0, alias="lambda", ge=0.0, le=1.0)
    seed: int = 0
    train: TrainOptions = TrainOptions()

    model_config = {"populate_by_name": True}


class ProbeResponse(BaseModel):
    lam: float = Field(serialization_alias="lambda")
    seed: int
    overall_auc: float
    per_class_auc: list
    excluded_classes: list
    best_epoch: int


class SweepRequest(BaseModel):
    data_path: str
    lambdas: list[float] = Field(default=[round(0.1 * i, 3) for i in range(11)])
    seeds: list[int] = Field(default=[0, 1, 2, 3, 4])
    workers: int = 1
    train: TrainOptions = TrainOptions()
    out_path: str | None = None
    csv_path: str | None = None


def _load(path: str):
    if not os.path.exists(path):
        raise HTTPException(status_code=404, detail=f"no such file: {path}")
    try:
        return read_dataset(path)
    except TruncatedFileError as exc:
        raise HTTPException(status_code=500, detail=str(exc))
    except GapkitError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NumericError as exc:
        raise HTTPException(status_code=500, detail=str(exc))
    except GapkitError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.get("/health")
def health():
    return {"status": "ok"}


@app.get("/version")
def version():
    return {"tool": "gapkit", "version": __version__}


@app.post("/analyze", response_model=GeometryResponse)
def analyze(req: AnalyzeRequest):
    ds = _load(req.data_path)
    manifest = read_manifest(req.data_path)
    geo = _guard(compute_gap, ds, req.split)
    return GeometryResponse(
        dataset=manifest.dataset if manifest else None,
        backbone=manifest.backbone if manifest else None,
        split=req.split,
        gap_norm=geo.gap_norm,
        r_image=geo.r_image,
        r_text=geo.r_text,
        mu_norms={
            "image": float(np.linalg.norm(geo.mu_image)),
            "text": float(np.linalg.norm(geo.mu_text)),
        },
        n=geo.n_samples,
    )


@app.post("/align", response_model=AlignResponse)
def align_endpoint(req: AlignRequest):
    ds = _load(req.data_path)
    geo = _guard(compute_gap, ds, "train")
    aligned = _guard(align, ds, AlignmentConfig(lam=req.lam, delta=geo.delta))
    manifest = read_manifest(req.data_path)
    if manifest is not None:
        manifest.extra = dict(manifest.extra, aligned_lambda=req.lam)
    write_dataset(aligned, req.out_path, manifest)
    return AlignResponse(out_path=req.out_path, lam=req.lam, delta_norm=geo.gap_norm)


@app.post("/probe", response_model=ProbeResponse)
def probe_endpoint(req: ProbeRequest):
    ds = _load(req.data_path)
    geo = _guard(compute_gap, ds, "train")
    aligned = _guard(align, ds, AlignmentConfig(lam=req.lam, delta=geo.delta))
    cfg = req.train.to_config(seed=derive_cell_seed(req.seed, req.lam))
    model, history = _guard(train_probe, aligned, cfg)
    overall, per_class, excluded = _guard(evaluate_auc, model, aligned, "test")
    return ProbeResponse(
        lam=req.lam,
        seed=req.seed,
        overall_auc=overall,
        per_class_auc=[None if np.isnan(x) else float(x) for x in per_class],
        excluded_classes=excluded,
        best_epoch=history.best_epoch,
    )


@app.post("/sweep")
def sweep_endpoint(req: SweepRequest):
    ds = _load(req.data_path)
    cfg = _guard(
        SweepConfig,
        lambdas=tuple(req.lambdas),
        seeds=tuple(req.seeds),
        train=req.train.to_config(),
        workers=req.workers,
    )
    report = _guard(run_sweep, ds, cfg)
    payload = report.to_dict()
    if req.out_path:
        import json

        with open(req.out_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    if req.csv_path:
        with open(req.csv_path, "w", encoding="utf-8") as fh:
            fh.write(aggregate_csv(report))
    return payload


class InfoNceRequest(BaseModel):
    batch_size: int = 32
    dim: int = 16
    temperature: float = 0.07
    seed: int = 0


@app.post("/simulate/infonce")
def simulate_infonce(req: InfoNceRequest):
    rng = np.random.default_rng(req.seed)
    v = rng.standard_normal((req.batch_size, req.dim))
    t = rng.standard_normal((req.batch_size, req.dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    b = _guard(conesim.infonce_decomposed, v, t, req.temperature)
    return {
        "total_loss": b.total_loss,
        "attraction": b.attraction,
        "repulsion": b.repulsion,
        "temperature": b.temperature,
        "batch_size": b.batch_size,
    }


class ConeRequest(BaseModel):
    depths: list[int] = [0, 1, 2, 4, 8]
    width: int = 64
    input_dim: int = 64
    n_samples: int = 1000
    activation: str = "relu"
    seeds: list[int] = [0, 1, 2]


@app.post("/simulate/cone")
def simulate_cone(req: ConeRequest):
    rows = []
    for depth in req.depths:
        for seed in req.seeds:
            rng = np.random.default_rng(derive_cell_seed(seed, 0.0) ^ depth)
            inputs = rng.standard_normal((req.n_samples, req.input_dim))
            spec = conesim.RandomNetSpec(
                depth=depth, width=req.width, input_dim=req.input_dim,
                activation=req.activation, seed=seed,
            )
            emb = _guard(conesim.random_net_forward, spec, inputs)
            r, cos = _guard(conesim.cone_metrics, emb)
            rows.append(
                {"depth": depth, "seed": seed, "r": r, "mean_pairwise_cosine": cos}
            )
    return {"results": rows}
