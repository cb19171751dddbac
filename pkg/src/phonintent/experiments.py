"""Experiment grids: context-size sweeps, train-size scaling, k-fold
cross-validation, and report/plot emission.

Reports are pure functions of the per-run results: re-aggregating the CSV
reproduces every mean and std in the summary. Row order is grid order, then
seed, so repeated runs emit byte-identical files.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (
    Dataset,
    FeatureTable,
    build_label_vocab,
    kfold_split,
    subsample_per_class,
)
from .errors import DataError
from .frontend import FEATURE_DIM, PHONE_EMBED_DIM, FrontEndKind, FrontendSpec, allo_data_dim
from .net import ModelConfig, receptive_field
from .optim import TrainHyper
from .trainer import Setup, evaluate, predictions, run_seeds, train

CSV_HEADER = "experiment,dataset,frontend,config,receptive_field,split,fold,seed,accuracy"

# Published reference accuracies (largest-context configuration C5) for the
# English / Sinhala / Tamil corpora the protocols here were designed around.
# Desk-scale synthetic runs are not expected to reproduce them; they travel
# with every summary so results on the real corpora have a comparison point.
REFERENCE_TARGETS = {
    "phone": {"english": 0.9299, "sinhala": 0.9705, "tamil": 0.9725},
    "panphone": {"english": 0.9296, "sinhala": 0.9736, "tamil": 0.9775},
    "allo": {"english": 0.9908, "sinhala": 0.9942, "tamil": 0.9850},
}

RECEPTIVE_FIELD_NOTE = (
    "Configurations C3 and C5 are often tabulated with context sizes 17 and 41; "
    "the stride-1 receptive-field formula rf = 1 + sum((k-1)*d) gives 21 and 61 "
    "for those kernel/dilation stacks. Reports carry the computed values."
)


@dataclass(frozen=True)
class NamedConfig:
    name: str
    kernels: tuple[int, int, int, int]
    dilations: tuple[int, int, int, int]

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.kernels, self.dilations)


CONFIGS = {
    "C1": NamedConfig("C1", (1, 1, 1, 1), (1, 1, 1, 1)),
    "C2": NamedConfig("C2", (3, 3, 3, 3), (1, 1, 1, 1)),
    "C3": NamedConfig("C3", (3, 3, 3, 3), (1, 2, 3, 4)),
    "C4": NamedConfig("C4", (3, 5, 7, 9), (1, 1, 1, 1)),
    "C5": NamedConfig("C5", (3, 5, 7, 9), (1, 2, 3, 4)),
}


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    dataset: str
    frontend: str
    config: str
    receptive_field: int
    split: int | None
    fold: int | None
    seed: int
    accuracy: float


@dataclass
class ExperimentReport:
    rows: list[ResultRow] = field(default_factory=list)

    def cells(self) -> list[dict]:
        """Mean/std aggregates per grid cell (seeds and folds pooled),
        in first-appearance order."""
        groups: dict[tuple, list[float]] = {}
        meta: dict[tuple, ResultRow] = {}
        for row in self.rows:
            key = (row.experiment, row.dataset, row.frontend, row.config, row.split)
            groups.setdefault(key, []).append(row.accuracy)
            meta.setdefault(key, row)
        out = []
        for key, accs in groups.items():
            row = meta[key]
            arr = np.array(accs)
            out.append(
                {
                    "experiment": row.experiment,
                    "dataset": row.dataset,
                    "frontend": row.frontend,
                    "config": row.config,
                    "receptive_field": row.receptive_field,
                    "split": row.split,
                    "n_runs": len(accs),
                    "mean": float(arr.mean()),
                    "std": float(arr.std()),
                }
            )
        return out


@dataclass
class GridSettings:
    """Knobs shared by every cell of a grid."""

    hyper: TrainHyper = field(default_factory=TrainHyper)
    channels: int = 128
    dropout: float = 0.3
    table: FeatureTable | None = None
    standardize_allo: bool = False
    jobs: int = 1
    dataset_name: str | None = None


def _frontend_spec(kind: FrontEndKind, settings: GridSettings) -> FrontendSpec:
    return FrontendSpec(kind, table=settings.table, standardize_allo=settings.standardize_allo)


def _input_dim(kind: FrontEndKind, train_ds: Dataset) -> int:
    if kind is FrontEndKind.PHONE:
        return PHONE_EMBED_DIM
    if kind is FrontEndKind.PANPHONE:
        return FEATURE_DIM
    return allo_data_dim(train_ds)


def _model_config(named: NamedConfig, kind: FrontEndKind, train_ds: Dataset,
                  n_classes: int, settings: GridSettings) -> ModelConfig:
    return ModelConfig(
        kernels=named.kernels,
        dilations=named.dilations,
        channels=settings.channels,
        dropout_rate=settings.dropout,
        input_dim=_input_dim(kind, train_ds),
        n_classes=n_classes,
    )


def _map_jobs(worker, jobs, n_workers: int):
    if n_workers <= 1:
        return [worker(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(worker, jobs))


def sweep_context(
    train_ds: Dataset,
    evalset: Dataset,
    frontends,
    configs,
    seeds,
    settings: GridSettings,
    dev: Dataset | None = None,
) -> ExperimentReport:
    """Full frontends x configs x seeds grid on a fixed train/eval split."""
    configs = list(configs)
    if not configs:
        raise DataError("at least one configuration is required")
    name = settings.dataset_name or train_ds.name
    n_classes = len(build_label_vocab(train_ds))
    grid = [
        (kind, named, seed) for kind in frontends for named in configs for seed in seeds
    ]

    def worker(job):
        kind, named, seed = job
        cfg = _model_config(named, kind, train_ds, n_classes, settings)
        model, _ = train(train_ds, dev, _frontend_spec(kind, settings), cfg,
                         settings.hyper, seed)
        return evaluate(model, evalset)

    accs = _map_jobs(worker, grid, settings.jobs)
    report = ExperimentReport()
    for (kind, named, seed), acc in zip(grid, accs):
        report.rows.append(
            ResultRow("context_sweep", name, kind.value, named.name,
                      named.receptive_field, None, None, seed, acc)
        )
    return report


def sweep_size(
    pool_ds: Dataset,
    evalset: Dataset,
    kind: FrontEndKind,
    named: NamedConfig,
    seeds,
    settings: GridSettings,
    splits=(32, 64, 128, 256, 512),
    subsample_seed: int = 0,
) -> ExperimentReport:
    """Train-size scaling: subsample the pool per class, evaluate on a fixed set."""
    name = settings.dataset_name or pool_ds.name
    n_classes = len(build_label_vocab(pool_ds))
    grid = []
    for split in splits:
        sub = subsample_per_class(pool_ds, split, subsample_seed)
        for seed in seeds:
            grid.append((split, sub, seed))

    def worker(job):
        split, sub, seed = job
        cfg = _model_config(named, kind, sub, n_classes, settings)
        model, _ = train(sub, None, _frontend_spec(kind, settings), cfg,
                         settings.hyper, seed)
        return evaluate(model, evalset)

    accs = _map_jobs(worker, grid, settings.jobs)
    report = ExperimentReport()
    for (split, _, seed), acc in zip(grid, accs):
        report.rows.append(
            ResultRow("size_sweep", name, kind.value, named.name,
                      named.receptive_field, split, None, seed, acc)
        )
    return report


@dataclass
class CVResult:
    mean_accuracy: float
    fold_accuracies: list[float]
    fold_sizes: list[int]
    predictions: list[tuple[str, str, str]]  # (utterance id, true, predicted)
    report: ExperimentReport


def cross_validate(
    dataset: Dataset,
    k: int,
    kind: FrontEndKind,
    named: NamedConfig,
    seed: int,
    settings: GridSettings,
) -> CVResult:
    """Rotate over k folds; every utterance is predicted exactly once.

    The label vocabulary is built from the full dataset so every fold shares
    one index space; phone vocabularies are still fit per training fold. The
    mean is weighted by fold size, which equals a recount over the pooled
    per-example predictions.
    """
    labels = build_label_vocab(dataset)
    plan = kfold_split(dataset, k, seed)
    folds = [
        [i for i, u in enumerate(dataset.utterances) if plan.assignment[u.id] == f]
        for f in range(k)
    ]

    def worker(fold):
        test_idx = folds[fold]
        train_idx = [i for f in range(k) if f != fold for i in folds[f]]
        train_ds = dataset.subset(sorted(train_idx), name=f"{dataset.name}-fold{fold}-train")
        test_ds = dataset.subset(sorted(test_idx), name=f"{dataset.name}-fold{fold}-test")
        cfg = _model_config(named, kind, train_ds, len(labels), settings)
        model, _ = train(train_ds, None, _frontend_spec(kind, settings), cfg,
                         settings.hyper, seed, labels=labels)
        return predictions(model, test_ds)

    per_fold = _map_jobs(worker, range(k), settings.jobs)
    fold_accs = []
    fold_sizes = []
    pooled = []
    report = ExperimentReport()
    for fold, preds in enumerate(per_fold):
        correct = sum(1 for _, true, pred in preds if true == pred)
        acc = correct / len(preds)
        fold_accs.append(acc)
        fold_sizes.append(len(preds))
        pooled.extend(preds)
        report.rows.append(
            ResultRow("cv", dataset.name, kind.value, named.name,
                      named.receptive_field, None, fold, seed, acc)
        )
    mean = sum(a * n for a, n in zip(fold_accs, fold_sizes)) / sum(fold_sizes)
    return CVResult(mean, fold_accs, fold_sizes, pooled, report)


# ---------------------------------------------------------------------------
# Emission


def _csv_cell(value) -> str:
    return "" if value is None else str(value)


def emit_report(report: ExperimentReport, out_dir, notes=()) -> tuple[Path, Path]:
    """Write report.csv (one row per run) and summary.json (per-cell mean/std,
    notes, and the published reference targets)."""
    if not report.rows:
        raise DataError("report has no rows")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(
            ",".join(
                [
                    r.experiment,
                    r.dataset,
                    r.frontend,
                    r.config,
                    str(r.receptive_field),
                    _csv_cell(r.split),
                    _csv_cell(r.fold),
                    str(r.seed),
                    str(r.accuracy),
                ]
            )
        )
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    summary = {
        "cells": report.cells(),
        "notes": [RECEPTIVE_FIELD_NOTE, *notes],
        "reference_targets": REFERENCE_TARGETS,
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, summary_path


_COLORS = {
    "phone": "#1f77b4",
    "panphone": "#d62728",
    "allo": "#2ca02c",
}
_FALLBACK_COLORS = ("#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def emit_plot(report: ExperimentReport, out_path) -> Path:
    """Render per-cell means as a self-contained SVG.

    One polyline per front-end; x is the training split when the report came
    from a size sweep, the computed context size otherwise; whiskers show one
    population std over runs.
    """
    cells = report.cells()
    if not cells:
        raise DataError("report has no cells to plot")
    size_sweep = any(c["split"] is not None for c in cells)
    x_label = "split" if size_sweep else "context size"

    series: dict[str, list[tuple[float, float, float]]] = {}
    for c in cells:
        x = c["split"] if size_sweep else c["receptive_field"]
        series.setdefault(c["frontend"], []).append((float(x), c["mean"], c["std"]))
    for pts in series.values():
        pts.sort(key=lambda p: p[0])

    width, height = 640, 440
    left, right, top, bottom = 70, 500, 30, 380
    xs = [p[0] for pts in series.values() for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * (right - left)

    def sy(y):
        return bottom - y * (bottom - top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        parts.append(f'<line x1="{left - 4}" y1="{_fmt(y)}" x2="{left}" y2="{_fmt(y)}" stroke="black"/>')
        parts.append(
            f'<text x="{left - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{tick:g}</text>'
        )
    for x in sorted({p for p in xs}):
        px = sx(x)
        parts.append(f'<line x1="{_fmt(px)}" y1="{bottom}" x2="{_fmt(px)}" y2="{bottom + 4}" stroke="black"/>')
        parts.append(
            f'<text x="{_fmt(px)}" y="{bottom + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{x:g}</text>'
        )
    parts.append(
        f'<text x="{(left + right) // 2}" y="{bottom + 38}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{x_label}</text>'
    )
    parts.append(
        f'<text x="18" y="{(top + bottom) // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {(top + bottom) // 2})">accuracy</text>'
    )

    fallback = iter(_FALLBACK_COLORS)
    legend_y = top + 10
    for frontend, pts in series.items():
        color = _COLORS.get(frontend) or next(fallback)
        for x, mean, std in pts:
            px, py = sx(x), sy(mean)
            if std > 0:
                y_hi, y_lo = sy(min(1.0, mean + std)), sy(max(0.0, mean - std))
                parts.append(
                    f'<line x1="{_fmt(px)}" y1="{_fmt(y_hi)}" x2="{_fmt(px)}" y2="{_fmt(y_lo)}" '
                    f'stroke="{color}" stroke-width="1"/>'
                )
                for wy in (y_hi, y_lo):
                    parts.append(
                        f'<line x1="{_fmt(px - 3)}" y1="{_fmt(wy)}" x2="{_fmt(px + 3)}" y2="{_fmt(wy)}" '
                        f'stroke="{color}" stroke-width="1"/>'
                    )
        if len(pts) > 1:
            coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(m))}" for x, m, _ in pts)
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        for x, mean, _ in pts:
            parts.append(
                f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(mean))}" r="3" fill="{color}"/>'
            )
        parts.append(
            f'<line x1="{right + 12}" y1="{legend_y}" x2="{right + 34}" y2="{legend_y}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{right + 40}" y="{legend_y + 4}" font-family="sans-serif" '
            f'font-size="12">{frontend}</text>'
        )
        legend_y += 18
    parts.append("</svg>")

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out_path
