"""Report assembly: category aggregation, SVG scatter plots, score figures.

SVG output is written by hand so identical inputs produce identical bytes;
the per-model score comparison figure goes through matplotlib.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import LabelVector, ModelRegistry
from .errors import NonFiniteInput, RegistryMiss

SPACES = ("original", "umap300")
TASKS = ("classification", "clustering")
CATEGORIES = ("supl", "ssl", "bird", "non-bird")

# fixed palette indexed by class; cycles past 20 classes
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5",
    "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
)


@dataclass(frozen=True)
class ModelMetrics:
    model: str
    space: str  # original | umap300
    ami: float
    balanced_macro_accuracy: float
    params_echo: dict


@dataclass(frozen=True)
class GalleryEntry:
    model: str
    ami: float  # clustering score in the original space, used for ordering
    coords: np.ndarray  # (N, 2)
    labels: LabelVector


@dataclass
class EvaluationReport:
    config_echo: dict
    metrics: list[ModelMetrics]
    categories: dict  # category -> space -> task -> {mean, members}
    scatters: list[GalleryEntry] = field(default_factory=list)


def _metric_value(m: ModelMetrics, task: str) -> float:
    return m.ami if task == "clustering" else m.balanced_macro_accuracy


def category_members(registry: ModelRegistry, category: str) -> set[str]:
    if category == "supl":
        return {e.name for e in registry.entries if e.training == "supl"}
    if category == "ssl":
        # fine-tuned ssl models count as ssl for the category rows
        return {e.name for e in registry.entries if e.training in ("ssl", "ssl+ft")}
    if category == "bird":
        return {e.name for e in registry.entries if e.is_bird_trained}
    if category == "non-bird":
        return {e.name for e in registry.entries if not e.is_bird_trained}
    raise ValueError(f"unknown category {category!r}")


def aggregate_by_category(metrics: list[ModelMetrics], registry: ModelRegistry) -> dict:
    """Arithmetic means per (category, space, task); models may appear in
    several categories (e.g. both supl and bird)."""
    for m in metrics:
        if registry.get(m.model) is None:
            raise RegistryMiss(m.model)
    table: dict = {}
    for category in CATEGORIES:
        members = category_members(registry, category)
        table[category] = {}
        for space in SPACES:
            table[category][space] = {}
            for task in TASKS:
                values = [
                    _metric_value(m, task)
                    for m in metrics
                    if m.space == space and m.model in members
                ]
                names = sorted(
                    m.model for m in metrics if m.space == space and m.model in members
                )
                table[category][space][task] = {
                    "mean": sum(values) / len(values) if values else None,
                    "members": names,
                }
    return table


# --- SVG rendering ---

def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _scatter_body(
    Y: np.ndarray,
    labels: LabelVector,
    width: float,
    height: float,
    title: str,
) -> list[str]:
    """Inner SVG elements for one scatter panel (no outer <svg>)."""
    parts = [
        f'<rect x="0" y="0" width="{_fmt(width)}" height="{_fmt(height)}" '
        'fill="white" stroke="#cccccc"/>',
        f'<text x="{_fmt(width / 2)}" y="16" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{_escape(title)}</text>',
    ]
    margin_top, margin = 24.0, 10.0
    plot_w = width - 2 * margin
    plot_h = height - margin_top - margin
    if Y.shape[0]:
        x_min, x_max = float(Y[:, 0].min()), float(Y[:, 0].max())
        y_min, y_max = float(Y[:, 1].min()), float(Y[:, 1].max())
        x_pad = 0.05 * (x_max - x_min) or 1.0
        y_pad = 0.05 * (y_max - y_min) or 1.0
        x_min, x_max = x_min - x_pad, x_max + x_pad
        y_min, y_max = y_min - y_pad, y_max + y_pad
        for i in range(Y.shape[0]):
            cx = margin + (float(Y[i, 0]) - x_min) / (x_max - x_min) * plot_w
            cy = margin_top + (1.0 - (float(Y[i, 1]) - y_min) / (y_max - y_min)) * plot_h
            color = PALETTE[int(labels.labels[i]) % len(PALETTE)]
            parts.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="2.5" fill="{color}" '
                'fill-opacity="0.8"/>'
            )
    return parts


def _legend_body(labels: LabelVector, x: float, y: float) -> list[str]:
    parts = []
    for c, name in enumerate(labels.class_names):
        color = PALETTE[c % len(PALETTE)]
        cy = y + 16.0 * c
        parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(cy)}" width="10" height="10" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_fmt(x + 14)}" y="{_fmt(cy + 9)}" font-family="sans-serif" '
            f'font-size="10">{_escape(name)}</text>'
        )
    return parts


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def render_scatter_svg(Y: np.ndarray, labels: LabelVector, title: str) -> str:
    """Standalone SVG scatter plot; one circle per point, deterministic bytes."""
    Y = np.asarray(Y, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(Y)):
        raise NonFiniteInput("scatter coordinates must be finite")
    panel_w, panel_h = 420.0, 420.0
    legend_w = 150.0
    width = panel_w + legend_w
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(panel_h)}" viewBox="0 0 {_fmt(width)} {_fmt(panel_h)}">',
    ]
    parts += _scatter_body(Y, labels, panel_w, panel_h, title)
    parts += _legend_body(labels, panel_w + 12.0, 24.0)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_gallery(entries: list[GalleryEntry]) -> str:
    """Multi-panel SVG; panels sorted by descending AMI, then model name.

    Each panel is titled "<model> <ami to 2 decimals>".
    """
    ordered = sorted(entries, key=lambda e: (-e.ami, e.model))
    n = len(ordered)
    cols = max(1, math.ceil(math.sqrt(n)))
    rows = math.ceil(n / cols) if n else 1
    panel_w, panel_h, gap = 260.0, 260.0, 8.0
    width = cols * (panel_w + gap) + gap
    height = rows * (panel_h + gap) + gap
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
    ]
    for i, entry in enumerate(ordered):
        Y = np.asarray(entry.coords, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(Y)):
            raise NonFiniteInput(f"non-finite coordinates for {entry.model}")
        x0 = gap + (i % cols) * (panel_w + gap)
        y0 = gap + (i // cols) * (panel_h + gap)
        parts.append(f'<g transform="translate({_fmt(x0)},{_fmt(y0)})">')
        title = f"{entry.model} {entry.ami:.2f}"
        parts += _scatter_body(Y, entry.labels, panel_w, panel_h, title)
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- file outputs ---

def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "config": report.config_echo,
        "per_model": [
            {
                "model": m.model,
                "space": m.space,
                "ami": m.ami,
                "balanced_macro_accuracy": m.balanced_macro_accuracy,
                "params": m.params_echo,
            }
            for m in report.metrics
        ],
        "categories": report.categories,
        "scatters": [
            {
                "model": e.model,
                "ami": e.ami,
                "coords": [[float(v) for v in row] for row in e.coords],
                "labels": [int(v) for v in e.labels.labels],
                "class_names": list(e.labels.class_names),
            }
            for e in report.scatters
        ],
    }


def report_from_dict(raw: dict) -> EvaluationReport:
    metrics = [
        ModelMetrics(
            model=m["model"],
            space=m["space"],
            ami=m["ami"],
            balanced_macro_accuracy=m["balanced_macro_accuracy"],
            params_echo=m.get("params", {}),
        )
        for m in raw["per_model"]
    ]
    scatters = [
        GalleryEntry(
            model=s["model"],
            ami=s["ami"],
            coords=np.asarray(s["coords"], dtype=np.float64).reshape(-1, 2),
            labels=LabelVector(
                labels=np.asarray(s["labels"], dtype=np.int64),
                class_names=tuple(s["class_names"]),
            ),
        )
        for s in raw.get("scatters", [])
    ]
    return EvaluationReport(
        config_echo=raw.get("config", {}),
        metrics=metrics,
        categories=raw.get("categories", {}),
        scatters=scatters,
    )


def write_report_json(report: EvaluationReport, path: str | Path) -> None:
    text = json.dumps(report_to_dict(report), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_per_model_csv(report: EvaluationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "space", "ami", "balanced_macro_accuracy"])
        for m in report.metrics:
            writer.writerow([m.model, m.space, repr(m.ami), repr(m.balanced_macro_accuracy)])


def write_category_csv(report: EvaluationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "space", "task", "mean", "members"])
        for category, spaces in report.categories.items():
            for space, tasks in spaces.items():
                for task, cell in tasks.items():
                    mean = cell["mean"]
                    writer.writerow([
                        category,
                        space,
                        task,
                        "" if mean is None else repr(mean),
                        ";".join(cell["members"]),
                    ])


def format_category_table(report: EvaluationReport) -> str:
    """Human-readable category table, 3-decimal cells, tied maxima bold."""
    lines = ["category | class. orig | class. umap | clust. orig | clust. umap"]
    cells: dict[tuple[str, int], float | None] = {}
    columns = [
        ("original", "classification"),
        ("umap300", "classification"),
        ("original", "clustering"),
        ("umap300", "clustering"),
    ]
    for category in report.categories:
        for ci, (space, task) in enumerate(columns):
            cells[(category, ci)] = report.categories[category][space][task]["mean"]
    per_task_max = {}
    for task in TASKS:
        vals = [
            v for (cat, ci), v in cells.items()
            if v is not None and columns[ci][1] == task
        ]
        per_task_max[task] = max(vals) if vals else None
    for category in report.categories:
        row = [category]
        for ci, (space, task) in enumerate(columns):
            v = cells[(category, ci)]
            if v is None:
                row.append("-")
            else:
                cell = f"{v:.3f}"
                if per_task_max[task] is not None and v == per_task_max[task]:
                    cell = f"**{cell}**"
                row.append(cell)
        lines.append(" | ".join(row))
    return "\n".join(lines) + "\n"


def write_score_figure(report: EvaluationReport, path: str | Path) -> None:
    """Per-model AMI / accuracy comparison bars (matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    models = sorted({m.model for m in report.metrics})
    by_key = {(m.model, m.space): m for m in report.metrics}
    fig, axes = plt.subplots(2, 1, figsize=(max(6, 0.7 * len(models) + 2), 7), sharex=True)
    x = np.arange(len(models))
    width = 0.38
    for ax, task, title in (
        (axes[0], "clustering", "Clustering (AMI)"),
        (axes[1], "classification", "kNN classification (balanced macro accuracy)"),
    ):
        for offset, space in ((-width / 2, "original"), (width / 2, "umap300")):
            vals = [
                _metric_value(by_key[(m, space)], task) if (m, space) in by_key else 0.0
                for m in models
            ]
            ax.bar(x + offset, vals, width, label=space)
        ax.set_title(title)
        ax.set_ylabel("score")
        ax.legend()
    axes[1].set_xticks(x)
    axes[1].set_xticklabels(models, rotation=45, ha="right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_report_outputs(report: EvaluationReport, out_dir: str | Path) -> None:
    """Render every report artifact into `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(report, out / "report.json")
    write_per_model_csv(report, out / "per_model.csv")
    write_category_csv(report, out / "category_table.csv")
    (out / "category_table.txt").write_text(format_category_table(report), encoding="utf-8")
    for entry in report.scatters:
        svg = render_scatter_svg(entry.coords, entry.labels, f"{entry.model} {entry.ami:.2f}")
        (out / f"scatter_{entry.model}.svg").write_text(svg, encoding="utf-8")
    if report.scatters:
        (out / "gallery.svg").write_text(render_gallery(report.scatters), encoding="utf-8")
    if report.metrics:
        write_score_figure(report, out / "scores.png")


def check_category_consistency(report: EvaluationReport, tol: float = 1e-12) -> bool:
    """Self-test: category means must equal the mean of their member rows."""
    by_key = {(m.model, m.space): m for m in report.metrics}
    for category, spaces in report.categories.items():
        for space, tasks in spaces.items():
            for task, cell in tasks.items():
                if cell["mean"] is None:
                    continue
                vals = [
                    _metric_value(by_key[(name, space)], task)
                    for name in cell["members"]
                ]
                if abs(cell["mean"] - sum(vals) / len(vals)) > tol:
                    return False
    return True
