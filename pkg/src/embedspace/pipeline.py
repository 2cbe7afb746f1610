"""Full evaluation pipeline: curation, per-model scoring, aggregation."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import curation
from .cluster import KMEANS_DEFAULTS, adjusted_mutual_info, kmeans_fit
from .core import (
    AnnotationTable,
    EmbeddingSet,
    LabelVector,
    ModelRegistry,
    load_annotations,
    load_embeddings,
    load_registry,
)
from .curation import DEFAULT_RATIOS, stratified_split
from .errors import MissingEvents, RegistryMiss
from .knn import balanced_macro_accuracy, confusion, knn_predict
from .manifold import LayoutParams, umap
from .report import (
    EvaluationReport,
    GalleryEntry,
    ModelMetrics,
    aggregate_by_category,
)

UMAP_EVAL_DIMS = 300
UMAP_VIZ_DIMS = 2


@dataclass
class EvalConfig:
    embeddings: list[str]
    annotations: str
    registry: str
    seed: int = 0
    knn_k: int = 15
    knn_metric: str = "euclidean"
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    umap: dict = field(default_factory=dict)
    kmeans: dict = field(default_factory=dict)
    curation: dict = field(default_factory=lambda: {"min_annotations": 150, "drop_overlaps": False})
    threads: int = 1

    @classmethod
    def from_json(cls, path: str | Path, **overrides) -> "EvalConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})

    def echo(self) -> dict:
        kmeans = dict(KMEANS_DEFAULTS)
        kmeans.update(self.kmeans)
        layout = LayoutParams(n_components=UMAP_EVAL_DIMS, **self.umap)
        return {
            "embeddings": list(self.embeddings),
            "annotations": self.annotations,
            "registry": self.registry,
            "seed": self.seed,
            "knn": {"k": self.knn_k, "metric": self.knn_metric, "vote": "majority"},
            "split_ratios": list(self.ratios),
            "kmeans": kmeans,
            "umap": {
                "n_neighbors": layout.n_neighbors,
                "min_dist": layout.min_dist,
                "spread": layout.spread,
                "negative_sample_rate": layout.negative_sample_rate,
                "repulsion_strength": layout.repulsion_strength,
                "learning_rate": layout.learning_rate,
                "n_epochs": layout.n_epochs,
                "eval_dims": UMAP_EVAL_DIMS,
                "viz_dims": UMAP_VIZ_DIMS,
            },
            "curation": dict(self.curation),
            "threads": self.threads,
        }


def model_seed(global_seed: int, model_name: str) -> int:
    """Stable per-model RNG stream key derived from the global seed."""
    digest = hashlib.sha256(model_name.encode("utf-8")).digest()
    return (global_seed ^ int.from_bytes(digest[:8], "little")) & 0x7FFFFFFFFFFFFFFF


def curate_annotations(table: AnnotationTable, settings: dict) -> AnnotationTable:
    """Class-size filter first, then optional overlap removal."""
    curated = curation.filter_min_annotations(table, int(settings.get("min_annotations", 150)))
    if settings.get("drop_overlaps", False):
        curated = curation.remove_overlaps(curated)
    return curated


def align_embeddings(
    es: EmbeddingSet, raw: AnnotationTable, curated: AnnotationTable
) -> tuple[np.ndarray, LabelVector, list[str]]:
    """Match embedding rows to curated events by event id.

    Embedding ids absent from the raw annotation table are an error; curated
    events without an embedding row are dropped from this model's evaluation.
    """
    raw_ids = {ev.event_id for ev in raw.rows}
    missing = [eid for eid in es.event_ids if eid not in raw_ids]
    if missing:
        raise MissingEvents(len(missing), missing)
    row_of = {eid: i for i, eid in enumerate(es.event_ids)}
    kept = [ev for ev in curated.rows if ev.event_id in row_of]
    X = np.asarray(es.data, dtype=np.float64)[[row_of[ev.event_id] for ev in kept]]
    labels = LabelVector.from_names([ev.label for ev in kept])
    return X, labels, [ev.event_id for ev in kept]


def _score_space(
    X: np.ndarray,
    labels: LabelVector,
    split: curation.SplitAssignment,
    seed: int,
    knn_k: int,
    knn_metric: str,
    kmeans_params: dict,
) -> tuple[float, float]:
    clustering = kmeans_fit(X, k=labels.n_classes, seed=seed, **kmeans_params)
    pred = LabelVector(
        labels=clustering.assignments,
        class_names=tuple(str(i) for i in range(labels.n_classes)),
    )
    ami = adjusted_mutual_info(labels, pred)
    train = split.mask("train")
    test = split.mask("test")
    y_train = LabelVector(labels=labels.labels[train], class_names=labels.class_names)
    y_test = LabelVector(labels=labels.labels[test], class_names=labels.class_names)
    y_pred = knn_predict(X[train], y_train, X[test], k=knn_k, metric=knn_metric)
    acc = balanced_macro_accuracy(confusion(y_test, y_pred))
    return ami, acc


def evaluate_model(
    es: EmbeddingSet,
    raw: AnnotationTable,
    curated: AnnotationTable,
    config: EvalConfig,
) -> tuple[list[ModelMetrics], GalleryEntry]:
    X, labels, _ids = align_embeddings(es, raw, curated)
    seed = model_seed(config.seed, es.model_name)
    split = stratified_split(labels, ratios=tuple(config.ratios), seed=config.seed)
    kmeans_params = dict(KMEANS_DEFAULTS)
    kmeans_params.update(config.kmeans)
    echo = config.echo()

    reduced = umap(X, LayoutParams(n_components=UMAP_EVAL_DIMS, seed=seed, **config.umap))
    viz = umap(X, LayoutParams(n_components=UMAP_VIZ_DIMS, seed=seed, **config.umap))

    metrics = []
    for space, data in (("original", X), ("umap300", reduced)):
        ami, acc = _score_space(
            data, labels, split, seed, config.knn_k, config.knn_metric, kmeans_params
        )
        metrics.append(
            ModelMetrics(
                model=es.model_name,
                space=space,
                ami=ami,
                balanced_macro_accuracy=acc,
                params_echo=echo,
            )
        )
    gallery = GalleryEntry(
        model=es.model_name, ami=metrics[0].ami, coords=viz, labels=labels
    )
    return metrics, gallery


def run_evaluation(config: EvalConfig) -> EvaluationReport:
    """Evaluate every configured model in both spaces and aggregate.

    Deterministic (byte-identical report) for a fixed config and seed when
    threads == 1; per-model RNG streams make the scores themselves
    thread-count independent.
    """
    raw = load_annotations(config.annotations)
    registry = load_registry(config.registry)
    curated = curate_annotations(raw, config.curation)

    sets = [load_embeddings(p) for p in config.embeddings]
    for es in sets:
        if registry.get(es.model_name) is None:
            raise RegistryMiss(es.model_name)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(
                pool.map(lambda es: evaluate_model(es, raw, curated, config), sets)
            )
    else:
        results = [evaluate_model(es, raw, curated, config) for es in sets]

    metrics: list[ModelMetrics] = []
    scatters: list[GalleryEntry] = []
    for model_metrics, gallery in results:
        metrics.extend(model_metrics)
        scatters.append(gallery)
    categories = aggregate_by_category(metrics, registry)
    return EvaluationReport(
        config_echo=config.echo(),
        metrics=metrics,
        categories=categories,
        scatters=scatters,
    )
