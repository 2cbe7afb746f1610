"""Evaluation harness for bioacoustic embedding spaces."""

from .cluster import (
    Clustering,
    ContingencyTable,
    adjusted_mutual_info,
    build_contingency,
    expected_mutual_information,
    kmeans_fit,
    mutual_information,
)
from .core import (
    AnnotationEvent,
    AnnotationTable,
    EmbeddingSet,
    LabelVector,
    ModelRegistry,
    RegistryEntry,
    load_annotations,
    load_embeddings,
    load_registry,
    save_embeddings,
)
from .curation import (
    SplitAssignment,
    filter_min_annotations,
    remove_overlaps,
    stratified_split,
)
from .knn import ConfusionMatrix, balanced_macro_accuracy, confusion, knn_predict
from .manifold import (
    FuzzyGraph,
    KnnGraph,
    LayoutParams,
    exact_knn_graph,
    fit_ab,
    fuzzy_simplicial_set,
    initialize_layout,
    optimize_layout,
    smooth_knn_calibrate,
    umap,
)
from .pipeline import EvalConfig, run_evaluation
from .report import (
    EvaluationReport,
    GalleryEntry,
    ModelMetrics,
    aggregate_by_category,
    render_gallery,
    render_scatter_svg,
)

__version__ = "0.1.0"
