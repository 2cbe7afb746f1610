"""Command line interface for the embedding-space evaluation harness."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import curation
from .core import (
    LabelVector,
    load_annotations,
    load_embeddings,
    save_annotations,
    save_embeddings,
    EmbeddingSet,
)
from .errors import EmbedspaceError
from .manifold import LayoutParams, umap
from .pipeline import EvalConfig, curate_annotations, run_evaluation
from .report import (
    check_category_consistency,
    format_category_table,
    report_from_dict,
    write_report_outputs,
)


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Global RNG seed.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file for the eval pipeline.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads; 1 guarantees byte-identical output.")
@click.option("--knn-k", type=int, default=15, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default="out", show_default=True)
@click.pass_context
def main(ctx, seed, config_path, threads, knn_k, out_dir):
    """Evaluate and compare embedding spaces of bioacoustic feature extractors."""
    ctx.ensure_object(dict)
    ctx.obj.update(
        seed=seed, config_path=config_path, threads=threads, knn_k=knn_k,
        out_dir=Path(out_dir),
    )


def _fail(exc: EmbedspaceError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@main.command()
@click.argument("annotations", type=click.Path(exists=True))
@click.option("--min-annotations", type=int, default=150, show_default=True,
              help="Keep classes with strictly more annotations than this.")
@click.option("--drop-overlaps/--keep-overlaps", default=False,
              help="Remove every event involved in a temporal overlap.")
@click.pass_context
def curate(ctx, annotations, min_annotations, drop_overlaps):
    """Curate an annotation table and emit the train/val/test split."""
    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    try:
        table = load_annotations(annotations)
        curated = curate_annotations(
            table, {"min_annotations": min_annotations, "drop_overlaps": drop_overlaps}
        )
        labels = LabelVector.from_names(curated.labels())
        split = curation.stratified_split(labels, seed=ctx.obj["seed"])
    except EmbedspaceError as exc:
        _fail(exc)
    save_annotations(curated, out / "curated_annotations.csv")
    curation.save_split(split, [ev.event_id for ev in curated.rows], out / "split.csv")
    click.echo(
        f"curated {len(table)} -> {len(curated)} events, "
        f"{labels.n_classes} classes; wrote {out}/curated_annotations.csv, {out}/split.csv"
    )


@main.command("embed-check")
@click.argument("paths", type=click.Path(exists=True), nargs=-1, required=True)
def embed_check(paths):
    """Validate BEMB embedding files."""
    failed = False
    for path in paths:
        try:
            es = load_embeddings(path)
            click.echo(f"{path}: ok model={es.model_name} count={es.count} dim={es.dim}")
        except EmbedspaceError as exc:
            click.echo(f"{path}: FAIL {exc}", err=True)
            failed = True
    if failed:
        sys.exit(1)


@main.command()
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.option("--dims", type=click.Choice(["300", "2"]), default="300", show_default=True)
@click.pass_context
def reduce(ctx, input_path, output_path, dims):
    """Reduce a BEMB file with UMAP and write the result as BEMB."""
    dims = int(dims)
    try:
        es = load_embeddings(input_path)
        params = LayoutParams(n_components=dims, seed=ctx.obj["seed"])
        reduced = umap(es.data, params)
        out_set = EmbeddingSet(
            model_name=f"{es.model_name}+umap{dims}",
            data=reduced.astype("float32"),
            event_ids=es.event_ids,
        )
        save_embeddings(out_set, output_path)
    except EmbedspaceError as exc:
        _fail(exc)
    click.echo(f"wrote {output_path} ({out_set.count} x {out_set.dim})")


@main.command("eval")
@click.option("--embeddings", "embedding_paths", type=click.Path(exists=True),
              multiple=True, help="BEMB files (repeatable); overrides the config list.")
@click.option("--annotations", type=click.Path(exists=True), default=None)
@click.option("--registry", type=click.Path(exists=True), default=None)
@click.option("--self-test", is_flag=True,
              help="Re-check category means against per-model rows after the run.")
@click.pass_context
def eval_cmd(ctx, embedding_paths, annotations, registry, self_test):
    """Run the full evaluation protocol and write all report artifacts."""
    overrides = {
        "seed": ctx.obj["seed"],
        "threads": ctx.obj["threads"],
        "knn_k": ctx.obj["knn_k"],
    }
    if embedding_paths:
        overrides["embeddings"] = list(embedding_paths)
    if annotations:
        overrides["annotations"] = annotations
    if registry:
        overrides["registry"] = registry
    try:
        if ctx.obj["config_path"]:
            config = EvalConfig.from_json(ctx.obj["config_path"], **overrides)
        else:
            for key in ("embeddings", "annotations", "registry"):
                if key not in overrides:
                    raise click.UsageError(f"--{key.rstrip('s') if key == 'embeddings' else key} "
                                           "required without --config")
            config = EvalConfig(**overrides)
        report = run_evaluation(config)
    except EmbedspaceError as exc:
        _fail(exc)
    out = ctx.obj["out_dir"]
    write_report_outputs(report, out)
    if self_test and not check_category_consistency(report):
        click.echo("self-test FAILED: category means disagree with per-model rows", err=True)
        sys.exit(1)
    click.echo(format_category_table(report))
    click.echo(f"wrote report to {out}/")


@main.command("report")
@click.argument("report_json", type=click.Path(exists=True))
@click.option("--self-test", is_flag=True)
@click.pass_context
def report_cmd(ctx, report_json, self_test):
    """Re-render tables, SVG plots and figures from an existing report.json."""
    with open(report_json, encoding="utf-8") as fh:
        report = report_from_dict(json.load(fh))
    out = ctx.obj["out_dir"]
    write_report_outputs(report, out)
    if self_test and not check_category_consistency(report):
        click.echo("self-test FAILED: category means disagree with per-model rows", err=True)
        sys.exit(1)
    click.echo(format_category_table(report))
    click.echo(f"wrote report artifacts to {out}/")


if __name__ == "__main__":
    main()
