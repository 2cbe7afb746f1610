import json
import re
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

import embedspace.pipeline as pipeline
from embedspace.cli import main as cli_main
from embedspace.core import load_annotations, load_embeddings
from embedspace.errors import MissingEvents, RegistryMiss
from embedspace.pipeline import (
    EvalConfig,
    align_embeddings,
    curate_annotations,
    model_seed,
    run_evaluation,
)
from embedspace.report import write_report_json

from conftest import write_zoo

FAST = {
    "curation": {"min_annotations": 5, "drop_overlaps": False},
    "umap": {"n_epochs": 50},
    "kmeans": {"n_init": 3},
}


def fast_config(paths, ann, reg, seed=7, **kw):
    return EvalConfig(embeddings=paths, annotations=ann, registry=reg, seed=seed,
                      **{**FAST, **kw})


class TestModelSeed:
    def test_stable_and_distinct(self):
        assert model_seed(1, "clean") == model_seed(1, "clean")
        assert model_seed(1, "clean") != model_seed(1, "noisy")
        assert model_seed(1, "clean") != model_seed(2, "clean")


class TestAlignment:
    def test_unknown_embedding_ids_rejected(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        raw = load_annotations(ann)
        curated = curate_annotations(raw, {"min_annotations": 5})
        es = load_embeddings(paths[0])
        renamed = type(es)(
            model_name=es.model_name,
            data=es.data,
            event_ids=("bogus",) + es.event_ids[1:],
        )
        with pytest.raises(MissingEvents) as exc:
            align_embeddings(renamed, raw, curated)
        assert exc.value.count == 1

    def test_curated_events_without_embedding_are_dropped(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        raw = load_annotations(ann)
        curated = curate_annotations(raw, {"min_annotations": 5})
        es = load_embeddings(paths[0])
        trimmed = type(es)(
            model_name=es.model_name,
            data=es.data[:-2],
            event_ids=es.event_ids[:-2],
        )
        X, labels, ids = align_embeddings(trimmed, raw, curated)
        assert X.shape[0] == len(curated) - 2
        assert len(ids) == len(labels)


class TestRunEvaluation:
    def test_monotone_difficulty_ladder(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path)
        report = run_evaluation(fast_config(paths, ann, reg, curation={"min_annotations": 20}))
        by = {(m.model, m.space): m for m in report.metrics}
        for space in ("original", "umap300"):
            assert by[("clean", space)].ami > by[("noisy", space)].ami > by[("shuffled", space)].ami
            assert (by[("clean", space)].balanced_macro_accuracy
                    > by[("noisy", space)].balanced_macro_accuracy
                    > by[("shuffled", space)].balanced_macro_accuracy)

    def test_byte_identical_reports_same_seed(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        cfg = fast_config(paths[:2], ann, reg, seed=3)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_report_json(run_evaluation(cfg), a)
        write_report_json(run_evaluation(cfg), b)
        assert a.read_bytes() == b.read_bytes()

    def test_registry_miss(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        Path(reg).write_text(json.dumps([
            {"name": "other", "abbrev": "o", "training": "ssl", "dimension": 12,
             "domains": []},
        ]))
        with pytest.raises(RegistryMiss):
            run_evaluation(fast_config(paths[:1], ann, reg))

    def test_kmeans_called_with_class_count(self, tmp_path, monkeypatch):
        paths, ann, reg = write_zoo(tmp_path, n_classes=11, per_class=4, seed=1)
        seen = []
        original = pipeline.kmeans_fit

        def spy(X, k, **kw):
            seen.append(k)
            return original(X, k, **kw)

        monkeypatch.setattr(pipeline, "kmeans_fit", spy)
        run_evaluation(fast_config(paths[:1], ann, reg, curation={"min_annotations": 2}))
        assert seen and all(k == 11 for k in seen)

    def test_params_echoed_in_metrics(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        report = run_evaluation(fast_config(paths[:1], ann, reg))
        echo = report.metrics[0].params_echo
        assert echo["knn"]["metric"] == "euclidean"
        assert echo["kmeans"]["n_init"] == 3
        assert echo["umap"]["n_neighbors"] == 15
        assert echo["umap"]["min_dist"] == 0.1

    def test_thread_count_does_not_change_scores(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        seq = run_evaluation(fast_config(paths, ann, reg, threads=1))
        par = run_evaluation(fast_config(paths, ann, reg, threads=3))
        assert [(m.model, m.space, m.ami) for m in seq.metrics] == [
            (m.model, m.space, m.ami) for m in par.metrics
        ]


class TestCli:
    def run(self, *args):
        return CliRunner().invoke(cli_main, list(args), catch_exceptions=False)

    def test_curate(self, tmp_path):
        _, ann, _ = write_zoo(tmp_path, per_class=10)
        out = tmp_path / "out"
        res = self.run("--out", str(out), "--seed", "1", "curate", ann,
                       "--min-annotations", "5")
        assert res.exit_code == 0, res.output
        assert (out / "curated_annotations.csv").exists()
        split = (out / "split.csv").read_text().splitlines()
        assert split[0] == "event_id,part"
        assert len(split) == 51

    def test_embed_check(self, tmp_path):
        paths, _, _ = write_zoo(tmp_path, per_class=10)
        res = self.run("embed-check", paths[0])
        assert res.exit_code == 0
        assert "ok model=clean count=50 dim=12" in res.output

    def test_embed_check_failure(self, tmp_path):
        bad = tmp_path / "bad.bemb"
        bad.write_bytes(b"NOPE")
        res = self.run("embed-check", str(bad))
        assert res.exit_code == 1

    def test_reduce_writes_suffixed_bemb(self, tmp_path):
        paths, _, _ = write_zoo(tmp_path, per_class=10)
        out = tmp_path / "reduced.bemb"
        res = self.run("--seed", "2", "reduce", paths[0], str(out), "--dims", "2")
        assert res.exit_code == 0, res.output
        es = load_embeddings(out)
        assert es.model_name == "clean+umap2"
        assert es.dim == 2 and es.count == 50
        src = load_embeddings(paths[0])
        assert es.event_ids == src.event_ids

    def test_eval_writes_all_artifacts(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        cfg = {
            "embeddings": paths, "annotations": ann, "registry": reg,
            **FAST,
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "out"
        res = self.run("--seed", "5", "--config", str(cfg_path), "--out", str(out),
                       "eval", "--self-test")
        assert res.exit_code == 0, res.output
        for name in ("report.json", "per_model.csv", "category_table.csv",
                     "gallery.svg", "scores.png"):
            assert (out / name).exists(), name
        for model in ("clean", "noisy", "shuffled"):
            assert (out / f"scatter_{model}.svg").exists()
        report = json.loads((out / "report.json").read_text())
        assert len(report["per_model"]) == 6

    def test_eval_reruns_byte_identical(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({
            "embeddings": paths[:2], "annotations": ann, "registry": reg, **FAST,
        }))
        outputs = []
        for name in ("o1", "o2"):
            out = tmp_path / name
            res = self.run("--seed", "5", "--threads", "1", "--config", str(cfg_path),
                           "--out", str(out), "eval")
            assert res.exit_code == 0, res.output
            outputs.append((out / "report.json").read_bytes())
            outputs.append((out / "gallery.svg").read_bytes())
        assert outputs[0] == outputs[2]
        assert outputs[1] == outputs[3]

    def test_report_rerenders_from_json(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({
            "embeddings": paths[:1], "annotations": ann, "registry": reg, **FAST,
        }))
        out1 = tmp_path / "out1"
        res = self.run("--seed", "5", "--config", str(cfg_path), "--out", str(out1), "eval")
        assert res.exit_code == 0, res.output
        out2 = tmp_path / "out2"
        res = self.run("--out", str(out2), "report", str(out1 / "report.json"),
                       "--self-test")
        assert res.exit_code == 0, res.output
        assert (out2 / "report.json").read_bytes() == (out1 / "report.json").read_bytes()
        assert (out2 / "gallery.svg").read_bytes() == (out1 / "gallery.svg").read_bytes()

    def test_category_table_means_match_per_model_rows(self, tmp_path):
        paths, ann, reg = write_zoo(tmp_path, per_class=10)
        report = run_evaluation(fast_config(paths, ann, reg))
        by = {(m.model, m.space): m for m in report.metrics}
        for category, spaces in report.categories.items():
            for space, tasks in spaces.items():
                for task, cell in tasks.items():
                    if cell["mean"] is None:
                        continue
                    vals = [
                        by[(name, space)].ami if task == "clustering"
                        else by[(name, space)].balanced_macro_accuracy
                        for name in cell["members"]
                    ]
                    assert abs(cell["mean"] - sum(vals) / len(vals)) <= 1e-12


class TestSplitExportFormat:
    def test_parts_are_valid(self, tmp_path):
        _, ann, _ = write_zoo(tmp_path, per_class=10)
        out = tmp_path / "out"
        CliRunner().invoke(cli_main, ["--out", str(out), "curate", ann,
                                      "--min-annotations", "5"], catch_exceptions=False)
        rows = (out / "split.csv").read_text().splitlines()[1:]
        assert all(re.match(r"^ev\d{5},(train|val|test)$", r) for r in rows)
