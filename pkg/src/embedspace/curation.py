"""Annotation curation: class-size filtering, overlap removal, stratified split."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AnnotationTable, LabelVector
from .errors import EmptyResult, InvariantViolation, TooFewMembers

DEFAULT_RATIOS = (0.65, 0.15, 0.20)
PARTS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitAssignment:
    assignment: tuple[str, ...]  # one of PARTS per row
    seed: int
    ratios: tuple[float, float, float]

    def __post_init__(self):
        if abs(sum(self.ratios) - 1.0) > 1e-12:
            raise InvariantViolation("split ratios must sum to 1.0")
        if any(p not in PARTS for p in self.assignment):
            raise InvariantViolation("assignment values must be train/val/test")
        object.__setattr__(self, "assignment", tuple(self.assignment))

    def mask(self, part: str) -> np.ndarray:
        return np.array([a == part for a in self.assignment], dtype=bool)


def filter_min_annotations(table: AnnotationTable, threshold: int) -> AnnotationTable:
    """Keep only events whose label occurs strictly more than `threshold` times.

    Relative event order is preserved. Raises EmptyResult if nothing survives.
    """
    counts = Counter(ev.label for ev in table.rows)
    kept = tuple(ev for ev in table.rows if counts[ev.label] > threshold)
    if table.rows and not kept:
        raise EmptyResult(f"no class has more than {threshold} annotations")
    return AnnotationTable(rows=kept)


def remove_overlaps(table: AnnotationTable) -> AnnotationTable:
    """Drop every event that strictly overlaps another event in the same file.

    Both members of an overlapping pair are removed. Touching endpoints
    (end == start) do not count as overlap.
    """
    by_file: dict[str, list[int]] = {}
    for i, ev in enumerate(table.rows):
        by_file.setdefault(ev.file, []).append(i)
    drop = set()
    for indices in by_file.values():
        # sweep in start order; only neighbors within reach can overlap
        order = sorted(indices, key=lambda i: (table.rows[i].start_s, table.rows[i].end_s))
        for pos, i in enumerate(order):
            ei = table.rows[i]
            for j in order[pos + 1:]:
                ej = table.rows[j]
                if ej.start_s >= ei.end_s:
                    break
                if ei.start_s < ej.end_s and ej.start_s < ei.end_s:
                    drop.add(i)
                    drop.add(j)
    kept = tuple(ev for i, ev in enumerate(table.rows) if i not in drop)
    return AnnotationTable(rows=kept)


def stratified_split(
    labels: LabelVector,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> SplitAssignment:
    """Per-class shuffled split with floor/floor/remainder part sizes.

    Each class gets its own RNG stream derived from (seed, class index), so the
    assignment is identical across platforms and independent of evaluation
    order. Classes with fewer than 3 members are rejected.
    """
    if abs(sum(ratios) - 1.0) > 1e-12:
        raise InvariantViolation("split ratios must sum to 1.0")
    n = len(labels)
    assignment = [""] * n
    for c, name in enumerate(labels.class_names):
        members = np.flatnonzero(labels.labels == c)
        if members.size < 3:
            raise TooFewMembers(name, int(members.size))
        rng = np.random.default_rng([seed, c])
        shuffled = members[rng.permutation(members.size)]
        n_train = int(np.floor(ratios[0] * members.size))
        n_val = int(np.floor(ratios[1] * members.size))
        if n_train == 0:
            n_train = 1  # every class must reach the train part
        for idx in shuffled[:n_train]:
            assignment[idx] = "train"
        for idx in shuffled[n_train:n_train + n_val]:
            assignment[idx] = "val"
        for idx in shuffled[n_train + n_val:]:
            assignment[idx] = "test"
    return SplitAssignment(assignment=tuple(assignment), seed=seed, ratios=tuple(ratios))


def save_split(split: SplitAssignment, event_ids, path: str | Path) -> None:
    """Export `event_id,part` CSV."""
    if len(event_ids) != len(split.assignment):
        raise InvariantViolation("event id count does not match split length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_id", "part"])
        for eid, part in zip(event_ids, split.assignment):
            writer.writerow([eid, part])
