"""Domain types and interchange formats.

Embeddings travel as BEMB files (a small binary container defined here) with a
JSON sidecar for ids, or as a CSV fallback. Annotations and the model registry
are plain CSV / JSON. All loaded values are immutable after construction.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    IdCountMismatch,
    InvariantViolation,
    IoFailure,
    MagicMismatch,
    NonFiniteValue,
    ParseError,
)

BEMB_MAGIC = b"BEMB"
BEMB_VERSION = 1

TRAINING_KINDS = ("ssl", "supl", "ssl+ft")
BIRD_TAG = "birds"


@dataclass(frozen=True)
class EmbeddingSet:
    """N x D matrix of embeddings with per-row event ids."""

    model_name: str
    data: np.ndarray  # (count, dim) float32
    event_ids: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise DimensionMismatch(f"expected 2-d data, got shape {data.shape}")
        bad = np.where(~np.isfinite(data))
        if bad[0].size:
            raise NonFiniteValue(row=int(bad[0][0]))
        if len(self.event_ids) != data.shape[0]:
            raise IdCountMismatch(
                f"{len(self.event_ids)} ids for {data.shape[0]} rows"
            )
        if len(set(self.event_ids)) != len(self.event_ids):
            raise InvariantViolation("duplicate event ids")
        if data.shape[0] > 0 and data.shape[1] == 0:
            raise DimensionMismatch("dim must be positive when count > 0")
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "event_ids", tuple(self.event_ids))

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class AnnotationEvent:
    event_id: str
    file: str
    start_s: float
    end_s: float
    label: str


@dataclass(frozen=True)
class AnnotationTable:
    rows: tuple[AnnotationEvent, ...]

    def __post_init__(self):
        rows = tuple(self.rows)
        seen = set()
        for ev in rows:
            if ev.end_s <= ev.start_s:
                raise InvariantViolation(
                    f"event {ev.event_id!r}: end_s {ev.end_s} <= start_s {ev.start_s}"
                )
            if ev.start_s < 0:
                raise InvariantViolation(f"event {ev.event_id!r}: negative start_s")
            if ev.event_id in seen:
                raise InvariantViolation(f"duplicate event id {ev.event_id!r}")
            seen.add(ev.event_id)
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return len(self.rows)

    def labels(self) -> list[str]:
        return [ev.label for ev in self.rows]


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    abbrev: str
    training: str  # ssl | supl | ssl+ft
    dimension: int
    domains: tuple[str, ...]

    def __post_init__(self):
        if self.training not in TRAINING_KINDS:
            raise InvariantViolation(
                f"{self.name!r}: training must be one of {TRAINING_KINDS}"
            )
        if self.dimension <= 0:
            raise InvariantViolation(f"{self.name!r}: dimension must be positive")
        object.__setattr__(self, "domains", tuple(self.domains))

    @property
    def is_bird_trained(self) -> bool:
        return BIRD_TAG in self.domains


@dataclass(frozen=True)
class ModelRegistry:
    entries: tuple[RegistryEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        names = [e.name for e in entries]
        abbrevs = [e.abbrev for e in entries]
        if len(set(names)) != len(names):
            raise InvariantViolation("duplicate model names in registry")
        if len(set(abbrevs)) != len(abbrevs):
            raise InvariantViolation("duplicate model abbrevs in registry")
        object.__setattr__(self, "entries", entries)

    def get(self, name: str) -> RegistryEntry | None:
        for e in self.entries:
            if e.name == name:
                return e
        return None


@dataclass(frozen=True)
class LabelVector:
    """Integer class labels plus the index -> name mapping."""

    labels: np.ndarray  # (N,) int64
    class_names: tuple[str, ...]

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise InvariantViolation("labels must be 1-d")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise InvariantViolation("label index out of range")
        labels = labels.copy()
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @classmethod
    def from_names(cls, names: list[str]) -> "LabelVector":
        """Build from string labels; classes ordered by first appearance."""
        class_names: list[str] = []
        index: dict[str, int] = {}
        labels = np.empty(len(names), dtype=np.int64)
        for i, name in enumerate(names):
            if name not in index:
                index[name] = len(class_names)
                class_names.append(name)
            labels[i] = index[name]
        return cls(labels=labels, class_names=tuple(class_names))


# --- BEMB binary format ---

_HEADER = struct.Struct("<4sHHIQ")  # magic, version, reserved, dim, count


def save_embeddings(es: EmbeddingSet, path: str | Path) -> None:
    """Write a BEMB file plus its `<stem>.meta.json` sidecar.

    Round-trips bit-exactly through load_embeddings.
    """
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(BEMB_MAGIC, BEMB_VERSION, 0, es.dim, es.count))
            fh.write(np.ascontiguousarray(es.data, dtype="<f4").tobytes())
        meta = {"model": es.model_name, "event_ids": list(es.event_ids)}
        with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(meta, fh)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def load_embeddings(path: str | Path) -> EmbeddingSet:
    """Load a BEMB file (or CSV fallback) into a validated EmbeddingSet."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) >= 4 and head[:4] == BEMB_MAGIC:
                return _load_bemb(path, fh, head)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if path.suffix.lower() == ".csv":
        return _load_embedding_csv(path)
    raise MagicMismatch(f"{path} is neither a BEMB file nor a CSV")


def _load_bemb(path: Path, fh, head: bytes) -> EmbeddingSet:
    if len(head) != _HEADER.size:
        raise DimensionMismatch("truncated BEMB header")
    magic, version, _reserved, dim, count = _HEADER.unpack(head)
    if version != BEMB_VERSION:
        raise MagicMismatch(f"unsupported BEMB version {version}")
    payload = fh.read()
    expected = count * dim * 4
    if len(payload) != expected:
        raise DimensionMismatch(
            f"payload is {len(payload)} bytes, expected {expected} "
            f"({count} x {dim} float32)"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise IdCountMismatch(f"missing sidecar {sidecar}")
    with open(sidecar, encoding="utf-8") as mf:
        meta = json.load(mf)
    ids = meta.get("event_ids", [])
    if len(ids) != count:
        raise IdCountMismatch(f"{len(ids)} sidecar ids for {count} rows")
    return EmbeddingSet(
        model_name=meta.get("model", path.stem), data=data, event_ids=tuple(ids)
    )


def _load_embedding_csv(path: Path) -> EmbeddingSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MagicMismatch(f"{path} is empty") from None
        if not header or header[0] != "id" or any(
            h != f"e{i}" for i, h in enumerate(header[1:])
        ):
            raise MagicMismatch(f"{path}: CSV header must be id,e0,e1,...")
        dim = len(header) - 1
        ids: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise DimensionMismatch(f"{path}:{lineno}: expected {dim + 1} fields")
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from exc
    data = np.asarray(rows, dtype=np.float32).reshape(len(ids), dim)
    return EmbeddingSet(model_name=path.stem, data=data, event_ids=tuple(ids))


# --- annotation CSV ---

_ANN_HEADERS = (
    ["file", "start_s", "end_s", "label"],
    ["event_id", "file", "start_s", "end_s", "label"],
)


def load_annotations(path: str | Path) -> AnnotationTable:
    """Parse the annotation CSV.

    An `event_id` column is optional; when absent, ids are synthesized from the
    0-based data-row index as `ev000000`, `ev000001`, ...
    """
    path = Path(path)
    events: list[AnnotationEvent] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty annotation file") from None
        if header not in list(_ANN_HEADERS):
            raise ParseError(1, f"unrecognized header {header}")
        has_id = header[0] == "event_id"
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(lineno, f"expected {len(header)} fields, got {len(row)}")
            if has_id:
                event_id, file, start_s, end_s, label = row
            else:
                file, start_s, end_s, label = row
                event_id = f"ev{lineno - 2:06d}"
            try:
                start = float(start_s)
                end = float(end_s)
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from exc
            if end <= start:
                raise InvariantViolation(
                    f"line {lineno}: end_s {end} <= start_s {start}"
                )
            events.append(
                AnnotationEvent(
                    event_id=event_id, file=file, start_s=start, end_s=end, label=label
                )
            )
    return AnnotationTable(rows=tuple(events))


def save_annotations(table: AnnotationTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_id", "file", "start_s", "end_s", "label"])
        for ev in table.rows:
            writer.writerow([ev.event_id, ev.file, repr(ev.start_s), repr(ev.end_s), ev.label])


# --- registry JSON ---

def load_registry(path: str | Path) -> ModelRegistry:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, exc.msg) from exc
    if not isinstance(raw, list):
        raise ParseError(1, "registry must be a JSON array of entries")
    entries = []
    for i, item in enumerate(raw):
        try:
            entry = RegistryEntry(
                name=item["name"],
                abbrev=item.get("abbrev", item["name"]),
                training=item["training"],
                dimension=int(item["dimension"]),
                domains=tuple(item.get("domains", ())),
            )
        except KeyError as exc:
            raise ParseError(i + 1, f"entry {i}: missing field {exc}") from exc
        declared = item.get("is_bird_trained")
        if declared is not None and bool(declared) != entry.is_bird_trained:
            raise InvariantViolation(
                f"entry {entry.name!r}: is_bird_trained must equal "
                f"('{BIRD_TAG}' in domains)"
            )
        entries.append(entry)
    return ModelRegistry(entries=tuple(entries))
