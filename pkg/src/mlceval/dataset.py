"""Corpus and prediction ingestion, id alignment, distribution statistics.

Both corpus and prediction files are JSON Lines.  Corpus records::

    {"id": "n1", "labels": "1-0-1-0", "text": "..."}
    {"id": "n2", "labels": {"SI": 1, "SA": 0, "ES": 0, "NSSI": 0}}

A prediction file starts with one manifest record, then one record per
instance; ``labels`` is null for outputs that could not be parsed::

    {"manifest": {"model": "gpt-x", "strategy": "guide", "repeat": 0, ...}}
    {"id": "n1", "labels": "1-0-0-0", "status": "clean", "raw": "1-0-0-0"}
"""

from __future__ import annotations

import io
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence, TextIO

from .errors import AlignmentError, CodeParseError, DatasetError, SchemaError, ValidationError
from .labelspace import (
    DEFAULT_SCHEMA,
    LabelSchema,
    LabelSet,
    check_width,
    enumerate_powerset,
    format_binary_code,
    parse_binary_code,
)

log = logging.getLogger(__name__)

STRATEGIES = ("zero", "guide", "tune")
FAILURE_POLICIES = ("exclude", "empty")

_CORPUS_FIELDS = {"id", "labels", "text"}
_PREDICTION_FIELDS = {"id", "labels", "raw", "status", "note"}


@dataclass(frozen=True)
class AnnotatedInstance:
    id: str
    truth: LabelSet
    text: str | None = None


@dataclass(frozen=True)
class Corpus:
    schema: LabelSchema
    instances: tuple[AnnotatedInstance, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        seen: set[str] = set()
        for inst in self.instances:
            if not inst.id:
                raise DatasetError("instance id must be non-empty")
            if inst.id in seen:
                raise DatasetError(f"duplicate id {inst.id!r}")
            seen.add(inst.id)
            check_width(inst.truth, self.schema)

    @property
    def N(self) -> int:
        return len(self.instances)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[AnnotatedInstance]:
        return iter(self.instances)

    def ids(self) -> list[str]:
        return [inst.id for inst in self.instances]

    def by_id(self) -> dict[str, AnnotatedInstance]:
        return {inst.id: inst for inst in self.instances}

    def subset(self, ids: Iterable[str]) -> "Corpus":
        lookup = self.by_id()
        return Corpus(self.schema, tuple(lookup[i] for i in ids))


@dataclass(frozen=True)
class PredictionRecord:
    """One model output.  ``predicted`` is None when the output failed to parse."""

    id: str
    predicted: LabelSet | None
    raw: str | None = None
    status: str = "clean"
    note: str | None = None


@dataclass(frozen=True)
class RunManifest:
    model: str
    strategy: str | None = None
    repeat: int = 0
    fold: int | None = None
    seed: int | None = None
    timestamp: str = ""
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise DatasetError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not isinstance(self.repeat, int) or self.repeat < 0:
            raise DatasetError(f"repeat index must be a non-negative integer, got {self.repeat!r}")
        if self.fold is not None and (not isinstance(self.fold, int) or self.fold < 0):
            raise DatasetError(f"fold index must be a non-negative integer, got {self.fold!r}")
        if not self.timestamp:
            object.__setattr__(self, "timestamp", now_utc())

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["params"] = dict(self.params)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunManifest":
        known = {k: d[k] for k in ("model", "strategy", "repeat", "fold", "seed", "timestamp", "params") if k in d}
        if "model" not in known:
            raise DatasetError("manifest is missing 'model'")
        return cls(**known)


def now_utc() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


@dataclass(frozen=True)
class Pair:
    id: str
    truth: LabelSet
    predicted: LabelSet


@dataclass(frozen=True)
class AlignedPairs:
    schema: LabelSchema
    pairs: tuple[Pair, ...]
    excluded: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", tuple(self.pairs))
        for p in self.pairs:
            check_width(p.truth, self.schema)
            check_width(p.predicted, self.schema)

    @property
    def N(self) -> int:
        return len(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[Pair]:
        return iter(self.pairs)

    @classmethod
    def from_sets(cls, schema: LabelSchema, pairs: Iterable[tuple[LabelSet, LabelSet]]) -> "AlignedPairs":
        return cls(schema, tuple(Pair(f"i{k}", t, p) for k, (t, p) in enumerate(pairs)))

    @classmethod
    def from_codes(cls, pairs: Iterable[tuple[str, str]], schema: LabelSchema = DEFAULT_SCHEMA) -> "AlignedPairs":
        return cls.from_sets(
            schema, ((parse_binary_code(t, schema), parse_binary_code(p, schema)) for t, p in pairs)
        )


# --- reading --------------------------------------------------------------

def _records(source: str | Path | TextIO | Iterable[str]) -> Iterator[tuple[int, dict]]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise DatasetError(f"no such file: {path}")
        with path.open(encoding="utf-8") as fh:
            yield from _records(fh)
        return
    for lineno, line in enumerate(source, 1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON: {exc.msg}", lineno) from None
        if not isinstance(rec, dict):
            raise DatasetError("record must be a JSON object", lineno)
        yield lineno, rec


def parse_labels(value: Any, schema: LabelSchema, lineno: int | None = None) -> LabelSet:
    """Labels as a binary code string or a name -> 0/1 mapping covering the schema."""
    try:
        if isinstance(value, str):
            return parse_binary_code(value, schema)
        if isinstance(value, Mapping):
            missing = [lab for lab in schema.labels if lab not in value]
            extra = [k for k in value if k not in schema.labels]
            if missing or extra:
                raise DatasetError(f"label map missing {missing} / unknown {extra}", lineno)
            bits = []
            for lab in schema.labels:
                v = value[lab]
                if v not in (0, 1) or isinstance(v, float):
                    raise DatasetError(f"label {lab!r} has value {v!r}, expected 0 or 1", lineno)
                bits.append(int(v))
            return LabelSet.from_bits(bits)
    except (CodeParseError, SchemaError) as exc:
        raise DatasetError(str(exc), lineno) from None
    raise DatasetError(f"labels must be a binary code or a name->0/1 map, got {value!r}", lineno)


def _warn_unknown(rec: dict, known: set[str], lineno: int) -> None:
    extra = sorted(set(rec) - known)
    if extra:
        log.warning("line %d: ignoring unknown fields %s", lineno, extra)


def load_corpus(source: str | Path | TextIO | Iterable[str], schema: LabelSchema = DEFAULT_SCHEMA) -> Corpus:
    instances: list[AnnotatedInstance] = []
    seen: dict[str, int] = {}
    for lineno, rec in _records(source):
        for key in ("id", "labels"):
            if key not in rec:
                raise DatasetError(f"missing field {key!r}", lineno)
        _warn_unknown(rec, _CORPUS_FIELDS, lineno)
        iid = rec["id"]
        if not isinstance(iid, str) or not iid:
            raise DatasetError(f"id must be a non-empty string, got {iid!r}", lineno)
        if iid in seen:
            raise DatasetError(f"duplicate id {iid!r} (first seen on line {seen[iid]})", lineno)
        seen[iid] = lineno
        text = rec.get("text")
        if text is not None and not isinstance(text, str):
            raise DatasetError("text must be a string", lineno)
        instances.append(AnnotatedInstance(iid, parse_labels(rec["labels"], schema, lineno), text))
    return Corpus(schema, tuple(instances))


def load_predictions(
    source: str | Path | TextIO | Iterable[str], schema: LabelSchema = DEFAULT_SCHEMA
) -> tuple[RunManifest, list[PredictionRecord]]:
    manifest: RunManifest | None = None
    records: list[PredictionRecord] = []
    for lineno, rec in _records(source):
        if manifest is None:
            if "manifest" not in rec:
                raise DatasetError("prediction file must begin with a manifest record", lineno)
            try:
                manifest = RunManifest.from_dict(rec["manifest"])
            except TypeError as exc:
                raise DatasetError(f"bad manifest: {exc}", lineno) from None
            continue
        if "id" not in rec or "labels" not in rec:
            raise DatasetError("prediction record needs 'id' and 'labels'", lineno)
        _warn_unknown(rec, _PREDICTION_FIELDS, lineno)
        labels = rec["labels"]
        status = rec.get("status", "clean" if labels is not None else "failed")
        predicted = None if labels is None else parse_labels(labels, schema, lineno)
        if predicted is None and status != "failed":
            raise DatasetError("null labels are only allowed on failed records", lineno)
        records.append(PredictionRecord(rec["id"], predicted, rec.get("raw"), status, rec.get("note")))
    if manifest is None:
        raise DatasetError("empty prediction file")
    return manifest, records


# --- writing --------------------------------------------------------------

def corpus_lines(corpus: Corpus) -> Iterator[str]:
    for inst in corpus:
        rec: dict[str, Any] = {"id": inst.id, "labels": format_binary_code(inst.truth, corpus.schema)}
        if inst.text is not None:
            rec["text"] = inst.text
        yield json.dumps(rec, ensure_ascii=False)


def prediction_lines(manifest: RunManifest, records: Sequence[PredictionRecord], schema: LabelSchema) -> Iterator[str]:
    yield json.dumps({"manifest": manifest.to_dict()}, ensure_ascii=False, sort_keys=True)
    for r in records:
        rec: dict[str, Any] = {
            "id": r.id,
            "labels": None if r.predicted is None else format_binary_code(r.predicted, schema),
            "status": r.status,
        }
        if r.raw is not None:
            rec["raw"] = r.raw
        if r.note:
            rec["note"] = r.note
        yield json.dumps(rec, ensure_ascii=False)


def write_lines(lines: Iterable[str], dest: str | Path | TextIO) -> None:
    if isinstance(dest, (str, Path)):
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            write_lines(lines, fh)
        return
    for line in lines:
        dest.write(line + "\n")


def dumps_corpus(corpus: Corpus) -> str:
    buf = io.StringIO()
    write_lines(corpus_lines(corpus), buf)
    return buf.getvalue()


# --- alignment ------------------------------------------------------------

def align(
    corpus: Corpus,
    predictions: Sequence[PredictionRecord],
    strict: bool = True,
    failure_policy: str = "exclude",
) -> AlignedPairs:
    """Join predictions to corpus truths by id, in corpus order.

    Duplicate prediction ids are always an error.  In strict mode any id
    present on one side only is an error; in lenient mode such ids are
    dropped and listed in ``warnings``.  Failed predictions are dropped
    (``exclude``) or scored as the empty set (``empty``).
    """
    if failure_policy not in FAILURE_POLICIES:
        raise ValidationError(f"failure_policy must be one of {FAILURE_POLICIES}")
    counts = Counter(r.id for r in predictions)
    dupes = sorted(i for i, c in counts.items() if c > 1)
    if dupes:
        raise AlignmentError(f"duplicate predictions for ids {dupes}", dupes)
    by_id = {r.id: r for r in predictions}
    known = set(corpus.ids())
    missing = [i for i in corpus.ids() if i not in by_id]
    unknown = [r.id for r in predictions if r.id not in known]
    warnings: list[str] = []
    if strict:
        if missing:
            raise AlignmentError(f"no prediction for ids {missing}", missing)
        if unknown:
            raise AlignmentError(f"predictions for unknown ids {unknown}", unknown)
    else:
        if missing:
            warnings.append(f"dropped {len(missing)} corpus ids without prediction: {missing}")
        if unknown:
            warnings.append(f"dropped {len(unknown)} predictions for unknown ids: {unknown}")
        for w in warnings:
            log.warning(w)

    pairs: list[Pair] = []
    excluded: list[str] = []
    for inst in corpus:
        rec = by_id.get(inst.id)
        if rec is None:
            continue
        predicted = rec.predicted
        if predicted is None:
            if failure_policy == "exclude":
                excluded.append(inst.id)
                continue
            predicted = corpus.schema.empty()
        check_width(predicted, corpus.schema)
        pairs.append(Pair(inst.id, inst.truth, predicted))
    return AlignedPairs(corpus.schema, tuple(pairs), tuple(excluded), tuple(warnings))


# --- descriptive statistics -----------------------------------------------

@dataclass(frozen=True)
class DistributionSummary:
    schema: LabelSchema
    N: int
    label_counts: dict[str, int]
    set_counts: dict[str, int]  # binary code -> count, canonical order, all M sets
    cardinality_histogram: dict[int, int]
    unobserved: tuple[str, ...]

    @property
    def total_labels(self) -> int:
        return sum(self.label_counts.values())

    @property
    def label_shares(self) -> dict[str, float]:
        """Each label's share of all single labels in the corpus."""
        total = self.total_labels
        return {k: (v / total if total else 0.0) for k, v in self.label_counts.items()}

    @property
    def label_prevalence(self) -> dict[str, float]:
        return {k: v / self.N for k, v in self.label_counts.items()}

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(code for code, c in self.set_counts.items() if c)

    def to_dict(self) -> dict[str, Any]:
        return {
            "N": self.N,
            "schema": list(self.schema.labels),
            "total_labels": self.total_labels,
            "label_counts": self.label_counts,
            "label_shares": {k: round(v, 6) for k, v in self.label_shares.items()},
            "set_counts": self.set_counts,
            "cardinality_histogram": {str(k): v for k, v in self.cardinality_histogram.items()},
            "observed_sets": len(self.observed),
            "unobserved": list(self.unobserved),
        }


def distribution_of(schema: LabelSchema, sets: Iterable[LabelSet]) -> DistributionSummary:
    order = enumerate_powerset(schema)
    tally = Counter(s.mask for s in sets)
    n = sum(tally.values())
    if n < 1:
        raise DatasetError("distribution statistics need at least one instance")
    set_counts = {format_binary_code(s, schema): tally.get(s.mask, 0) for s in order}
    label_counts = {}
    for i, lab in enumerate(schema.labels):
        bit = schema.bit(i)
        label_counts[lab] = sum(c for m, c in tally.items() if m & bit)
    hist = {k: 0 for k in range(schema.L + 1)}
    for m, c in tally.items():
        hist[bin(m).count("1")] += c
    unobserved = tuple(code for code, c in set_counts.items() if c == 0)
    return DistributionSummary(schema, n, label_counts, set_counts, hist, unobserved)


def corpus_stats(corpus: Corpus) -> DistributionSummary:
    return distribution_of(corpus.schema, (inst.truth for inst in corpus))
