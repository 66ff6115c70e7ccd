"""Synthetic corpora, noisy prediction runs and count-constrained fixtures.

All randomness goes through ``numpy.random.Generator(PCG64(seed))``, which
is stable across platforms for a given numpy major version.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .confusion import build_confusion, group_query, label_drilldown, taxonomy_summary
from .dataset import AlignedPairs, AnnotatedInstance, Corpus, Pair, PredictionRecord
from .errors import FixtureError, ValidationError
from .labelspace import (
    DEFAULT_SCHEMA,
    LabelSchema,
    LabelSet,
    enumerate_powerset,
    format_binary_code,
    parse_binary_code,
)

RNG_ALGORITHM = "numpy.PCG64"
PRESETS = ("paper-corpus", "figure4-fixture", "noise-default")


def make_rng(seed: int | None, *stream: int) -> np.random.Generator:
    """Seeded generator; extra integers select an independent sub-stream."""
    if seed is None:
        raise ValidationError("a seed is required for reproducible generation")
    return np.random.Generator(np.random.PCG64([seed, *stream]))


def _schema_of(doc: Mapping[str, Any]) -> LabelSchema:
    return LabelSchema(tuple(doc["schema"])) if "schema" in doc else DEFAULT_SCHEMA


# --- distribution specs ---------------------------------------------------

@dataclass(frozen=True)
class DistributionSpec:
    """Label-set frequencies, either exact counts or probabilities plus N."""

    schema: LabelSchema
    N: int
    counts: dict[int, int] | None = None  # mask -> count
    probabilities: dict[int, float] | None = None  # mask -> probability

    def __post_init__(self) -> None:
        if (self.counts is None) == (self.probabilities is None):
            raise ValidationError("give exactly one of counts or probabilities")
        if self.N < 1:
            raise ValidationError("N must be at least 1")
        table = self.counts if self.counts is not None else self.probabilities
        for mask in table:
            if not 0 <= mask < self.schema.M:
                raise ValidationError(f"label-set mask {mask} is outside the power set")
        if self.counts is not None:
            if any(c < 0 for c in self.counts.values()):
                raise ValidationError("counts must be non-negative")
            if sum(self.counts.values()) != self.N:
                raise ValidationError(f"counts sum to {sum(self.counts.values())}, expected N={self.N}")
        else:
            if any(not 0 <= p <= 1 for p in self.probabilities.values()):
                raise ValidationError("probabilities must lie in [0, 1]")
            if abs(sum(self.probabilities.values()) - 1) > 1e-9:
                raise ValidationError("probabilities must sum to 1")

    @property
    def mode(self) -> str:
        return "counts" if self.counts is not None else "probabilities"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "DistributionSpec":
        schema = _schema_of(doc)
        mode = doc.get("mode", "counts")
        key = "counts" if mode == "counts" else "probabilities"
        if key not in doc:
            raise ValidationError(f"distribution spec in {mode} mode needs a {key!r} table")
        table = {parse_binary_code(code, schema).mask: v for code, v in doc[key].items()}
        if mode == "counts":
            n = int(doc.get("N", sum(table.values())))
            return cls(schema, n, counts={k: int(v) for k, v in table.items()})
        return cls(schema, int(doc["N"]), probabilities={k: float(v) for k, v in table.items()})

    def to_dict(self) -> dict[str, Any]:
        order = enumerate_powerset(self.schema)
        table = self.counts if self.counts is not None else self.probabilities
        return {
            "schema": list(self.schema.labels),
            "mode": self.mode,
            "N": self.N,
            self.mode: {format_binary_code(s, self.schema): table[s.mask] for s in order if s.mask in table},
        }


def sample_corpus(spec: DistributionSpec, seed: int, id_prefix: str = "syn") -> Corpus:
    """Draw a corpus.  Count mode reproduces the counts exactly, in shuffled order."""
    rng = make_rng(seed)
    order = enumerate_powerset(spec.schema)
    if spec.counts is not None:
        masks = np.array(
            [s.mask for s in order for _ in range(spec.counts.get(s.mask, 0))], dtype=np.int64
        )
        masks = masks[rng.permutation(len(masks))]
    else:
        support = [s.mask for s in order if spec.probabilities.get(s.mask, 0) > 0]
        probs = np.array([spec.probabilities[m] for m in support])
        masks = np.array(support, dtype=np.int64)[rng.choice(len(support), size=spec.N, p=probs / probs.sum())]
    width = len(str(spec.N))
    instances = []
    for i, m in enumerate(masks):
        iid = f"{id_prefix}-{i:0{width}d}"
        instances.append(AnnotatedInstance(iid, LabelSet(int(m), spec.schema.L), f"[placeholder note {iid}]"))
    return Corpus(spec.schema, tuple(instances))


# --- noise kernels ------------------------------------------------------------

@dataclass(frozen=True)
class NoiseKernel:
    """Prediction noise: independent per-label flips, or a set-to-set transition matrix."""

    schema: LabelSchema
    mode: str
    hallucination: tuple[float, ...] = ()
    omission: tuple[float, ...] = ()
    transition: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.mode == "per-label":
            for name, rates in (("hallucination", self.hallucination), ("omission", self.omission)):
                if len(rates) != self.schema.L:
                    raise ValidationError(f"{name} rates need {self.schema.L} entries")
                if any(not 0 <= r <= 1 for r in rates):
                    raise ValidationError(f"{name} rates must lie in [0, 1]")
        elif self.mode == "per-set-transition":
            t = self.transition
            M = self.schema.M
            if t is None or t.shape != (M, M):
                raise ValidationError(f"transition matrix must be {M}x{M}")
            if (t < 0).any() or (t > 1).any():
                raise ValidationError("transition probabilities must lie in [0, 1]")
            if not np.allclose(t.sum(axis=1), 1.0, rtol=0, atol=1e-9):
                raise ValidationError("transition rows must sum to 1")
        else:
            raise ValidationError(f"unknown noise mode {self.mode!r}")

    @classmethod
    def per_label(cls, schema: LabelSchema, hallucination: float | Mapping[str, float] = 0.0,
                  omission: float | Mapping[str, float] = 0.0) -> "NoiseKernel":
        def expand(v):
            if isinstance(v, Mapping):
                unknown = set(v) - set(schema.labels)
                if unknown:
                    raise ValidationError(f"rates given for unknown labels {sorted(unknown)}")
                return tuple(float(v.get(lab, 0.0)) for lab in schema.labels)
            return (float(v),) * schema.L
        return cls(schema, "per-label", expand(hallucination), expand(omission))

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], schema: LabelSchema | None = None) -> "NoiseKernel":
        schema = schema or _schema_of(doc)
        mode = doc.get("mode", "per-label")
        if mode == "per-label":
            return cls.per_label(schema, doc.get("hallucination", 0.0), doc.get("omission", 0.0))
        order = enumerate_powerset(schema)
        t = np.zeros((schema.M, schema.M))
        rows = doc.get("transition", {})
        for src in order:
            code = format_binary_code(src, schema)
            row = rows.get(code)
            if row is None:
                t[src.mask, src.mask] = 1.0  # unlisted rows are noiseless
                continue
            for dst, p in row.items():
                t[src.mask, parse_binary_code(dst, schema).mask] = float(p)
        return cls(schema, "per-set-transition", transition=t)


def perturb(corpus: Corpus, kernel: NoiseKernel, seed: int) -> list[PredictionRecord]:
    """One noisy prediction per instance, drawn independently from the kernel."""
    if kernel.schema != corpus.schema:
        raise ValidationError("noise kernel schema differs from corpus schema")
    rng = make_rng(seed)
    schema = corpus.schema
    L = schema.L
    truths = np.array([inst.truth.mask for inst in corpus], dtype=np.int64)
    if kernel.mode == "per-label":
        u = rng.random((len(truths), L))
        bits = (truths[:, None] >> np.arange(L - 1, -1, -1)) & 1
        h = np.array(kernel.hallucination)
        o = np.array(kernel.omission)
        flip = np.where(bits == 1, u < o, u < h)
        out_bits = bits ^ flip
        preds = (out_bits << np.arange(L - 1, -1, -1)).sum(axis=1)
    else:
        cdf = np.cumsum(kernel.transition, axis=1)
        cdf[:, -1] = 1.0
        u = rng.random(len(truths))
        preds = np.array([int(np.searchsorted(cdf[m], x, side="right")) for m, x in zip(truths, u)])
    return [
        PredictionRecord(inst.id, LabelSet(int(p), L), None, "synthetic")
        for inst, p in zip(corpus, preds)
    ]


# --- fixtures -----------------------------------------------------------------

@dataclass(frozen=True)
class FixtureSpec:
    """Truth frequencies plus explicit confusion cells; the diagonal takes each row's remainder."""

    schema: LabelSchema
    truth_counts: dict[int, int]
    cells: tuple[tuple[int, int, int], ...]  # (true mask, predicted mask, count)
    expect: Mapping[str, Any] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return sum(self.truth_counts.values())

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "FixtureSpec":
        schema = _schema_of(doc)
        if doc.get("diagonal", "row-remainder") != "row-remainder":
            raise FixtureError(f"unknown diagonal rule {doc['diagonal']!r}")
        truth = doc["truth"]
        if isinstance(truth, str):
            truth = load_preset(truth)
        if "counts" in truth:
            truth = truth["counts"]
        counts = {parse_binary_code(c, schema).mask: int(n) for c, n in truth.items()}
        cells = tuple(
            (parse_binary_code(t, schema).mask, parse_binary_code(p, schema).mask, int(n))
            for t, p, n in doc.get("off_diagonal", ())
        )
        return cls(schema, counts, cells, doc.get("expect", {}))


def build_fixture(spec: FixtureSpec, id_prefix: str = "fx") -> AlignedPairs:
    """Expand a fixture spec into aligned pairs, rows in canonical order."""
    schema = spec.schema
    order = enumerate_powerset(schema)
    seen: set[tuple[int, int]] = set()
    row_off: Counter[int] = Counter()
    explicit_diag: dict[int, int] = {}
    for t, p, n in spec.cells:
        if n < 0:
            raise FixtureError(f"negative count for cell {t}->{p}")
        if (t, p) in seen:
            raise FixtureError(
                f"cell {format_binary_code(LabelSet(t, schema.L), schema)} -> "
                f"{format_binary_code(LabelSet(p, schema.L), schema)} listed twice"
            )
        seen.add((t, p))
        if t == p:
            explicit_diag[t] = n
        else:
            row_off[t] += n
    for t in set(row_off) | set(explicit_diag):
        total = spec.truth_counts.get(t, 0)
        code = format_binary_code(LabelSet(t, schema.L), schema)
        if row_off[t] > total:
            raise FixtureError(f"row {code}: off-diagonal cells total {row_off[t]} exceed row count {total}")
        if t in explicit_diag and explicit_diag[t] != total - row_off[t]:
            raise FixtureError(f"row {code}: explicit diagonal {explicit_diag[t]} disagrees with remainder")
    if any(c < 0 for c in spec.truth_counts.values()):
        raise FixtureError("truth counts must be non-negative")

    raw: list[tuple[int, int]] = []
    by_row: dict[int, list[tuple[int, int]]] = {}
    for t, p, n in spec.cells:
        if t != p:
            by_row.setdefault(t, []).append((p, n))
    for s in order:
        t = s.mask
        total = spec.truth_counts.get(t, 0)
        raw.extend([(t, t)] * (total - row_off[t]))
        for p, n in sorted(by_row.get(t, []), key=lambda pn: order.index_of_mask(pn[0])):
            raw.extend([(t, p)] * n)
    width = len(str(len(raw)))
    L = schema.L
    return AlignedPairs(
        schema,
        tuple(Pair(f"{id_prefix}-{i:0{width}d}", LabelSet(t, L), LabelSet(p, L)) for i, (t, p) in enumerate(raw)),
    )


def check_expectations(pairs: AlignedPairs, expect: Mapping[str, Any]) -> dict[str, tuple[Any, Any]]:
    """Recount every expectation on ``pairs``; returns name -> (expected, actual)."""
    schema = pairs.schema
    conf = build_confusion(pairs)
    tax = taxonomy_summary(pairs)
    out: dict[str, tuple[Any, Any]] = {}
    simple = {
        "N": pairs.N,
        "exact_matches": conf.trace,
        "upper_triangle": tax.upper,
        "upper_hallucination": tax.upper_by_kind["hallucination"],
        "lower_triangle": tax.lower,
        "lower_omission": tax.lower_by_kind["omission"],
        "hallucination": tax.hallucination,
        "omission": tax.omission,
        "hybrid": tax.hybrid,
    }
    for key, actual in simple.items():
        if key in expect:
            out[key] = (expect[key], actual)
    for t, p, n in expect.get("cells", ()):
        out[f"cell {t} -> {p}"] = (n, conf.cell(parse_binary_code(t, schema), parse_binary_code(p, schema)))
    for label, d in expect.get("drilldown", {}).items():
        dd = label_drilldown(pairs, label)
        for k in ("hallucinations", "omissions"):
            if k in d:
                out[f"drilldown {label} {k}"] = (d[k], getattr(dd, k))
    for tpat, ppat, n in expect.get("group_queries", ()):
        out[f"group {tpat} -> {ppat}"] = (n, group_query(pairs, tpat, ppat))
    for code, n in expect.get("row_errors", ()):
        s = parse_binary_code(code, schema)
        out[f"row errors {code}"] = (n, sum(1 for x in pairs if x.truth == s and x.predicted != s))
    for code, label, n in expect.get("row_errors_predicting", ()):
        s = parse_binary_code(code, schema)
        bit = schema.bit(label)
        actual = sum(1 for x in pairs if x.truth == s and x.predicted != s and x.predicted.mask & bit)
        out[f"row errors {code} predicting {label}"] = (n, actual)
    return out


# --- presets ------------------------------------------------------------------

def load_preset(name: str) -> dict[str, Any]:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("mlceval.presets").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_config(source: str | Path) -> dict[str, Any]:
    """A preset name or the path of a JSON config file."""
    if str(source) in PRESETS:
        return load_preset(str(source))
    path = Path(source)
    if not path.exists():
        raise ValidationError(f"no such preset or file: {source}")
    return json.loads(path.read_text(encoding="utf-8"))


def paper_corpus(seed: int = 0) -> Corpus:
    return sample_corpus(DistributionSpec.from_dict(load_preset("paper-corpus")), seed, id_prefix="ipe")


def figure4_fixture() -> tuple[AlignedPairs, FixtureSpec]:
    spec = FixtureSpec.from_dict(load_preset("figure4-fixture"))
    return build_fixture(spec), spec
