"""Label-, instance- and label-set-level metrics with micro/macro aggregation.

Label-set metrics treat each member of the label power set as a class.  The
partial-match variant adds fractional credit to precision (from false
positives) and recall (from false negatives) using the overlap score

    |P & T| / (|P & T| + (|P - T| + |T - P|) / 2)

which is the Dice coefficient 2|P & T| / (|P| + |T|), with dice(empty, empty)
taken as 1.

Every ratio with an empty denominator evaluates to 0 and, for per-set
scores, sets the ``no_support`` flag.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .dataset import AlignedPairs, Pair, RunManifest
from .errors import SchemaError, ValidationError
from .labelspace import (
    LabelSchema,
    LabelSet,
    PowerSetOrder,
    enumerate_powerset,
    format_binary_code,
    parse_binary_code,
)

REPORT_VERSION = "mlceval.report/1"
AGGREGATE_VERSION = "mlceval.aggregate/1"
MACRO_POLICIES = ("observed", "truth-supported", "full-powerset")
IDENTITY_TOL = 1e-12
ROUND_DIGITS = 6


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class BinaryCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __add__(self, other: "BinaryCounts") -> "BinaryCounts":
        return BinaryCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    support: int
    no_support: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "precision": round(self.precision, ROUND_DIGITS),
            "recall": round(self.recall, ROUND_DIGITS),
            "f1": round(self.f1, ROUND_DIGITS),
            "support": self.support,
            "no_support": self.no_support,
        }


def prf(p_num: float, p_den: float, r_num: float, r_den: float, support: int) -> PRF:
    p = _ratio(p_num, p_den)
    r = _ratio(r_num, r_den)
    return PRF(p, r, harmonic(p, r), support, no_support=(p_den == 0 or r_den == 0))


# --- label level ------------------------------------------------------------

@dataclass(frozen=True)
class LabelScore:
    label: str
    counts: BinaryCounts
    prf: PRF
    accuracy: float


def _label_index(schema: LabelSchema, label: str | int) -> int:
    if isinstance(label, int):
        if not 0 <= label < schema.L:
            raise SchemaError(f"label position {label} out of range")
        return label
    return schema.index(label)


def label_counts(pairs: AlignedPairs, label: str | int) -> BinaryCounts:
    bit = pairs.schema.bit(_label_index(pairs.schema, label))
    tp = fp = fn = tn = 0
    for p in pairs:
        t, y = bool(p.truth.mask & bit), bool(p.predicted.mask & bit)
        if t and y:
            tp += 1
        elif y:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return BinaryCounts(tp, fp, fn, tn)


def _label_score(name: str, c: BinaryCounts) -> LabelScore:
    return LabelScore(
        name,
        c,
        prf(c.tp, c.tp + c.fp, c.tp, c.tp + c.fn, c.tp + c.fn),
        _ratio(c.tp + c.tn, c.n),
    )


def label_prf(pairs: AlignedPairs, label: str | int) -> LabelScore:
    if pairs.N < 1:
        raise ValidationError("label metrics need at least one pair")
    i = _label_index(pairs.schema, label)
    return _label_score(pairs.schema.labels[i], label_counts(pairs, i))


# --- instance level -----------------------------------------------------------

def overlap_score(truth: LabelSet, predicted: LabelSet) -> float:
    """Partial-match credit for one instance; 1 when both sets are empty."""
    if truth.width != predicted.width:
        raise SchemaError(f"width mismatch: {truth.width} vs {predicted.width}")
    inter = bin(truth.mask & predicted.mask).count("1")
    diff = bin(truth.mask ^ predicted.mask).count("1")
    if inter == 0 and diff == 0:
        return 1.0
    return inter / (inter + diff / 2)


def hamming_accuracy(truth: LabelSet, predicted: LabelSet) -> float:
    if truth.width != predicted.width:
        raise SchemaError(f"width mismatch: {truth.width} vs {predicted.width}")
    wrong = bin(truth.mask ^ predicted.mask).count("1")
    return (truth.width - wrong) / truth.width


def instance_scores(truth: LabelSet, predicted: LabelSet) -> tuple[float, float]:
    """(dice, hamming_accuracy) for a single instance."""
    return overlap_score(truth, predicted), hamming_accuracy(truth, predicted)


@dataclass(frozen=True)
class InstanceScore:
    id: str
    dice: float
    hamming_accuracy: float


# --- label-set level ----------------------------------------------------------

@dataclass(frozen=True)
class SetLevelCounts:
    order: PowerSetOrder
    tp: tuple[int, ...]
    fp: tuple[int, ...]
    fn: tuple[int, ...]
    ptp_fp: tuple[float, ...]
    ptp_fn: tuple[float, ...]

    @property
    def N(self) -> int:
        return sum(self.tp) + sum(self.fp)

    @property
    def M(self) -> int:
        return self.order.M


def labelset_counts(pairs: AlignedPairs, order: PowerSetOrder | None = None) -> SetLevelCounts:
    if pairs.N < 1:
        raise ValidationError("label-set metrics need at least one pair")
    order = order or enumerate_powerset(pairs.schema)
    M = order.M
    tp, fp, fn = [0] * M, [0] * M, [0] * M
    ptp_fp, ptp_fn = [0.0] * M, [0.0] * M
    for p in pairs:
        kt = order.index(p.truth)
        if p.truth == p.predicted:
            tp[kt] += 1
            continue
        kp = order.index(p.predicted)
        credit = overlap_score(p.truth, p.predicted)
        fp[kp] += 1
        ptp_fp[kp] += credit
        fn[kt] += 1
        ptp_fn[kt] += credit
    return SetLevelCounts(order, tuple(tp), tuple(fp), tuple(fn), tuple(ptp_fp), tuple(ptp_fn))


def _set_index(counts: SetLevelCounts, k: int | LabelSet) -> int:
    if isinstance(k, LabelSet):
        return counts.order.index(k)
    if not 0 <= k < counts.M:
        raise IndexError(f"label-set index {k} out of range 0..{counts.M - 1}")
    return k


def labelset_prf_exact(counts: SetLevelCounts, k: int | LabelSet) -> PRF:
    k = _set_index(counts, k)
    tp, fp, fn = counts.tp[k], counts.fp[k], counts.fn[k]
    return prf(tp, tp + fp, tp, tp + fn, tp + fn)


def labelset_prf_partial(counts: SetLevelCounts, k: int | LabelSet) -> PRF:
    k = _set_index(counts, k)
    tp, fp, fn = counts.tp[k], counts.fp[k], counts.fn[k]
    return prf(tp + counts.ptp_fp[k], tp + fp, tp + counts.ptp_fn[k], tp + fn, tp + fn)


@dataclass(frozen=True)
class SetScore:
    index: int
    code: str
    tp: int
    fp: int
    fn: int
    ptp_fp: float
    ptp_fn: float
    exact: PRF
    partial: PRF

    @property
    def observed(self) -> bool:
        return self.tp + self.fp + self.fn > 0

    @property
    def truth_supported(self) -> bool:
        return self.tp + self.fn > 0


def labelset_scores(counts: SetLevelCounts) -> list[SetScore]:
    schema = counts.order.schema
    return [
        SetScore(
            k,
            format_binary_code(s, schema),
            counts.tp[k],
            counts.fp[k],
            counts.fn[k],
            counts.ptp_fp[k],
            counts.ptp_fn[k],
            labelset_prf_exact(counts, k),
            labelset_prf_partial(counts, k),
        )
        for k, s in enumerate(counts.order)
    ]


# --- model level ------------------------------------------------------------

@dataclass(frozen=True)
class MicroScores:
    precision: float
    recall: float
    f1: float
    accuracy: float

    def to_dict(self) -> dict[str, float]:
        return {k: round(getattr(self, k), ROUND_DIGITS) for k in ("precision", "recall", "f1", "accuracy")}


def micro_exact(counts: SetLevelCounts) -> MicroScores:
    tp, fp, fn = sum(counts.tp), sum(counts.fp), sum(counts.fn)
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    accuracy = _ratio(tp, counts.N)
    out = MicroScores(p, r, harmonic(p, r), accuracy)
    assert abs(p - accuracy) <= IDENTITY_TOL and abs(r - accuracy) <= IDENTITY_TOL
    return out


def micro_partial(counts: SetLevelCounts, pairs: AlignedPairs) -> MicroScores:
    tp, fp, fn = sum(counts.tp), sum(counts.fp), sum(counts.fn)
    p = _ratio(tp + sum(counts.ptp_fp), tp + fp)
    r = _ratio(tp + sum(counts.ptp_fn), tp + fn)
    accuracy = _ratio(sum(hamming_accuracy(x.truth, x.predicted) for x in pairs), pairs.N)
    return MicroScores(p, r, harmonic(p, r), accuracy)


@dataclass(frozen=True)
class MacroScores:
    precision: float
    recall: float
    f1: float
    n_sets: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "precision": round(self.precision, ROUND_DIGITS),
            "recall": round(self.recall, ROUND_DIGITS),
            "f1": round(self.f1, ROUND_DIGITS),
            "n_sets": self.n_sets,
        }


def macro(scores: Sequence[SetScore], policy: str = "observed", match: str = "exact") -> MacroScores:
    """Unweighted mean of per-set precision/recall/F1 over the policy's sets."""
    if policy == "observed":
        chosen = [s for s in scores if s.observed]
    elif policy == "truth-supported":
        chosen = [s for s in scores if s.truth_supported]
    elif policy == "full-powerset":
        chosen = list(scores)
    else:
        raise ValidationError(f"macro policy must be one of {MACRO_POLICIES}, got {policy!r}")
    if match not in ("exact", "partial"):
        raise ValidationError(f"match must be 'exact' or 'partial', got {match!r}")
    if not chosen:
        raise ValidationError(f"macro average under policy {policy!r} has no label sets")
    vals = [getattr(s, match) for s in chosen]
    n = len(vals)
    return MacroScores(
        sum(v.precision for v in vals) / n,
        sum(v.recall for v in vals) / n,
        sum(v.f1 for v in vals) / n,
        n,
    )


# --- full report ------------------------------------------------------------

@dataclass(frozen=True)
class EvalOptions:
    macro_policy: str = "observed"

    def __post_init__(self) -> None:
        if self.macro_policy not in MACRO_POLICIES:
            raise ValidationError(f"macro policy must be one of {MACRO_POLICIES}")


@dataclass(frozen=True)
class EvalReport:
    schema: LabelSchema
    manifest: RunManifest | None
    pairs: AlignedPairs
    options: EvalOptions
    labels: tuple[LabelScore, ...]
    label_micro: LabelScore
    label_macro: dict[str, float]
    instances: tuple[InstanceScore, ...]
    instance_summary: dict[str, float]
    sets: tuple[SetScore, ...]
    micro_exact: MicroScores
    micro_partial: MicroScores
    macro: dict[str, dict[str, MacroScores]]
    self_check: dict[str, bool] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.pairs.N

    @property
    def M(self) -> int:
        return self.schema.M

    @property
    def self_check_passed(self) -> bool:
        return all(self.self_check.values())

    @property
    def exact_accuracy(self) -> float:
        return self.micro_exact.accuracy

    @property
    def partial_accuracy(self) -> float:
        return self.micro_partial.accuracy

    def macro_default(self, match: str = "exact") -> MacroScores:
        return self.macro[self.options.macro_policy][match]

    def cells(self) -> list[tuple[str, str, int]]:
        """Sparse confusion cells (true code, predicted code, count) in canonical order."""
        order = enumerate_powerset(self.schema)
        tally = Counter((order.index(p.truth), order.index(p.predicted)) for p in self.pairs)
        return [
            (format_binary_code(order[i], self.schema), format_binary_code(order[j], self.schema), c)
            for (i, j), c in sorted(tally.items())
        ]

    def flatten(self) -> dict[str, float]:
        """Scalar metrics keyed by stable dotted names."""
        out: dict[str, float] = {
            "exact.accuracy": self.micro_exact.accuracy,
            "exact.micro.precision": self.micro_exact.precision,
            "exact.micro.recall": self.micro_exact.recall,
            "exact.micro.f1": self.micro_exact.f1,
            "partial.accuracy": self.micro_partial.accuracy,
            "partial.micro.precision": self.micro_partial.precision,
            "partial.micro.recall": self.micro_partial.recall,
            "partial.micro.f1": self.micro_partial.f1,
        }
        for policy, by_match in self.macro.items():
            for match, m in by_match.items():
                for metric in ("precision", "recall", "f1"):
                    out[f"{match}.macro.{policy}.{metric}"] = getattr(m, metric)
        for k, v in self.instance_summary.items():
            out[f"instance.{k}"] = v
        out["label.micro.precision"] = self.label_micro.prf.precision
        out["label.micro.recall"] = self.label_micro.prf.recall
        out["label.micro.f1"] = self.label_micro.prf.f1
        out["label.micro.accuracy"] = self.label_micro.accuracy
        for k, v in self.label_macro.items():
            out[f"label.macro.{k}"] = v
        for ls in self.labels:
            for metric in ("precision", "recall", "f1"):
                out[f"label.{ls.label}.{metric}"] = getattr(ls.prf, metric)
            out[f"label.{ls.label}.accuracy"] = ls.accuracy
        for s in self.sets:
            out[f"set.{s.code}.support"] = float(s.tp + s.fn)
            for match in ("exact", "partial"):
                v = getattr(s, match)
                for metric in ("precision", "recall", "f1"):
                    out[f"set.{s.code}.{match}.{metric}"] = getattr(v, metric)
        return out

    def to_dict(self) -> dict[str, Any]:
        r = lambda x: round(x, ROUND_DIGITS)  # noqa: E731
        return {
            "kind": "eval-report",
            "version": REPORT_VERSION,
            "schema": list(self.schema.labels),
            "schema_digest": self.schema.digest,
            "manifest": self.manifest.to_dict() if self.manifest else None,
            "N": self.N,
            "M": self.M,
            "excluded": list(self.pairs.excluded),
            "options": {"macro_policy": self.options.macro_policy},
            "model": {
                "exact": self.micro_exact.to_dict(),
                "partial": self.micro_partial.to_dict(),
                "macro": {pol: {m: v.to_dict() for m, v in d.items()} for pol, d in self.macro.items()},
            },
            "label": {
                "micro": {**self.label_micro.prf.to_dict(), "accuracy": r(self.label_micro.accuracy)},
                "macro": {k: r(v) for k, v in self.label_macro.items()},
                "per_label": {
                    ls.label: {
                        **ls.prf.to_dict(),
                        "accuracy": r(ls.accuracy),
                        "tp": ls.counts.tp,
                        "fp": ls.counts.fp,
                        "fn": ls.counts.fn,
                        "tn": ls.counts.tn,
                    }
                    for ls in self.labels
                },
            },
            "instance": {k: r(v) for k, v in self.instance_summary.items()},
            "label_sets": [
                {
                    "code": s.code,
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                    "ptp_fp": r(s.ptp_fp),
                    "ptp_fn": r(s.ptp_fn),
                    "exact": s.exact.to_dict(),
                    "partial": s.partial.to_dict(),
                }
                for s in self.sets
            ],
            "self_check": dict(self.self_check),
            "cells": [list(c) for c in self.cells()],
            "pairs": [
                [p.id, format_binary_code(p.truth, self.schema), format_binary_code(p.predicted, self.schema)]
                for p in self.pairs
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalReport":
        """Rebuild a report by re-evaluating its stored pairs at full precision."""
        if d.get("kind") != "eval-report":
            raise ValidationError("not an eval report document")
        schema = LabelSchema(tuple(d["schema"]))
        if schema.digest != d.get("schema_digest"):
            raise ValidationError("schema digest does not match schema labels")
        pairs = AlignedPairs(
            schema,
            tuple(Pair(i, parse_binary_code(t, schema), parse_binary_code(p, schema)) for i, t, p in d["pairs"]),
            excluded=tuple(d.get("excluded", ())),
        )
        manifest = RunManifest.from_dict(d["manifest"]) if d.get("manifest") else None
        return evaluate(pairs, EvalOptions(**d.get("options", {})), manifest)


def _check(checks: dict[str, bool], name: str, ok: bool) -> None:
    checks[name] = checks.get(name, True) and bool(ok)


def evaluate(
    pairs: AlignedPairs,
    options: EvalOptions | None = None,
    manifest: RunManifest | None = None,
) -> EvalReport:
    if pairs.N < 1:
        raise ValidationError("cannot evaluate an empty set of pairs")
    options = options or EvalOptions()
    schema = pairs.schema
    order = enumerate_powerset(schema)

    labels = tuple(_label_score(lab, label_counts(pairs, i)) for i, lab in enumerate(schema.labels))
    pooled = BinaryCounts(0, 0, 0, 0)
    for ls in labels:
        pooled = pooled + ls.counts
    label_micro = _label_score("micro", pooled)
    L = schema.L
    label_macro = {
        "precision": sum(ls.prf.precision for ls in labels) / L,
        "recall": sum(ls.prf.recall for ls in labels) / L,
        "f1": sum(ls.prf.f1 for ls in labels) / L,
        "accuracy": sum(ls.accuracy for ls in labels) / L,
    }

    instances = []
    inter_sum = pred_sum = truth_sum = 0
    for p in pairs:
        dice, ham = instance_scores(p.truth, p.predicted)
        instances.append(InstanceScore(p.id, dice, ham))
        inter_sum += (p.truth & p.predicted).cardinality
        pred_sum += p.predicted.cardinality
        truth_sum += p.truth.cardinality
    n = pairs.N
    pooled_p = _ratio(inter_sum, pred_sum)
    pooled_r = _ratio(inter_sum, truth_sum)
    instance_summary = {
        "f1_mean": sum(x.dice for x in instances) / n,
        "f1_pooled": harmonic(pooled_p, pooled_r),
        "precision_pooled": pooled_p,
        "recall_pooled": pooled_r,
        "hamming_accuracy": sum(x.hamming_accuracy for x in instances) / n,
    }

    counts = labelset_counts(pairs, order)
    sets = tuple(labelset_scores(counts))
    mex = micro_exact(counts)
    mpa = micro_partial(counts, pairs)
    # N >= 1 guarantees every policy has at least one set
    macros = {
        policy: {m: macro(sets, policy, m) for m in ("exact", "partial")} for policy in MACRO_POLICIES
    }

    tol = IDENTITY_TOL
    checks: dict[str, bool] = {}
    _check(checks, "exact_micro_identity",
           abs(mex.precision - mex.accuracy) <= tol and abs(mex.recall - mex.accuracy) <= tol
           and abs(mex.f1 - mex.accuracy) <= tol)
    _check(checks, "fp_fn_balance", sum(counts.fp) == sum(counts.fn))
    _check(checks, "ptp_balance", abs(sum(counts.ptp_fp) - sum(counts.ptp_fn)) <= tol * max(1, n))
    _check(checks, "partial_micro_identity",
           abs(mpa.precision - mpa.recall) <= tol and abs(mpa.f1 - mpa.precision) <= tol)
    _check(checks, "accuracy_triple_identity",
           abs(mpa.accuracy - instance_summary["hamming_accuracy"]) <= tol
           and abs(mpa.accuracy - label_micro.accuracy) <= tol)
    _check(checks, "instance_pooled_equals_label_micro",
           abs(instance_summary["f1_pooled"] - label_micro.prf.f1) <= tol)
    _check(checks, "set_count_totals", sum(counts.tp) + sum(counts.fp) == n)
    _check(checks, "exact_le_partial", all(s.exact.f1 <= s.partial.f1 + tol for s in sets))
    values: list[float] = [mex.f1, mpa.f1, *instance_summary.values(), *label_macro.values()]
    values += [v for s in sets for v in (s.exact.f1, s.partial.f1, s.exact.precision, s.partial.precision,
                                          s.exact.recall, s.partial.recall)]
    values += [v for d in macros.values() for m in d.values() for v in (m.precision, m.recall, m.f1)]
    _check(checks, "bounds", all(-tol <= v <= 1 + tol and not math.isnan(v) for v in values))

    return EvalReport(
        schema=schema,
        manifest=manifest,
        pairs=pairs,
        options=options,
        labels=labels,
        label_micro=label_micro,
        label_macro=label_macro,
        instances=tuple(instances),
        instance_summary=instance_summary,
        sets=sets,
        micro_exact=mex,
        micro_partial=mpa,
        macro=macros,
        self_check=checks,
    )


# --- aggregation across runs --------------------------------------------------

@dataclass(frozen=True)
class MetricStat:
    mean: float
    std: float
    n: int


def summarize(values: Sequence[float]) -> MetricStat:
    """Mean and sample standard deviation (n - 1); std is 0 for a single value."""
    if not values:
        raise ValidationError("no values to summarize")
    mean = math.fsum(values) / len(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return MetricStat(mean, std, len(values))


@dataclass(frozen=True)
class AggregateReport:
    schema: LabelSchema
    variant: str  # "runs" | "fold-pooled" | "fold-averaged"
    metrics: dict[str, MetricStat]
    run_count: int
    manifests: tuple[dict[str, Any], ...] = ()
    per_fold: "AggregateReport | None" = None

    def __getitem__(self, name: str) -> MetricStat:
        return self.metrics[name]

    def to_dict(self) -> dict[str, Any]:
        r = lambda x: round(x, ROUND_DIGITS)  # noqa: E731
        return {
            "kind": "aggregate-report",
            "version": AGGREGATE_VERSION,
            "schema": list(self.schema.labels),
            "schema_digest": self.schema.digest,
            "variant": self.variant,
            "run_count": self.run_count,
            "std_convention": "sample (n-1); 0 for a single run",
            "manifests": list(self.manifests),
            "metrics": {k: {"mean": r(v.mean), "std": r(v.std), "n": v.n} for k, v in self.metrics.items()},
            "per_fold": self.per_fold.to_dict() if self.per_fold else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AggregateReport":
        if d.get("kind") != "aggregate-report":
            raise ValidationError("not an aggregate report document")
        return cls(
            LabelSchema(tuple(d["schema"])),
            d["variant"],
            {k: MetricStat(v["mean"], v["std"], v["n"]) for k, v in d["metrics"].items()},
            d["run_count"],
            tuple(d.get("manifests", ())),
            cls.from_dict(d["per_fold"]) if d.get("per_fold") else None,
        )


def _aggregate_flat(flats: Sequence[Mapping[str, float]]) -> dict[str, MetricStat]:
    keys = list(flats[0])
    for f in flats[1:]:
        if list(f) != keys:
            raise ValidationError("reports do not share the same metric structure")
    return {k: summarize([f[k] for f in flats]) for k in keys}


def _run_key(rep: EvalReport) -> tuple:
    m = rep.manifest
    return (m.model, m.strategy, m.repeat) if m else (None, None, 0)


def aggregate_runs(reports: Sequence[EvalReport]) -> AggregateReport:
    """Mean and sample std of every scalar metric across runs.

    Reports carrying fold indices are first combined per (model, strategy,
    repeat): the default ``fold-pooled`` variant re-evaluates the
    concatenated held-out pairs of each repeat; the ``fold-averaged``
    variant (attached as ``per_fold``) averages fold metrics within a repeat.
    """
    if not reports:
        raise ValidationError("no reports to aggregate")
    schema = reports[0].schema
    for rep in reports[1:]:
        if rep.schema.digest != schema.digest:
            raise ValidationError("cannot aggregate reports with different schemas")
    manifests = tuple(rep.manifest.to_dict() for rep in reports if rep.manifest)
    folded = [rep for rep in reports if rep.manifest is not None and rep.manifest.fold is not None]
    if not folded:
        return AggregateReport(schema, "runs", _aggregate_flat([r.flatten() for r in reports]),
                               len(reports), manifests)
    if len(folded) != len(reports):
        raise ValidationError("either all reports carry fold indices or none do")

    groups: dict[tuple, list[EvalReport]] = defaultdict(list)
    for rep in reports:
        groups[_run_key(rep)].append(rep)
    pooled_flats, averaged_flats = [], []
    for key in sorted(groups, key=lambda k: tuple("" if x is None else str(x) for x in k)):
        reps = sorted(groups[key], key=lambda r: r.manifest.fold)
        folds = [r.manifest.fold for r in reps]
        if len(set(folds)) != len(folds):
            raise ValidationError(f"duplicate fold indices within run {key}")
        merged = AlignedPairs(schema, tuple(p for r in reps for p in r.pairs))
        pooled_flats.append(evaluate(merged, reps[0].options).flatten())
        per_fold = _aggregate_flat([r.flatten() for r in reps])
        averaged_flats.append({k: v.mean for k, v in per_fold.items()})
    per_fold_report = AggregateReport(schema, "fold-averaged", _aggregate_flat(averaged_flats),
                                      len(averaged_flats), manifests)
    return AggregateReport(schema, "fold-pooled", _aggregate_flat(pooled_flats), len(pooled_flats),
                           manifests, per_fold_report)


def pairs_from_cells(schema: LabelSchema, cells: Iterable[tuple[str, str, int]]) -> AlignedPairs:
    out = []
    for t, p, c in cells:
        ts, ps = parse_binary_code(t, schema), parse_binary_code(p, schema)
        out.extend([(ts, ps)] * int(c))
    return AlignedPairs.from_sets(schema, out)
