"""Power-set confusion matrix, error taxonomy and drill-down queries.

Rows are true label sets and columns predicted label sets, both in the
canonical power-set order.  Under that order a strict superset always sits
strictly after its subsets, so pure hallucinations fall above the diagonal
and pure omissions below it; hybrid errors can land on either side.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import Counter
from dataclasses import dataclass
from html import escape
from typing import Iterable

import numpy as np

from .dataset import AlignedPairs
from .errors import ValidationError
from .labelspace import (
    LabelSchema,
    LabelSet,
    LabelSetPattern,
    PowerSetOrder,
    enumerate_powerset,
    format_binary_code,
    format_semantic_code,
    format_textual_code,
    parse_pattern,
)

DENSE_LIMIT = 12  # L above this would make an M x M array too large to hold


class ErrorKind(str, enum.Enum):
    CORRECT = "correct"
    HALLUCINATION = "hallucination"
    OMISSION = "omission"
    HYBRID = "hybrid"


def classify_error(truth: LabelSet, predicted: LabelSet) -> ErrorKind:
    extra = (predicted - truth).mask
    missing = (truth - predicted).mask
    if extra and missing:
        return ErrorKind.HYBRID
    if extra:
        return ErrorKind.HALLUCINATION
    if missing:
        return ErrorKind.OMISSION
    return ErrorKind.CORRECT


@dataclass(frozen=True)
class PowerSetConfusion:
    order: PowerSetOrder
    cells: dict[tuple[int, int], int]  # (true index, predicted index) -> count, nonzero only
    N: int

    @property
    def schema(self) -> LabelSchema:
        return self.order.schema

    @property
    def M(self) -> int:
        return self.order.M

    def cell(self, truth: LabelSet | int, predicted: LabelSet | int) -> int:
        i = truth if isinstance(truth, int) else self.order.index(truth)
        j = predicted if isinstance(predicted, int) else self.order.index(predicted)
        return self.cells.get((i, j), 0)

    @property
    def trace(self) -> int:
        return sum(c for (i, j), c in self.cells.items() if i == j)

    @property
    def errors(self) -> int:
        return self.N - self.trace

    def row_sums(self) -> list[int]:
        out = [0] * self.M
        for (i, _), c in self.cells.items():
            out[i] += c
        return out

    def col_sums(self) -> list[int]:
        out = [0] * self.M
        for (_, j), c in self.cells.items():
            out[j] += c
        return out

    @property
    def upper(self) -> int:
        return sum(c for (i, j), c in self.cells.items() if j > i)

    @property
    def lower(self) -> int:
        return sum(c for (i, j), c in self.cells.items() if j < i)

    def dense(self) -> np.ndarray:
        if self.schema.L > DENSE_LIMIT:
            raise ValidationError(f"dense matrix not available for L > {DENSE_LIMIT}")
        mat = np.zeros((self.M, self.M), dtype=np.int64)
        for (i, j), c in self.cells.items():
            mat[i, j] = c
        return mat

    def iter_cells(self) -> Iterable[tuple[LabelSet, LabelSet, int]]:
        for (i, j) in sorted(self.cells):
            yield self.order[i], self.order[j], self.cells[(i, j)]


def build_confusion(pairs: AlignedPairs, order: PowerSetOrder | None = None) -> PowerSetConfusion:
    if pairs.N < 1:
        raise ValidationError("confusion matrix needs at least one pair")
    order = order or enumerate_powerset(pairs.schema)
    tally = Counter((order.index(p.truth), order.index(p.predicted)) for p in pairs)
    return PowerSetConfusion(order, dict(sorted(tally.items())), pairs.N)


@dataclass(frozen=True)
class TaxonomySummary:
    correct: int
    hallucination: int
    omission: int
    hybrid: int
    upper: int
    lower: int
    upper_by_kind: dict[str, int]
    lower_by_kind: dict[str, int]

    @property
    def errors(self) -> int:
        return self.hallucination + self.omission + self.hybrid

    def to_dict(self) -> dict:
        return {
            "correct": self.correct,
            "errors": self.errors,
            "hallucination": self.hallucination,
            "omission": self.omission,
            "hybrid": self.hybrid,
            "upper_triangle": self.upper,
            "lower_triangle": self.lower,
            "upper_by_kind": dict(self.upper_by_kind),
            "lower_by_kind": dict(self.lower_by_kind),
        }


def taxonomy_summary(pairs: AlignedPairs, order: PowerSetOrder | None = None) -> TaxonomySummary:
    order = order or enumerate_powerset(pairs.schema)
    kinds = Counter()
    upper = Counter()
    lower = Counter()
    for p in pairs:
        kind = classify_error(p.truth, p.predicted)
        kinds[kind] += 1
        i, j = order.index(p.truth), order.index(p.predicted)
        if j > i:
            upper[kind.value] += 1
        elif j < i:
            lower[kind.value] += 1
    names = [k.value for k in ErrorKind if k is not ErrorKind.CORRECT]
    return TaxonomySummary(
        correct=kinds[ErrorKind.CORRECT],
        hallucination=kinds[ErrorKind.HALLUCINATION],
        omission=kinds[ErrorKind.OMISSION],
        hybrid=kinds[ErrorKind.HYBRID],
        upper=sum(upper.values()),
        lower=sum(lower.values()),
        upper_by_kind={n: upper[n] for n in names},
        lower_by_kind={n: lower[n] for n in names},
    )


@dataclass(frozen=True)
class LabelDrilldown:
    label: str
    hallucinations: int
    omissions: int
    transitions: tuple[tuple[LabelSet, LabelSet, int], ...]

    def to_dict(self, schema: LabelSchema) -> dict:
        return {
            "label": self.label,
            "hallucinations": self.hallucinations,
            "omissions": self.omissions,
            "transitions": [
                [format_binary_code(t, schema), format_binary_code(p, schema), c]
                for t, p, c in self.transitions
            ],
        }


def label_drilldown(pairs: AlignedPairs, label: str) -> LabelDrilldown:
    """Errors on one label: hallucinated (predicted, not true) and omitted.

    ``transitions`` lists the (true set, predicted set) cells where the label
    was hallucinated or omitted, most frequent first.
    """
    schema = pairs.schema
    bit = schema.bit(schema.index(label))
    order = enumerate_powerset(schema)
    hall = omit = 0
    tally: Counter[tuple[int, int]] = Counter()
    for p in pairs:
        t, y = p.truth.mask & bit, p.predicted.mask & bit
        if t == y:
            continue
        if y:
            hall += 1
        else:
            omit += 1
        tally[(order.index(p.truth), order.index(p.predicted))] += 1
    ranked = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))
    return LabelDrilldown(label, hall, omit, tuple((order[i], order[j], c) for (i, j), c in ranked))


def group_query(
    pairs: AlignedPairs,
    true_pattern: LabelSetPattern | str,
    predicted_pattern: LabelSetPattern | str,
) -> int:
    schema = pairs.schema
    tp = parse_pattern(true_pattern, schema) if isinstance(true_pattern, str) else true_pattern
    pp = parse_pattern(predicted_pattern, schema) if isinstance(predicted_pattern, str) else predicted_pattern
    return sum(1 for p in pairs if tp.matches(p.truth) and pp.matches(p.predicted))


# --- exports ----------------------------------------------------------------

def _visible(conf: PowerSetConfusion, compact: bool) -> list[int]:
    if not compact:
        return list(range(conf.M))
    rows, cols = conf.row_sums(), conf.col_sums()
    return [k for k in range(conf.M) if rows[k] or cols[k]]


def to_csv(conf: PowerSetConfusion, include_zero: bool = False, textual: bool = False) -> str:
    """Long-format table, one row per cell, in canonical (row, column) order."""
    schema = conf.schema
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["true_binary", "true_semantic", "pred_binary", "pred_semantic", "count", "kind"]
    if textual:
        header[2:2] = ["true_textual"]
        header.insert(5, "pred_textual")
    w.writerow(header)
    if include_zero:
        keys = [(i, j) for i in range(conf.M) for j in range(conf.M)]
    else:
        keys = sorted(conf.cells)
    for i, j in keys:
        t, p = conf.order[i], conf.order[j]
        row = [format_binary_code(t, schema), format_semantic_code(t, schema),
               format_binary_code(p, schema), format_semantic_code(p, schema),
               conf.cells.get((i, j), 0), classify_error(t, p).value]
        if textual:
            row[2:2] = [format_textual_code(t, schema)]
            row.insert(5, format_textual_code(p, schema))
        w.writerow(row)
    return buf.getvalue()


def to_text_table(conf: PowerSetConfusion, compact: bool = True) -> str:
    schema = conf.schema
    keep = _visible(conf, compact)
    codes = [format_binary_code(conf.order[k], schema) for k in keep]
    sems = [format_semantic_code(conf.order[k], schema) for k in keep]
    width = max(len(c) for c in codes)
    sem_w = max(len(s) for s in sems)
    lines = [" " * (sem_w + width + 3) + " ".join(c.rjust(width) for c in codes)]
    for r, k in enumerate(keep):
        cells = [str(conf.cells.get((k, j), 0) or ".").rjust(width) for j in keep]
        lines.append(f"{sems[r].ljust(sem_w)} {codes[r].rjust(width)} | " + " ".join(cells))
    return "\n".join(lines) + "\n"


def to_svg(conf: PowerSetConfusion, compact: bool = False, title: str = "") -> str:
    """Deterministic heat table with binary and semantic codes on both axes."""
    schema = conf.schema
    keep = _visible(conf, compact)
    n = len(keep)
    cell = 34
    label_w = 12 + 7 * (len(format_semantic_code(schema.full(), schema)) + schema.L * 2)
    top = 40 + label_w
    left = label_w
    size_w = left + n * cell + 20
    size_h = top + n * cell + 20
    peak = max(conf.cells.values(), default=1)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size_w}" height="{size_h}" '
        f'font-family="monospace" font-size="11">',
    ]
    if title:
        out.append(f'<text x="{left}" y="18" font-size="14">{escape(title)}</text>')
    for r, k in enumerate(keep):
        s = conf.order[k]
        label = f"{format_binary_code(s, schema)} {format_semantic_code(s, schema)}"
        y = top + r * cell + cell // 2 + 4
        out.append(f'<text x="{left - 6}" y="{y}" text-anchor="end">{escape(label)}</text>')
        x = left + r * cell + cell // 2 + 4
        out.append(
            f'<text x="{x}" y="{top - 6}" transform="rotate(-90 {x} {top - 6})">{escape(label)}</text>'
        )
    for r, i in enumerate(keep):
        for c, j in enumerate(keep):
            count = conf.cells.get((i, j), 0)
            shade = int(round(255 * (1 - count / peak))) if count else 255
            fill = f"#{shade:02x}{shade:02x}ff" if i == j else f"#ff{shade:02x}{shade:02x}"
            x, y = left + c * cell, top + r * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#999"/>')
            if count:
                colour = "#fff" if shade < 110 else "#000"
                out.append(
                    f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" text-anchor="middle" '
                    f'fill="{colour}">{count}</text>'
                )
    out.append("</svg>")
    return "\n".join(out) + "\n"
