"""Human-readable tables from aggregate reports."""

from __future__ import annotations

from .labelspace import enumerate_powerset, format_binary_code, format_semantic_code
from .metrics import AggregateReport, MetricStat


def _fmt(stat: MetricStat | None, digits: int = 2) -> str:
    if stat is None:
        return "-"
    return f"{stat.mean:.{digits}f} ± {stat.std:.{digits}f}"


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    line = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"  # noqa: E731
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(header), sep, *(line(r) for r in rows)])


def overall_table(agg: AggregateReport, policy: str = "observed", digits: int = 2) -> str:
    m = agg.metrics
    rows = [
        ["exact match", _fmt(m["exact.accuracy"], digits), _fmt(m["exact.micro.f1"], digits),
         _fmt(m[f"exact.macro.{policy}.f1"], digits)],
        ["partial match", _fmt(m["partial.accuracy"], digits), _fmt(m["partial.micro.f1"], digits),
         _fmt(m[f"partial.macro.{policy}.f1"], digits)],
        ["single label", _fmt(m["label.micro.accuracy"], digits), _fmt(m["label.micro.f1"], digits),
         _fmt(m["label.macro.f1"], digits)],
        ["instance", _fmt(m["instance.hamming_accuracy"], digits), _fmt(m["instance.f1_pooled"], digits),
         _fmt(m["instance.f1_mean"], digits) + " (mean)"],
    ]
    return _table(["level", "accuracy", "micro F1", f"macro F1 ({policy})"], rows)


def label_table(agg: AggregateReport, digits: int = 2) -> str:
    rows = []
    for lab in agg.schema.labels:
        rows.append([lab] + [_fmt(agg.metrics.get(f"label.{lab}.{k}"), digits)
                             for k in ("accuracy", "precision", "recall", "f1")])
    return _table(["label", "accuracy", "precision", "recall", "F1"], rows)


def labelset_table(agg: AggregateReport, digits: int = 2, include_empty: bool = False) -> str:
    schema = agg.schema
    rows = []
    for s in enumerate_powerset(schema):
        code = format_binary_code(s, schema)
        exact = agg.metrics.get(f"set.{code}.exact.f1")
        partial = agg.metrics.get(f"set.{code}.partial.f1")
        support = agg.metrics.get(f"set.{code}.support")
        if not include_empty and support is not None and support.mean == 0:
            continue
        rows.append([code, format_semantic_code(s, schema), _fmt(exact, digits), _fmt(partial, digits)])
    return _table(["label set", "semantic", "exact F1", "partial F1"], rows)


def render_markdown(agg: AggregateReport, policy: str = "observed", title: str = "Evaluation report") -> str:
    parts = [
        f"# {title}",
        "",
        f"Runs: {agg.run_count} ({agg.variant}); values are mean ± sample std.",
        "",
        "## Overall",
        "",
        overall_table(agg, policy),
        "",
        "## Single labels",
        "",
        label_table(agg),
        "",
        "## Label sets",
        "",
        labelset_table(agg),
        "",
    ]
    return "\n".join(parts)
