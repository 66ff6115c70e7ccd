"""Rebuild the shipped error-analysis fixture and print its counts and matrix."""

import argparse

from mlceval.confusion import build_confusion, label_drilldown, taxonomy_summary, to_text_table
from mlceval.metrics import evaluate
from mlceval.synth import check_expectations, figure4_fixture


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--full", action="store_true", help="print every row and column of the matrix")
    args = ap.parse_args()

    pairs, spec = figure4_fixture()
    report = evaluate(pairs)
    tax = taxonomy_summary(pairs)
    si = label_drilldown(pairs, "SI")
    print(f"N={pairs.N}  exact accuracy={report.exact_accuracy:.3f}  partial accuracy={report.partial_accuracy:.4f}")
    print(f"upper={tax.upper} ({tax.upper_by_kind['hallucination']} hallucinations)  "
          f"lower={tax.lower} ({tax.lower_by_kind['omission']} omissions)  hybrid={tax.hybrid}")
    print(f"SI: {si.hallucinations} hallucinated, {si.omissions} omitted")
    print()
    print(to_text_table(build_confusion(pairs), compact=not args.full))
    print()
    for name, (want, got) in check_expectations(pairs, spec.expect).items():
        print(f"{'ok ' if want == got else 'BAD'} {name}: {got}")


if __name__ == "__main__":
    main()
