"""Command-line entry point: ``mlceval <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 validation (bad or missing input),
4 backend, 5 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import confusion as cf
from .dataset import (
    FAILURE_POLICIES,
    RunManifest,
    align,
    corpus_lines,
    corpus_stats,
    load_corpus,
    load_predictions,
    prediction_lines,
    write_lines,
)
from .errors import BackendError, ValidationError
from .labelspace import DEFAULT_SCHEMA, LabelSchema, format_binary_code, load_schema
from .metrics import MACRO_POLICIES, AggregateReport, EvalOptions, EvalReport, aggregate_runs, evaluate
from .report import render_markdown
from .splitter import POLICIES, export_finetune, make_splits
from .synth import (
    RNG_ALGORITHM,
    DistributionSpec,
    FixtureSpec,
    NoiseKernel,
    build_fixture,
    check_expectations,
    load_config,
    perturb,
    sample_corpus,
)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_BACKEND, EXIT_INTERNAL = 0, 2, 3, 4, 5

log = logging.getLogger("mlceval")


class UsageError(Exception):
    pass


def _schema(args) -> LabelSchema:
    if not args.schema or args.schema == "default":
        return DEFAULT_SCHEMA
    path = Path(args.schema)
    if not path.exists():
        raise ValidationError(f"no such schema file: {path}")
    return load_schema(path)


def _dump_json(obj: Any, dest: str | None) -> None:
    text = json.dumps(obj, indent=1, ensure_ascii=False) + "\n"
    if dest in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        Path(dest).write_text(text, encoding="utf-8")


def _write_text(text: str, dest: Path) -> None:
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(text, encoding="utf-8")


def _flat_csv(flat: dict[str, Any]) -> str:
    lines = ["metric,value"]
    lines += [f"{k},{v}" for k, v in flat.items()]
    return "\n".join(lines) + "\n"


def _aligned(args, schema):
    corpus = load_corpus(args.corpus, schema)
    manifest, records = load_predictions(args.predictions, schema)
    pairs = align(corpus, records, strict=not args.lenient, failure_policy=args.failure_policy)
    if pairs.excluded:
        log.warning("%d failed predictions excluded from metrics", len(pairs.excluded))
    return corpus, manifest, pairs


# --- subcommands --------------------------------------------------------------

def cmd_stats(args) -> int:
    summary = corpus_stats(load_corpus(args.corpus, _schema(args)))
    _dump_json(summary.to_dict(), args.out)
    return EXIT_OK


def cmd_split(args) -> int:
    schema = _schema(args)
    corpus = load_corpus(args.corpus, schema)
    plan = make_splits(corpus, args.k, args.repeats, args.policy, args.seed, args.group or ())
    _write_text(plan.to_json(), Path(args.out))
    if args.export_dir:
        out = Path(args.export_dir)
        for r in range(plan.repeats):
            for f in range(plan.k):
                records = export_finetune(corpus, plan, r, f, args.template)
                write_lines((json.dumps(rec, ensure_ascii=False) for rec in records),
                            out / f"train_r{r}_f{f}.jsonl")
                write_lines((json.dumps({"id": i}) for i in plan.fold_ids(r, f)), out / f"heldout_r{r}_f{f}.jsonl")
    return EXIT_OK


def cmd_synth(args) -> int:
    schema_override = args.schema not in (None, "default")
    if args.what == "corpus":
        doc = load_config(args.spec)
        spec = DistributionSpec.from_dict(doc)
        if schema_override and spec.schema != _schema(args):
            raise ValidationError("--schema disagrees with the distribution spec's schema")
        corpus = sample_corpus(spec, args.seed, id_prefix=args.id_prefix)
        write_lines(corpus_lines(corpus), args.out)
    elif args.what == "predictions":
        doc = load_config(args.kernel)
        corpus = load_corpus(args.corpus, _schema(args))
        kernel = NoiseKernel.from_dict(doc, corpus.schema)
        preds = perturb(corpus, kernel, args.seed)
        manifest = RunManifest(
            model=args.model, strategy=args.strategy, repeat=args.repeat, fold=args.fold, seed=args.seed,
            timestamp="synthetic", params={"kernel": str(args.kernel), "rng": RNG_ALGORITHM},
        )
        write_lines(prediction_lines(manifest, preds, corpus.schema), args.out)
    else:
        doc = load_config(args.spec)
        spec = FixtureSpec.from_dict(doc)
        pairs = build_fixture(spec)
        from .dataset import AnnotatedInstance, Corpus, PredictionRecord

        corpus = Corpus(spec.schema, tuple(AnnotatedInstance(p.id, p.truth, f"[placeholder note {p.id}]")
                                           for p in pairs))
        preds = [PredictionRecord(p.id, p.predicted, None, "fixture") for p in pairs]
        manifest = RunManifest(model=doc.get("name", "fixture"), timestamp="fixture",
                               params={"fixture": doc.get("name", str(args.spec))})
        write_lines(corpus_lines(corpus), args.out_corpus)
        write_lines(prediction_lines(manifest, preds, spec.schema), args.out_predictions)
        if args.check:
            results = check_expectations(pairs, spec.expect)
            bad = {k: v for k, v in results.items() if v[0] != v[1]}
            for k, (want, got) in results.items():
                print(f"{'PASS' if want == got else 'FAIL'} {k}: expected {want}, got {got}")
            if bad:
                raise ValidationError(f"{len(bad)} fixture expectations not met")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .gateway import BackendConfig, RetryPolicy, classify_batch, get_template

    schema = _schema(args)
    corpus = load_corpus(args.corpus, schema)
    template = get_template(args.template)
    backend = BackendConfig(
        base_url=args.base_url,
        model=args.model,
        path=args.path,
        api_key_env=args.api_key_env,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
        timeout=args.timeout,
        max_in_flight=args.max_in_flight,
        retry=RetryPolicy(max_attempts=args.max_attempts, backoff_base=args.backoff_base),
    )
    result = classify_batch(corpus, template, backend, strategy=args.strategy, repeat=args.repeat,
                            fold=args.fold, seed=args.seed)
    write_lines(prediction_lines(result.manifest, result.predictions, schema), args.out)
    if args.failures:
        write_lines((json.dumps({"id": f.id, "reason": f.reason, "raw": f.raw, "attempts": f.attempts})
                     for f in result.failures), args.failures)
    print(json.dumps(result.telemetry), file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    schema = _schema(args)
    _, manifest, pairs = _aligned(args, schema)
    report = evaluate(pairs, EvalOptions(args.macro_policy), manifest)
    if not report.self_check_passed:
        failed = [k for k, ok in report.self_check.items() if not ok]
        log.error("metric self-check failed: %s", failed)
    _dump_json(report.to_dict(), args.out)
    if args.csv:
        _write_text(_flat_csv({k: round(v, 6) for k, v in report.flatten().items()}), Path(args.csv))
    return EXIT_OK if report.self_check_passed else EXIT_INTERNAL


def cmd_confusion(args) -> int:
    schema = _schema(args)
    _, _, pairs = _aligned(args, schema)
    conf = cf.build_confusion(pairs)
    tax = cf.taxonomy_summary(pairs)
    out = Path(args.out_dir)
    _write_text(cf.to_csv(conf, include_zero=args.include_zero, textual=args.textual), out / "matrix.csv")
    _write_text(cf.to_text_table(conf, compact=args.compact), out / "matrix.txt")
    _write_text(cf.to_svg(conf, compact=args.compact, title=args.title), out / "matrix.svg")
    labels = args.label or list(schema.labels)
    doc = {
        "N": conf.N,
        "trace": conf.trace,
        "taxonomy": tax.to_dict(),
        "drilldown": {lab: cf.label_drilldown(pairs, lab).to_dict(schema) for lab in labels},
        "queries": [
            {"truth": t, "predicted": p, "count": cf.group_query(pairs, t, p)} for t, p in (args.query or [])
        ],
    }
    _dump_json(doc, str(out / "taxonomy.json"))
    print(f"N={conf.N} trace={conf.trace} errors={conf.errors} "
          f"hallucination={tax.hallucination} omission={tax.omission} hybrid={tax.hybrid} "
          f"upper={tax.upper} lower={tax.lower}")
    return EXIT_OK


def _load_report_docs(paths: Sequence[str]) -> list[dict]:
    docs = []
    for p in paths:
        path = Path(p)
        if not path.exists():
            raise ValidationError(f"no such report file: {path}")
        try:
            docs.append(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
    return docs


def cmd_aggregate(args) -> int:
    reports = [EvalReport.from_dict(d) for d in _load_report_docs(args.reports)]
    agg = aggregate_runs(reports)
    _dump_json(agg.to_dict(), args.out)
    if args.csv:
        rows = ["metric,mean,std,n"] + [f"{k},{round(v.mean, 6)},{round(v.std, 6)},{v.n}"
                                        for k, v in agg.metrics.items()]
        _write_text("\n".join(rows) + "\n", Path(args.csv))
    return EXIT_OK


def cmd_report(args) -> int:
    docs = _load_report_docs(args.inputs)
    evals = [EvalReport.from_dict(d) for d in docs if d.get("kind") == "eval-report"]
    aggs = [AggregateReport.from_dict(d) for d in docs if d.get("kind") == "aggregate-report"]
    if len(evals) + len(aggs) != len(docs):
        raise ValidationError("inputs must be eval or aggregate report documents")
    if len(aggs) > 1:
        raise ValidationError("give at most one aggregate report")
    agg = aggs[0] if aggs else aggregate_runs(evals)
    out = Path(args.out_dir)
    _write_text(render_markdown(agg, args.macro_policy, args.title), out / "report.md")
    if evals:
        conf = cf.build_confusion(evals[0].pairs)
        _write_text(cf.to_svg(conf, compact=args.compact, title=args.title), out / "heatmap.svg")
        _write_text(cf.to_text_table(conf, compact=True), out / "matrix.txt")
    sys.stdout.write(render_markdown(agg, args.macro_policy, args.title))
    return EXIT_OK


def cmd_serve_mock(args) -> int:
    from .gateway import mock

    if args.constant:
        responder = mock.constant(args.constant)
    else:
        if not (args.corpus and args.predictions):
            raise UsageError("serve-mock needs --constant or both --corpus and --predictions")
        schema = _schema(args)
        corpus = load_corpus(args.corpus, schema)
        _, records = load_predictions(args.predictions, schema)
        by_id = {r.id: r for r in records}
        replies = {
            inst.text: (format_binary_code(by_id[inst.id].predicted, schema)
                        if by_id.get(inst.id) and by_id[inst.id].predicted is not None else "no answer")
            for inst in corpus if inst.text
        }
        responder = mock.lookup(replies, latency=tuple(args.latency), seed=args.seed)
    if args.fail_first:
        responder = mock.flaky(responder, args.fail_first)
    server = mock.MockChatServer(responder, args.host, args.port)
    print(f"mock chat-completions server at {server.base_url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--schema", default=None, help="schema file, or 'default' for SI,SA,ES,NSSI")
    common.add_argument("--config", default=None, help="JSON file supplying default values for any flag")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="mlceval", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.set_defaults(func=func)
        return sp

    def add_eval_inputs(sp):
        sp.add_argument("corpus")
        sp.add_argument("predictions")
        sp.add_argument("--lenient", action="store_true", help="drop unmatched ids instead of failing")
        sp.add_argument("--failure-policy", choices=FAILURE_POLICIES, default="exclude")

    sp = add("stats", cmd_stats, "label and label-set distribution of a corpus")
    sp.add_argument("corpus")
    sp.add_argument("--out", default=None)

    sp = add("split", cmd_split, "k-fold split plan and fine-tuning exports")
    sp.add_argument("corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--policy", choices=POLICIES, default="label-set")
    sp.add_argument("--group", action="append", help="pattern for group-pattern stratification (repeatable)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--export-dir", default=None)
    sp.add_argument("--template", default="zero")

    sp = add("synth", cmd_synth, "synthetic corpora, predictions and fixtures")
    ssub = sp.add_subparsers(dest="what", required=True)
    s1 = ssub.add_parser("corpus", parents=[common])
    s1.add_argument("--spec", default="paper-corpus", help="preset name or JSON distribution spec")
    s1.add_argument("--seed", type=int, default=0)
    s1.add_argument("--id-prefix", default="syn")
    s1.add_argument("--out", required=True)
    s2 = ssub.add_parser("predictions", parents=[common])
    s2.add_argument("--corpus", required=True)
    s2.add_argument("--kernel", default="noise-default", help="preset name or JSON noise kernel")
    s2.add_argument("--seed", type=int, default=0)
    s2.add_argument("--model", default="synthetic")
    s2.add_argument("--strategy", choices=("zero", "guide", "tune"), default=None)
    s2.add_argument("--repeat", type=int, default=0)
    s2.add_argument("--fold", type=int, default=None)
    s2.add_argument("--out", required=True)
    s3 = ssub.add_parser("fixture", parents=[common])
    s3.add_argument("--spec", default="figure4-fixture", help="preset name or JSON fixture spec")
    s3.add_argument("--out-corpus", required=True)
    s3.add_argument("--out-predictions", required=True)
    s3.add_argument("--check", action="store_true", help="recount the spec's expectations")

    sp = add("predict", cmd_predict, "classify a corpus through a chat-completions endpoint")
    sp.add_argument("corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--template", default="zero", help="'zero', 'guide' or a JSON template file")
    sp.add_argument("--base-url", required=True)
    sp.add_argument("--path", default="/chat/completions")
    sp.add_argument("--model", required=True)
    sp.add_argument("--api-key-env", default="OPENAI_API_KEY")
    sp.add_argument("--temperature", type=float, default=0.0)
    sp.add_argument("--max-tokens", type=int, default=32)
    sp.add_argument("--timeout", type=float, default=60.0)
    sp.add_argument("--max-in-flight", type=int, default=4)
    sp.add_argument("--max-attempts", type=int, default=3)
    sp.add_argument("--backoff-base", type=float, default=0.5)
    sp.add_argument("--strategy", choices=("zero", "guide", "tune"), default=None)
    sp.add_argument("--repeat", type=int, default=0)
    sp.add_argument("--fold", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--failures", default=None, help="write failed instances here")

    sp = add("evaluate", cmd_evaluate, "full metric report for one run")
    add_eval_inputs(sp)
    sp.add_argument("--out", default=None)
    sp.add_argument("--csv", default=None, help="also write flat metric,value rows")
    sp.add_argument("--macro-policy", choices=MACRO_POLICIES, default="observed")

    sp = add("confusion", cmd_confusion, "power-set confusion matrix, taxonomy and drill-downs")
    add_eval_inputs(sp)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--compact", action="store_true", help="hide empty rows/columns in renderings")
    sp.add_argument("--include-zero", action="store_true", help="list every cell in matrix.csv")
    sp.add_argument("--textual", action="store_true", help="add textual codes to matrix.csv")
    sp.add_argument("--label", action="append", help="label to drill into (repeatable; default all)")
    sp.add_argument("--query", nargs=2, action="append", metavar=("TRUE", "PRED"),
                    help="count pairs matching two patterns, e.g. 0-1-0-* 1-1-0-*")
    sp.add_argument("--title", default="")

    sp = add("aggregate", cmd_aggregate, "mean ± std of metrics across runs")
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--out", default=None)
    sp.add_argument("--csv", default=None)

    sp = add("report", cmd_report, "markdown tables and heat table")
    sp.add_argument("inputs", nargs="+",
                    help="eval reports and/or one aggregate report; tables use the aggregate when given, "
                         "the heat table uses the first eval report")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--macro-policy", choices=MACRO_POLICIES, default="observed")
    sp.add_argument("--title", default="Evaluation report")
    sp.add_argument("--compact", action="store_true")

    sp = add("serve-mock", cmd_serve_mock, "run a mock chat-completions server")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8765)
    sp.add_argument("--constant", default=None, help="always answer with this text")
    sp.add_argument("--corpus", default=None)
    sp.add_argument("--predictions", default=None, help="answer each note with its recorded prediction")
    sp.add_argument("--latency", nargs=2, type=float, default=(0.0, 0.0), metavar=("MIN", "MAX"))
    sp.add_argument("--fail-first", type=int, default=0, help="503 the first N requests per note")
    sp.add_argument("--seed", type=int, default=0)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    path = Path(known.config)
    if not path.exists():
        raise ValidationError(f"no such config file: {path}")
    config = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(config, dict):
        raise ValidationError("config file must hold a JSON object")
    defaults = {k.replace("-", "_"): v for k, v in config.items()}
    stack = [parser]
    while stack:
        p = stack.pop()
        dests = {a.dest for a in p._actions}
        p.set_defaults(**{k: v for k, v in defaults.items() if k in dests})
        for a in p._actions:
            if isinstance(a, argparse._SubParsersAction):
                stack.extend(a.choices.values())


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
