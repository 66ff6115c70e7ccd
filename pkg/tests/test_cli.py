import json
import subprocess
import sys
import threading
from pathlib import Path

import pytest

from mlceval.cli import run
from mlceval.gateway.mock import MockChatServer, constant


def _read(p):
    return Path(p).read_bytes()


@pytest.fixture
def synth(tmp_path):
    corpus, preds = tmp_path / "corpus.jsonl", tmp_path / "preds.jsonl"
    assert run(["synth", "corpus", "--seed", "1", "--out", str(corpus)]) == 0
    assert run(["synth", "predictions", "--corpus", str(corpus), "--seed", "2", "--out", str(preds)]) == 0
    return corpus, preds


@pytest.fixture
def fixture_files(tmp_path):
    c, p = tmp_path / "fx_corpus.jsonl", tmp_path / "fx_preds.jsonl"
    assert run(["synth", "fixture", "--out-corpus", str(c), "--out-predictions", str(p)]) == 0
    return c, p


def test_stats(synth, tmp_path, capsys):
    out = tmp_path / "stats.json"
    assert run(["stats", str(synth[0]), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["N"] == 500 and d["label_counts"]["SI"] == 294


def test_evaluate_perfect(synth, tmp_path):
    corpus = synth[0]
    preds = tmp_path / "perfect.jsonl"
    lines = [json.dumps({"manifest": {"model": "oracle", "timestamp": "t"}})]
    lines += [json.dumps({"id": r["id"], "labels": r["labels"]}) for r in map(json.loads, corpus.read_text().splitlines())]
    preds.write_text("\n".join(lines) + "\n")
    out = tmp_path / "r.json"
    assert run(["evaluate", str(corpus), str(preds), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["model"]["exact"]["accuracy"] == 1.0
    assert doc["model"]["partial"]["f1"] == 1.0
    assert doc["model"]["macro"]["observed"]["exact"]["f1"] == 1.0
    assert all(doc["self_check"].values())


def test_confusion_on_fixture(fixture_files, tmp_path, capsys):
    out = tmp_path / "conf"
    rc = run(["confusion", *map(str, fixture_files), "--out-dir", str(out), "--query", "0-1-0-*", "1-1-0-*"])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "trace=383" in printed and "hallucination=80 omission=28 hybrid=9" in printed
    tax = json.loads((out / "taxonomy.json").read_text())
    assert tax["queries"][0]["count"] == 38
    assert tax["drilldown"]["SI"]["hallucinations"] == 48
    for name in ("matrix.csv", "matrix.txt", "matrix.svg"):
        assert (out / name).stat().st_size > 0


def test_fixture_check(tmp_path, capsys):
    rc = run(["synth", "fixture", "--out-corpus", str(tmp_path / "c"), "--out-predictions", str(tmp_path / "p"),
              "--check"])
    assert rc == 0
    assert "FAIL" not in capsys.readouterr().out


def test_missing_file_exit_code(tmp_path, capsys):
    assert run(["stats", str(tmp_path / "missing.jsonl")]) == 3
    assert run(["evaluate", str(tmp_path / "a"), str(tmp_path / "b")]) == 3


def test_usage_errors(capsys):
    assert run([]) == 2
    assert run(["evaluate"]) == 2
    assert run(["bogus"]) == 2
    assert run(["serve-mock"]) == 2


def test_alignment_error_exit_code(synth, tmp_path):
    corpus, preds = synth
    lines = preds.read_text().splitlines()
    short = tmp_path / "short.jsonl"
    short.write_text("\n".join(lines[:-1]) + "\n")
    assert run(["evaluate", str(corpus), str(short)]) == 3
    assert run(["evaluate", str(corpus), str(short), "--lenient", "--out", str(tmp_path / "r.json")]) == 0


def test_backend_exit_code(synth, tmp_path):
    rc = run(["predict", str(synth[0]), "--out", str(tmp_path / "p.jsonl"), "--base-url", "http://127.0.0.1:9",
              "--model", "m", "--max-attempts", "1", "--timeout", "2"])
    assert rc == 4


def test_config_file_supplies_defaults(synth, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"macro-policy": "full-powerset"}))
    out = tmp_path / "r.json"
    assert run(["evaluate", *map(str, synth), "--out", str(out), "--config", str(cfg)]) == 0
    assert json.loads(out.read_text())["options"]["macro_policy"] == "full-powerset"
    assert run(["evaluate", *map(str, synth), "--config", str(tmp_path / "nope.json")]) == 3


def test_reruns_byte_identical(tmp_path):
    outputs = []
    for n in range(2):
        d = tmp_path / f"run{n}"
        d.mkdir()
        assert run(["synth", "corpus", "--seed", "5", "--out", str(d / "c.jsonl")]) == 0
        assert run(["synth", "predictions", "--corpus", str(d / "c.jsonl"), "--seed", "6",
                    "--out", str(d / "p.jsonl")]) == 0
        assert run(["evaluate", str(d / "c.jsonl"), str(d / "p.jsonl"), "--out", str(d / "r.json"),
                    "--csv", str(d / "r.csv")]) == 0
        assert run(["confusion", str(d / "c.jsonl"), str(d / "p.jsonl"), "--out-dir", str(d / "conf")]) == 0
        assert run(["split", str(d / "c.jsonl"), "--out", str(d / "plan.json"), "--seed", "1"]) == 0
        assert run(["aggregate", str(d / "r.json"), "--out", str(d / "agg.json")]) == 0
        assert run(["report", str(d / "r.json"), "--out-dir", str(d / "rep")]) == 0
        outputs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    assert outputs[0].keys() == outputs[1].keys()
    for k in outputs[0]:
        assert outputs[0][k] == outputs[1][k], k


def test_split_export(synth, tmp_path):
    ex = tmp_path / "ft"
    assert run(["split", str(synth[0]), "--out", str(tmp_path / "plan.json"), "--repeats", "1",
                "--export-dir", str(ex)]) == 0
    assert len((ex / "train_r0_f0.jsonl").read_text().splitlines()) == 400
    assert len((ex / "heldout_r0_f0.jsonl").read_text().splitlines()) == 100


def test_predict_against_mock(synth, tmp_path, capsys):
    with MockChatServer(constant("0-1-0-0")) as srv:
        rc = run(["predict", str(synth[0]), "--out", str(tmp_path / "p.jsonl"), "--base-url", srv.base_url,
                  "--model", "mock", "--strategy", "zero", "--seed", "0"])
    assert rc == 0
    telemetry = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert telemetry["requests"] == 500 and telemetry["failures"] == 0


def test_report_rejects_two_aggregates(synth, tmp_path):
    r = tmp_path / "r.json"
    assert run(["evaluate", *map(str, synth), "--out", str(r)]) == 0
    assert run(["aggregate", str(r), "--out", str(tmp_path / "a.json")]) == 0
    a = str(tmp_path / "a.json")
    assert run(["report", a, a, "--out-dir", str(tmp_path / "rep")]) == 3


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "mlceval.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "evaluate" in proc.stdout
