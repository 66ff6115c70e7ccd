import io
import json
import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlceval.dataset import (
    AnnotatedInstance,
    Corpus,
    PredictionRecord,
    RunManifest,
    align,
    corpus_stats,
    dumps_corpus,
    load_corpus,
    load_predictions,
    prediction_lines,
)
from mlceval.errors import AlignmentError, DatasetError, ValidationError
from mlceval.labelspace import DEFAULT_SCHEMA, LabelSet, parse_binary_code

S = DEFAULT_SCHEMA


def lines(*recs):
    return [json.dumps(r) for r in recs]


def test_load_three_records():
    c = load_corpus(lines(
        {"id": "n1", "labels": "1-0-0-0", "text": "a"},
        {"id": "n2", "labels": {"SI": 0, "SA": 1, "ES": 0, "NSSI": 0}},
        {"id": "n3", "labels": "0-0-0-0"},
    ))
    assert c.N == 3
    assert c.by_id()["n2"].truth == S.from_names(["SA"])


def test_duplicate_id_named():
    with pytest.raises(DatasetError, match="n1"):
        load_corpus(lines({"id": "n1", "labels": "1-0-0-0"}, {"id": "n1", "labels": "0-0-0-0"}))


def test_bad_code_has_line_and_position():
    with pytest.raises(DatasetError) as exc:
        load_corpus(lines({"id": "a", "labels": "0-0-0-0"}, {"id": "b", "labels": "2-0-0-0"}))
    assert exc.value.line == 2
    assert "token 0" in str(exc.value)


@pytest.mark.parametrize("bad", [
    '{"id": "a"}',
    'not json',
    '[1, 2]',
    '{"id": "", "labels": "0-0-0-0"}',
    '{"id": "a", "labels": {"SI": 1}}',
    '{"id": "a", "labels": {"SI": 2, "SA": 0, "ES": 0, "NSSI": 0}}',
    '{"id": "a", "labels": 5}',
])
def test_malformed_records(bad):
    with pytest.raises(DatasetError):
        load_corpus([bad])


def test_unknown_field_warns(caplog):
    with caplog.at_level(logging.WARNING):
        load_corpus(lines({"id": "a", "labels": "0-0-0-0", "extra": 1}))
    assert "extra" in caplog.text


def test_missing_file(tmp_path):
    with pytest.raises(DatasetError):
        load_corpus(tmp_path / "nope.jsonl")


@given(st.lists(st.integers(0, 15), min_size=1, max_size=30))
def test_corpus_roundtrip(masks):
    corpus = Corpus(S, tuple(AnnotatedInstance(f"x{i}", LabelSet(m, 4), None if i % 2 else "t")
                             for i, m in enumerate(masks)))
    back = load_corpus(io.StringIO(dumps_corpus(corpus)))
    assert back == corpus


def _corpus():
    return Corpus(S, tuple(AnnotatedInstance(f"n{i}", parse_binary_code(c)) for i, c in
                           enumerate(["1-0-0-0", "0-1-0-0", "0-0-0-0"])))


def _preds(ids, predicted=None):
    return [PredictionRecord(i, predicted if predicted is not None else S.empty(), None, "clean") for i in ids]


def test_align_exact():
    pairs = align(_corpus(), _preds(["n2", "n0", "n1"]))
    assert [p.id for p in pairs] == ["n0", "n1", "n2"]


def test_align_missing_strict():
    with pytest.raises(AlignmentError) as exc:
        align(_corpus(), _preds(["n0", "n1"]))
    assert exc.value.ids == ["n2"]


def test_align_lenient():
    pairs = align(_corpus(), _preds(["n0", "n1", "zz"]), strict=False)
    assert pairs.N == 2
    assert len(pairs.warnings) == 2
    assert any("n2" in w for w in pairs.warnings) and any("zz" in w for w in pairs.warnings)


def test_align_duplicates_always_error():
    with pytest.raises(AlignmentError):
        align(_corpus(), _preds(["n0", "n0", "n1", "n2"]), strict=False)


def test_failure_policies():
    recs = _preds(["n0", "n1"]) + [PredictionRecord("n2", None, "prose", "failed")]
    ex = align(_corpus(), recs)
    assert ex.N == 2 and ex.excluded == ("n2",)
    em = align(_corpus(), recs, failure_policy="empty")
    assert em.N == 3 and em.pairs[2].predicted == S.empty()
    with pytest.raises(ValidationError):
        align(_corpus(), recs, failure_policy="bogus")


def test_predictions_roundtrip():
    man = RunManifest(model="m", strategy="zero", repeat=0, seed=1, timestamp="t", params={"a": 1})
    recs = _preds(["n0", "n1"]) + [PredictionRecord("n2", None, "no idea", "failed", "no code")]
    m2, r2 = load_predictions(list(prediction_lines(man, recs, S)))
    assert m2 == man
    assert r2 == recs


def test_predictions_need_manifest_first():
    with pytest.raises(DatasetError):
        load_predictions(lines({"id": "a", "labels": "0-0-0-0"}))
    with pytest.raises(DatasetError):
        load_predictions([])


def test_null_labels_only_when_failed():
    with pytest.raises(DatasetError):
        load_predictions(lines({"manifest": {"model": "m", "timestamp": "t"}},
                               {"id": "a", "labels": None, "status": "clean"}))


def test_manifest_validation():
    with pytest.raises(ValidationError):
        RunManifest(model="m", strategy="bogus")
    with pytest.raises(ValidationError):
        RunManifest(model="m", repeat=-1)
    assert RunManifest(model="m").timestamp


def test_stats_single_empty():
    st_ = corpus_stats(Corpus(S, (AnnotatedInstance("a", S.empty()),)))
    assert {k: v for k, v in st_.cardinality_histogram.items() if v} == {0: 1}
    assert st_.total_labels == 0


@given(st.lists(st.integers(0, 15), min_size=1, max_size=60))
def test_stats_consistent(masks):
    corpus = Corpus(S, tuple(AnnotatedInstance(f"x{i}", LabelSet(m, 4)) for i, m in enumerate(masks)))
    d = corpus_stats(corpus)
    assert sum(d.set_counts.values()) == len(masks)
    assert sum(d.cardinality_histogram.values()) == len(masks)
    assert d.total_labels == sum(bin(m).count("1") for m in masks)
    assert len(d.observed) + len(d.unobserved) == 16
