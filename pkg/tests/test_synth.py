import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlceval.confusion import label_drilldown
from mlceval.dataset import align, corpus_stats, dumps_corpus
from mlceval.errors import FixtureError, ValidationError
from mlceval.labelspace import DEFAULT_SCHEMA, parse_binary_code
from mlceval.metrics import evaluate
from mlceval.synth import (
    DistributionSpec,
    FixtureSpec,
    NoiseKernel,
    build_fixture,
    check_expectations,
    figure4_fixture,
    load_config,
    load_preset,
    make_rng,
    paper_corpus,
    perturb,
    sample_corpus,
)

S = DEFAULT_SCHEMA
B = parse_binary_code


def test_paper_corpus_stats():
    d = corpus_stats(paper_corpus())
    assert d.N == 500
    assert d.total_labels == 675
    assert d.label_counts == {"SI": 294, "SA": 265, "ES": 22, "NSSI": 94}
    assert [round(100 * d.label_shares[k], 1) for k in S.labels] == [43.6, 39.3, 3.3, 13.9]
    assert len(d.observed) == 14
    assert set(d.unobserved) == {"0-1-1-1", "1-0-1-1"}
    h = d.cardinality_histogram
    assert (h[0] + h[1] + h[2], h[3], h[4]) == (451, 45, 4)
    assert d.set_counts["0-1-0-0"] == 62 and d.set_counts["0-0-0-1"] == 11


def test_paper_corpus_seed_only_changes_order():
    a, b = paper_corpus(0), paper_corpus(1)
    assert corpus_stats(a) == corpus_stats(b)
    assert [i.truth for i in a] != [i.truth for i in b]
    assert dumps_corpus(paper_corpus(0)) == dumps_corpus(a)


def test_single_set_spec():
    spec = DistributionSpec(S, 10, counts={0b1000: 10})
    c = sample_corpus(spec, seed=3)
    assert c.N == 10 and all(i.truth == B("1-0-0-0") for i in c)


def test_probability_mode_deterministic():
    spec = DistributionSpec(S, 200, probabilities={0: 0.5, 0b1100: 0.25, 0b0001: 0.25})
    a, b = sample_corpus(spec, 7), sample_corpus(spec, 7)
    assert a == b
    assert {i.truth.mask for i in a} <= {0, 0b1100, 0b0001}
    assert sample_corpus(spec, 8) != a


@pytest.mark.parametrize("kwargs", [
    dict(N=5, counts={0: 4}),
    dict(N=5, counts={0: 6, 1: -1}),
    dict(N=5, counts={99: 5}),
    dict(N=5, probabilities={0: 0.5}),
    dict(N=5),
    dict(N=0, counts={}),
])
def test_spec_validation(kwargs):
    with pytest.raises(ValidationError):
        DistributionSpec(S, **kwargs)


def test_spec_dict_roundtrip():
    spec = DistributionSpec.from_dict(load_preset("paper-corpus"))
    assert DistributionSpec.from_dict(spec.to_dict()) == spec


def test_seed_required():
    with pytest.raises(ValidationError):
        make_rng(None)


def test_zero_noise_is_perfect():
    corpus = paper_corpus()
    preds = perturb(corpus, NoiseKernel.per_label(S), seed=1)
    r = evaluate(align(corpus, preds))
    assert r.exact_accuracy == 1.0 and r.micro_partial.f1 == 1.0
    assert r.macro["observed"]["exact"].f1 == 1.0


def test_certain_hallucination_on_si():
    corpus = paper_corpus()
    kernel = NoiseKernel.per_label(S, hallucination={"SI": 1.0})
    pairs = align(corpus, perturb(corpus, kernel, seed=1))
    assert all(p.predicted == (p.truth | S.from_names(["SI"])) for p in pairs)
    d = label_drilldown(pairs, "SI")
    assert d.omissions == 0 and d.hallucinations == 500 - 294


def test_perturb_rates_small():
    spec = DistributionSpec(S, 4000, counts={0: 2000, 0b1111: 2000})
    corpus = sample_corpus(spec, 0)
    kernel = NoiseKernel.per_label(S, 0.2, 0.1)
    pairs = align(corpus, perturb(corpus, kernel, seed=5))
    t = np.array([p.truth.bits for p in pairs])
    y = np.array([p.predicted.bits for p in pairs])
    fp = ((y == 1) & (t == 0)).sum(0) / (t == 0).sum(0)
    fn = ((y == 0) & (t == 1)).sum(0) / (t == 1).sum(0)
    assert np.all(np.abs(fp - 0.2) < 0.03) and np.all(np.abs(fn - 0.1) < 0.03)


def test_perturb_reproducible():
    corpus = paper_corpus()
    k = NoiseKernel.from_dict(load_preset("noise-default"))
    assert perturb(corpus, k, 3) == perturb(corpus, k, 3)
    assert perturb(corpus, k, 3) != perturb(corpus, k, 4)


def test_transition_kernel():
    corpus = sample_corpus(DistributionSpec(S, 300, counts={0b0100: 200, 0b1000: 100}), 0)
    k = NoiseKernel.from_dict({"mode": "per-set-transition",
                               "transition": {"0-1-0-0": {"1-1-0-0": 1.0}}})
    pairs = align(corpus, perturb(corpus, k, 0))
    for p in pairs:
        expected = B("1-1-0-0") if p.truth == B("0-1-0-0") else p.truth
        assert p.predicted == expected


def test_transition_rows_must_sum():
    with pytest.raises(ValidationError):
        NoiseKernel.from_dict({"mode": "per-set-transition", "transition": {"0-1-0-0": {"1-1-0-0": 0.5}}})


@settings(max_examples=30)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_perturb_preserves_ids(h, o, seed):
    corpus = sample_corpus(DistributionSpec(S, 20, counts={0: 10, 0b1010: 10}), 1)
    preds = perturb(corpus, NoiseKernel.per_label(S, h, o), seed)
    assert [p.id for p in preds] == corpus.ids()


def test_error_fixture_expectations():
    pairs, spec = figure4_fixture()
    results = check_expectations(pairs, spec.expect)
    assert results
    for name, (want, got) in results.items():
        assert want == got, name
    assert spec.expect["exact_matches"] == 383


def test_all_diagonal_fixture():
    spec = FixtureSpec(S, {0: 3, 0b1000: 2}, ())
    pairs = build_fixture(spec)
    assert evaluate(pairs).exact_accuracy == 1.0


@pytest.mark.parametrize("cells", [
    ((0b0100, 0b1100, 5),),
    ((0b0100, 0b1100, 1), (0b0100, 0b1100, 1)),
    ((0b0100, 0b1100, -1),),
])
def test_contradictory_fixture(cells):
    with pytest.raises(FixtureError):
        build_fixture(FixtureSpec(S, {0b0100: 3}, cells))


def test_load_config_unknown(tmp_path):
    with pytest.raises(ValidationError):
        load_config("no-such-preset")
    p = tmp_path / "c.json"
    p.write_text('{"mode": "counts", "counts": {"0-0-0-0": 2}}')
    assert load_config(str(p))["counts"] == {"0-0-0-0": 2}
