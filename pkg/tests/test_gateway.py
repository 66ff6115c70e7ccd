import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlceval.dataset import AnnotatedInstance, Corpus
from mlceval.errors import BackendError, ValidationError
from mlceval.gateway import (
    BackendConfig,
    ChatClient,
    PromptTemplate,
    RetryPolicy,
    classify_batch,
    get_template,
    parse_output,
    render_prompt,
)
from mlceval.gateway.mock import MockChatServer, constant, flaky, lookup
from mlceval.labelspace import DEFAULT_SCHEMA, LabelSchema, LabelSet, format_binary_code, parse_binary_code
from mlceval.synth import paper_corpus

S = DEFAULT_SCHEMA
B = parse_binary_code
NO_SLEEP = lambda _s: None  # noqa: E731


# --- prompts -----------------------------------------------------------------

def test_zero_template_has_no_guideline():
    zero, guide = get_template("zero"), get_template("guide")
    msgs = render_prompt(zero, S, "patient note")
    text = "\n".join(m["content"] for m in msgs)
    assert guide.guideline and guide.guideline not in text
    assert "patient note" in msgs[-1]["content"]
    assert [m["role"] for m in msgs] == ["system", "user"]


def test_guide_template_includes_guideline_verbatim():
    guide = get_template("guide")
    text = "\n".join(m["content"] for m in render_prompt(guide, S, "n"))
    assert guide.guideline in text


def test_one_character_note():
    assert render_prompt(get_template("zero"), S, "x")[-1]["content"].count("x") >= 1


def test_empty_note_rejected():
    with pytest.raises(ValidationError):
        render_prompt(get_template("zero"), S, "  ")


def test_template_validation(tmp_path):
    with pytest.raises(ValidationError):
        PromptTemplate("t", "sys", "{note} {bogus}")
    with pytest.raises(ValidationError):
        PromptTemplate("t", "sys", "no note here")
    with pytest.raises(ValidationError):
        PromptTemplate("t", "{guideline}", "{note}")
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"id": "mine", "system": "Labels: {labels}", "user": "{note}"}))
    assert get_template(str(p)).id == "mine"
    with pytest.raises(ValidationError):
        get_template("nope")


def test_prompt_mentions_schema_order():
    schema = LabelSchema(("X", "Y", "Z"))
    text = render_prompt(get_template("zero"), schema, "n")[-1]["content"]
    assert "X, Y, Z" in text


# --- parsing -----------------------------------------------------------------

@pytest.mark.parametrize("text,status,code", [
    ("1-0-0-0", "clean", "1-0-0-0"),
    ("  0-1-0-1\n", "clean", "0-1-0-1"),
    ("The answer is [1, 0, 0, 1].", "repaired", "1-0-0-1"),
    ("[1,1,0,0]", "repaired", "1-1-0-0"),
    ("1 0 0 0", "repaired", "1-0-0-0"),
    ("Code: 0-0-1-0. Again: 0-0-1-0", "repaired", "0-0-1-0"),
    ('{"SI": 1, "SA": 0, "ES": 0, "NSSI": 1}', "repaired", "1-0-0-1"),
    ("SI: 0\nSA: 1\nES: 0\nNSSI: 0", "repaired", "0-1-0-0"),
    ("1-0-0-0 or maybe 1-1-0-0", "failed", None),
    ("I cannot determine this.", "failed", None),
    ("", "failed", None),
    ("1-0-1", "failed", None),
    ("Answer 1-0-0-0 but SI: 0, SA: 0, ES: 0, NSSI: 0", "failed", None),
])
def test_parse_examples(text, status, code):
    out = parse_output(text, S)
    assert out.status == status, out.note
    assert out.raw == text
    assert out.labels == (B(code) if code else None)


@given(st.text())
def test_parse_is_total(text):
    out = parse_output(text, S)
    assert out.status in ("clean", "repaired", "failed")
    assert (out.labels is None) == (out.status == "failed")


@given(st.integers(0, 15))
def test_parse_clean_roundtrip(mask):
    s = LabelSet(mask, 4)
    out = parse_output(format_binary_code(s), S)
    assert out.status == "clean" and out.labels == s


@given(st.integers(0, 15), st.text(alphabet="abc xyz.,!", max_size=20), st.text(alphabet="abc xyz.,!", max_size=20))
def test_parse_embedded_single_code(mask, pre, post):
    s = LabelSet(mask, 4)
    out = parse_output(f"{pre} {format_binary_code(s)} {post}", S)
    assert out.labels == s


# --- client ------------------------------------------------------------------

def test_retry_policy():
    import random
    pol = RetryPolicy(backoff_base=1, backoff_cap=4)
    rng = random.Random(0)
    assert all(0 <= pol.delay(a, rng) <= min(4, 2 ** (a - 1)) for a in range(1, 8) for _ in range(20))
    assert pol.retryable(429) and pol.retryable(503) and pol.retryable(408)
    assert not pol.retryable(400) and not pol.retryable(401)


def test_backend_validation():
    with pytest.raises(ValidationError):
        BackendConfig(base_url="", model="m")
    with pytest.raises(ValidationError):
        BackendConfig(base_url="http://x", model="m", max_in_flight=0)
    cfg = BackendConfig.from_dict({"base_url": "http://x/v1", "model": "m", "retry": {"max_attempts": 5}})
    assert cfg.retry.max_attempts == 5 and cfg.url == "http://x/v1/chat/completions"


def test_api_key_from_environment(monkeypatch):
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": "0-0-0-0"}}]})

    monkeypatch.setenv("MLCEVAL_TEST_KEY", "sekrit")
    cfg = BackendConfig(base_url="http://x", model="m", api_key_env="MLCEVAL_TEST_KEY")
    with ChatClient(cfg, transport=httpx.MockTransport(handler)) as c:
        assert c.complete([{"role": "user", "content": "n"}]).text == "0-0-0-0"
    assert seen["auth"] == "Bearer sekrit"


def test_non_retryable_status_stops():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, json={})

    cfg = BackendConfig(base_url="http://x", model="m")
    with ChatClient(cfg, transport=httpx.MockTransport(handler), sleep=NO_SLEEP) as c:
        res = c.complete([{"role": "user", "content": "n"}])
    assert res.text is None and res.attempts == 1 and len(calls) == 1


def _corpus(n=6, seed=0):
    full = paper_corpus(seed)
    return Corpus(S, full.instances[:n])


def _backend(server, **kw):
    return BackendConfig(base_url=server.base_url, model="mock", **kw)


def test_echo_empty_backend():
    corpus = _corpus(8)
    with MockChatServer(constant("0-0-0-0")) as srv:
        res = classify_batch(corpus, get_template("zero"), _backend(srv), seed=0, sleep=NO_SLEEP)
    assert [p.predicted for p in res.predictions] == [S.empty()] * 8
    assert res.failures == [] and res.telemetry["failures"] == 0


def test_ordering_and_bounded_concurrency():
    corpus = _corpus(30)
    replies = {i.text: format_binary_code(i.truth) for i in corpus}
    with MockChatServer(lookup(replies, latency=(0.0, 0.03), seed=1)) as srv:
        res = classify_batch(corpus, get_template("guide"), _backend(srv, max_in_flight=3), seed=0, sleep=NO_SLEEP)
        peak = srv.peak_in_flight
    assert [p.id for p in res.predictions] == corpus.ids()
    assert all(p.predicted == i.truth for p, i in zip(res.predictions, corpus))
    assert 1 <= peak <= 3


def test_retry_then_succeed():
    corpus = _corpus(1)
    with MockChatServer(flaky(constant("1-0-0-0"), failures=2)) as srv:
        res = classify_batch(corpus, get_template("zero"), _backend(srv), seed=0, sleep=NO_SLEEP)
        statuses = dict(srv.statuses)
    assert res.predictions[0].predicted == B("1-0-0-0")
    assert res.telemetry["retries"] == 2 and res.telemetry["requests"] == 3
    assert statuses == {503: 2, 200: 1}


def test_retries_exhausted_is_failure():
    corpus = _corpus(2)
    with MockChatServer(flaky(constant("1-0-0-0"), failures=5)) as srv:
        res = classify_batch(corpus, get_template("zero"), _backend(srv), seed=0, sleep=NO_SLEEP)
    assert len(res.failures) == 2
    assert all(p.predicted is None and p.status == "failed" for p in res.predictions)


def test_prose_failure_keeps_raw():
    corpus = _corpus(3)
    prose = "This note is hard to classify."
    with MockChatServer(constant(prose)) as srv:
        res = classify_batch(corpus, get_template("zero"), _backend(srv), seed=0, sleep=NO_SLEEP)
    assert [f.id for f in res.failures] == corpus.ids()
    assert all(f.raw == prose for f in res.failures)
    assert all(p.raw == prose for p in res.predictions)


def test_unreachable_backend_raises():
    cfg = BackendConfig(base_url="http://127.0.0.1:9", model="m", timeout=2,
                        retry=RetryPolicy(max_attempts=1))
    with pytest.raises(BackendError):
        classify_batch(_corpus(2), get_template("zero"), cfg, sleep=NO_SLEEP)


def test_rerun_is_idempotent():
    corpus = _corpus(12)
    replies = {i.text: format_binary_code(i.truth) for i in corpus}
    with MockChatServer(lookup(replies, latency=(0.0, 0.01))) as srv:
        runs = [classify_batch(corpus, get_template("zero"), _backend(srv), seed=3, sleep=NO_SLEEP)
                for _ in range(2)]
    assert runs[0].predictions == runs[1].predictions
    a, b = runs[0].manifest.to_dict(), runs[1].manifest.to_dict()
    a.pop("timestamp"), b.pop("timestamp")
    assert a == b


def test_manifest_has_no_credentials(monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "do-not-store")
    with MockChatServer(constant("0-0-0-0")) as srv:
        res = classify_batch(_corpus(2), get_template("zero"), _backend(srv), seed=0, sleep=NO_SLEEP)
    assert "do-not-store" not in json.dumps(res.manifest.to_dict())


def test_missing_text_rejected():
    corpus = Corpus(S, (AnnotatedInstance("a", S.empty()),))
    with pytest.raises(ValidationError):
        classify_batch(corpus, get_template("zero"), BackendConfig(base_url="http://x", model="m"))
