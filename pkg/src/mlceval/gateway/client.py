"""Chat-completions client and the bounded-concurrency batch runner."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import httpx

from ..dataset import Corpus, PredictionRecord, RunManifest
from ..errors import BackendError, ValidationError
from .parsing import FAILED, parse_output
from .prompts import PromptTemplate, render_prompt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 8.0
    retry_statuses: tuple[int, ...] = (408, 429, 500, 502, 503, 504)

    def retryable(self, status: int) -> bool:
        return status in self.retry_statuses or 500 <= status < 600

    def delay(self, attempt: int, rng: random.Random) -> float:
        """Full-jitter exponential backoff before retry number ``attempt`` (1-based)."""
        return rng.uniform(0, min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1)))


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model: str
    path: str = "/chat/completions"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 32
    extra_params: Mapping[str, Any] = field(default_factory=dict)
    timeout: float = 60.0
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValidationError("backend base_url is required")
        if not self.model:
            raise ValidationError("backend model is required")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be at least 1")
        if self.retry.max_attempts < 1:
            raise ValidationError("retry.max_attempts must be at least 1")
        if self.timeout <= 0:
            raise ValidationError("timeout must be positive")

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + "/" + self.path.lstrip("/")

    def decoding(self) -> dict[str, Any]:
        return {"temperature": self.temperature, "max_tokens": self.max_tokens, "n": 1, **dict(self.extra_params)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BackendConfig":
        d = dict(d)
        if "retry" in d and isinstance(d["retry"], Mapping):
            r = dict(d["retry"])
            if "retry_statuses" in r:
                r["retry_statuses"] = tuple(r["retry_statuses"])
            d["retry"] = RetryPolicy(**r)
        return cls(**d)


@dataclass
class CallResult:
    text: str | None
    attempts: int
    error: str | None = None
    got_response: bool = False


class ChatClient:
    """Minimal chat-completions client with retry on transient failures."""

    def __init__(
        self,
        config: BackendConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: int | None = None,
    ):
        self.config = config
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        limits = httpx.Limits(max_connections=config.max_in_flight,
                              max_keepalive_connections=config.max_in_flight)
        self._http = httpx.Client(headers=headers, timeout=config.timeout, limits=limits, transport=transport)
        self._sleep = sleep
        self._rng = random.Random(jitter_seed)
        self._lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ChatClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _backoff(self, attempt: int) -> None:
        with self._lock:
            delay = self.config.retry.delay(attempt, self._rng)
        self._sleep(delay)

    def complete(self, messages: list[dict[str, str]]) -> CallResult:
        cfg = self.config
        payload = {"model": cfg.model, "messages": messages, **cfg.decoding()}
        got_response = False
        error = None
        for attempt in range(1, cfg.retry.max_attempts + 1):
            try:
                resp = self._http.post(cfg.url, json=payload)
            except httpx.TimeoutException as exc:
                error = f"timeout: {exc}"
            except httpx.TransportError as exc:
                error = f"transport error: {exc}"
            else:
                got_response = True
                if resp.status_code == 200:
                    try:
                        text = resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError):
                        return CallResult(None, attempt, "malformed response body", True)
                    return CallResult(text if isinstance(text, str) else "", attempt, None, True)
                error = f"HTTP {resp.status_code}"
                if not cfg.retry.retryable(resp.status_code):
                    return CallResult(None, attempt, error, True)
            if attempt < cfg.retry.max_attempts:
                log.debug("attempt %d failed (%s); backing off", attempt, error)
                self._backoff(attempt)
        return CallResult(None, cfg.retry.max_attempts, f"retries exhausted: {error}", got_response)


@dataclass(frozen=True)
class Failure:
    id: str
    reason: str
    raw: str | None
    attempts: int


@dataclass
class BatchResult:
    predictions: list[PredictionRecord]
    manifest: RunManifest
    failures: list[Failure]
    telemetry: dict[str, Any]


def classify_batch(
    corpus: Corpus,
    template: PromptTemplate,
    backend: BackendConfig,
    strategy: str | None = None,
    repeat: int = 0,
    fold: int | None = None,
    seed: int | None = None,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> BatchResult:
    """Predict every instance, at most ``backend.max_in_flight`` requests at a time.

    Output follows corpus order.  Instances whose request or parse failed
    appear with ``predicted=None`` and are also listed in ``failures``.
    Raises BackendError when no request ever received an HTTP response.
    """
    missing = [inst.id for inst in corpus if not inst.text]
    if missing:
        raise ValidationError(f"instances without text: {missing[:5]}{' ...' if len(missing) > 5 else ''}")
    if strategy is None:
        strategy = template.id if template.id in ("zero", "guide") else None
    messages = [render_prompt(template, corpus.schema, inst.text) for inst in corpus]

    with ChatClient(backend, transport=transport, sleep=sleep, jitter_seed=seed) as client:
        with ThreadPoolExecutor(max_workers=backend.max_in_flight) as pool:
            results = list(pool.map(client.complete, messages))

    if results and not any(r.got_response for r in results):
        raise BackendError(f"backend at {backend.url} never responded: {results[0].error}")

    predictions: list[PredictionRecord] = []
    failures: list[Failure] = []
    for inst, res in zip(corpus, results):
        if res.text is None:
            failures.append(Failure(inst.id, res.error or "request failed", None, res.attempts))
            predictions.append(PredictionRecord(inst.id, None, None, FAILED, res.error))
            continue
        outcome = parse_output(res.text, corpus.schema)
        if outcome.status == FAILED:
            failures.append(Failure(inst.id, f"unparseable output: {outcome.note}", res.text, res.attempts))
        predictions.append(PredictionRecord(inst.id, outcome.labels, res.text, outcome.status, outcome.note))

    attempts = [r.attempts for r in results]
    telemetry = {
        "requests": sum(attempts),
        "retries": sum(a - 1 for a in attempts),
        "failures": len(failures),
        "repaired": sum(1 for p in predictions if p.status == "repaired"),
    }
    manifest = RunManifest(
        model=backend.model,
        strategy=strategy,
        repeat=repeat,
        fold=fold,
        seed=seed,
        params={
            "endpoint": backend.url,
            "template": template.id,
            "decoding": backend.decoding(),
            "max_in_flight": backend.max_in_flight,
            "max_attempts": backend.retry.max_attempts,
        },
    )
    return BatchResult(predictions, manifest, failures, telemetry)
