"""In-process chat-completions server for tests and offline runs.

A responder maps the request's user message to ``(status, content, delay)``.
The server counts requests and records the peak number in flight.
"""

from __future__ import annotations

import json
import random
import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Mapping

Reply = tuple[int, str, float]
Responder = Callable[[str], Reply]


def constant(content: str, delay: float = 0.0) -> Responder:
    return lambda _user: (200, content, delay)


def lookup(replies: Mapping[str, str], default: str = "", latency: tuple[float, float] = (0.0, 0.0),
           seed: int = 0) -> Responder:
    """Answer with ``replies[note]`` for the note whose text appears in the prompt."""
    rng = random.Random(seed)
    lock = threading.Lock()
    keys = sorted(replies, key=len, reverse=True)

    def respond(user: str) -> Reply:
        with lock:
            delay = rng.uniform(*latency)
        for note in keys:
            if note in user:
                return 200, replies[note], delay
        return 200, default, delay

    return respond


def flaky(inner: Responder, failures: int, status: int = 503) -> Responder:
    """Fail the first ``failures`` requests for each distinct prompt, then defer to ``inner``."""
    seen: Counter[str] = Counter()
    lock = threading.Lock()

    def respond(user: str) -> Reply:
        with lock:
            seen[user] += 1
            n = seen[user]
        if n <= failures:
            return status, "", 0.0
        return inner(user)

    return respond


class MockChatServer:
    def __init__(self, responder: Responder, host: str = "127.0.0.1", port: int = 0):
        self.responder = responder
        self.requests = 0
        self.in_flight = 0
        self.peak_in_flight = 0
        self.statuses: Counter[int] = Counter()
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:  # keep test output quiet
                pass

            def do_POST(self) -> None:
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                with server._lock:
                    server.requests += 1
                    server.in_flight += 1
                    server.peak_in_flight = max(server.peak_in_flight, server.in_flight)
                try:
                    try:
                        payload = json.loads(body)
                        user = next(m["content"] for m in reversed(payload["messages"]) if m["role"] == "user")
                    except (ValueError, KeyError, StopIteration, TypeError):
                        status, content, delay = 400, "", 0.0
                    else:
                        status, content, delay = server.responder(user)
                    if delay:
                        time.sleep(delay)
                    if status == 200:
                        data = json.dumps({
                            "id": f"mock-{server.requests}",
                            "object": "chat.completion",
                            "model": payload.get("model", "mock"),
                            "choices": [{"index": 0, "finish_reason": "stop",
                                         "message": {"role": "assistant", "content": content}}],
                        }).encode()
                    else:
                        data = json.dumps({"error": {"message": f"mock status {status}"}}).encode()
                    with server._lock:
                        server.statuses[status] += 1
                        server.in_flight -= 1
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                except BaseException:
                    with server._lock:
                        server.in_flight = max(0, server.in_flight - 1)
                    raise

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self) -> "MockChatServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
