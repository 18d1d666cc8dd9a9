"""Local OpenAI-style HTTP endpoint that replays canned judge responses.

Used for offline end-to-end runs and tests.  Responses are keyed by
``canned_key(model_id, prompt_text)``; each key holds a list of replies that
is cycled through on repeated requests.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import defaultdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping, Sequence


def canned_key(model_id: str, prompt_text: str) -> str:
    return hashlib.sha256(f"{model_id}\n{prompt_text}".encode("utf-8")).hexdigest()


def load_canned(path: str | Path) -> dict[str, list[str]]:
    """Read ``{"key": ..., "responses": [...]}`` lines."""
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out[row["key"]] = list(row["responses"])
    return out


class StubJudgeServer:
    """Threaded HTTP server on localhost.

    ``script`` optionally lists HTTP status codes to return for the first
    requests (e.g. ``[500, 429]``) before replaying normally.  Unknown keys
    get ``default_reply`` or a 404.
    """

    def __init__(
        self,
        responses: Mapping[str, Sequence[str]],
        *,
        default_reply: str | None = None,
        script: Sequence[int] = (),
        required_token: str | None = None,
    ):
        self.responses = {k: list(v) for k, v in responses.items()}
        self.default_reply = default_reply
        self.script = list(script)
        self.required_token = required_token
        self.requests: list[dict] = []
        self._counters: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def _next_reply(self, model: str, prompt: str) -> tuple[int, str | None]:
        key = canned_key(model, prompt)
        with self._lock:
            if self.script:
                return self.script.pop(0), None
            replies = self.responses.get(key)
            if not replies:
                return (200, self.default_reply) if self.default_reply is not None else (404, None)
            i = self._counters[key]
            self._counters[key] += 1
            return 200, replies[i % len(replies)]

    def _handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # silence per-request logging
                pass

            def do_POST(self):
                length = int(self.headers.get("content-length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub._lock:
                    stub.requests.append({"headers": dict(self.headers), "body": body})
                if stub.required_token is not None:
                    if self.headers.get("authorization") != f"Bearer {stub.required_token}":
                        self._send(401, {"error": "unauthorized"})
                        return
                prompt = body.get("messages", [{}])[-1].get("content", "")
                status, reply = stub._next_reply(body.get("model", ""), prompt)
                if status != 200:
                    self._send(status, {"error": f"stub status {status}"})
                    return
                self._send(200, {
                    "object": "chat.completion",
                    "model": body.get("model"),
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": reply}}],
                })

            def _send(self, status: int, payload: dict):
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("content-type", "application/json")
                self.send_header("content-length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler

    def start(self) -> "StubJudgeServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "StubJudgeServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
