"""In-process chat-completion server for tests and offline runs.

Replies come from a queue of scripted ``MockReply`` objects first, then from
the ``responder`` callable. Every request body is logged, and the server
tracks the peak number of requests it was serving at once.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Iterable


@dataclass
class MockReply:
    status: int = 200
    content: str | None = None
    body: bytes | None = None  # raw body overrides ``content``
    finish_reason: str = "stop"
    delay: float = 0.0


Responder = Callable[[str, dict], "MockReply | str"]


def completion_body(content: str, finish_reason: str = "stop", model: str = "mock") -> bytes:
    return json.dumps(
        {
            "id": "mock-completion",
            "object": "chat.completion",
            "model": model,
            "choices": [
                {"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": finish_reason}
            ],
        }
    ).encode("utf-8")


class MockChatServer:
    def __init__(self, responder: Responder | None = None, script: Iterable[MockReply] = (), delay: float = 0.0):
        self.responder = responder or (lambda prompt, body: "")
        self.script: deque[MockReply] = deque(script)
        self.delay = delay
        self.requests: list[dict[str, Any]] = []
        self.headers: list[dict[str, str]] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), self._handler_class())
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self) -> MockChatServer:
        self._thread = threading.Thread(target=self._httpd.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> MockChatServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def prompts(self) -> list[str]:
        return [r["messages"][0]["content"] for r in self.requests if r.get("messages")]

    def _next_reply(self, prompt: str, body: dict) -> MockReply:
        with self._lock:
            scripted = self.script.popleft() if self.script else None
        if scripted is not None:
            return scripted
        reply = self.responder(prompt, body)
        return MockReply(content=reply) if isinstance(reply, str) else reply

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:
                pass

            def do_POST(self) -> None:
                with server._lock:
                    server.in_flight += 1
                    server.max_in_flight = max(server.max_in_flight, server.in_flight)
                try:
                    self._serve()
                finally:
                    with server._lock:
                        server.in_flight -= 1

            def _serve(self) -> None:
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError:
                    body = {}
                with server._lock:
                    server.requests.append(body)
                    server.headers.append(dict(self.headers))
                messages = body.get("messages") or [{}]
                prompt = messages[0].get("content", "")
                reply = server._next_reply(prompt, body)
                if reply.delay or server.delay:
                    time.sleep(reply.delay or server.delay)
                if reply.body is not None:
                    data = reply.body
                elif reply.status == 200:
                    data = completion_body(reply.content or "", reply.finish_reason, body.get("model", "mock"))
                else:
                    data = json.dumps({"error": {"message": f"mock status {reply.status}"}}).encode()
                self.send_response(reply.status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler
