"""Mock inference server exposing a local model over the JSON wire protocol."""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .errors import SSBDError
from .model.base import LanguageModel

log = logging.getLogger(__name__)

FULL_VOCAB_LIMIT = 4096
DEFAULT_TOP_K = 64


def encode_forward_response(rows, vocab_size: int, full_limit: int, top_k: int) -> dict:
    if vocab_size <= full_limit:
        return {"vocab_size": vocab_size, "probs": [r.tolist() for r in rows]}
    out = []
    for r in rows:
        # stable sort keeps lower ids first among equal probabilities
        ids = np.argsort(-r.probs, kind="stable")[:top_k]
        out.append([[int(i), float(r.probs[i])] for i in ids])
    return {"vocab_size": vocab_size, "top_k": out}


class _Handler(BaseHTTPRequestHandler):
    server: "MockServer"

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path != "/v1/vocab":
            self._send(404, {"error": f"no route {self.path}"})
            return
        self._send(200, self.server.model.vocab().to_json())

    def do_POST(self):
        if self.path != "/v1/forward":
            self._send(404, {"error": f"no route {self.path}"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        try:
            req = json.loads(raw)
            tokens = req["tokens"]
            start = req["from_position"]
            if not isinstance(tokens, list) or not all(type(t) is int for t in tokens):
                raise ValueError("'tokens' must be a list of integers")
            if type(start) is not int or not 0 <= start <= len(tokens):
                raise ValueError("'from_position' must be an integer in [0, len(tokens)]")
            if not tokens:
                raise ValueError("'tokens' must be non-empty")
            rows = self.server.model.forward(tokens, start)
        except (ValueError, KeyError, TypeError, SSBDError) as exc:
            self._send(400, {"error": str(exc) or type(exc).__name__})
            return
        vocab_size = self.server.model.vocab().size
        self._send(
            200,
            encode_forward_response(rows, vocab_size, self.server.full_limit, self.server.top_k),
        )


class MockServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(
        self,
        model: LanguageModel,
        host: str = "127.0.0.1",
        port: int = 0,
        full_limit: int = FULL_VOCAB_LIMIT,
        top_k: int = DEFAULT_TOP_K,
    ):
        self.model = model
        self.full_limit = full_limit
        self.top_k = top_k
        super().__init__((host, port), _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self, poll_interval: float = 0.05) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, args=(poll_interval,), daemon=True)
        thread.start()
        return thread
