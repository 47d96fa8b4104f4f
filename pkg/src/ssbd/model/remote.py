"""HTTP client for a backend speaking the ``/v1/forward`` JSON protocol."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
import requests

from ..core import ProbDist, Vocab
from ..errors import ConfigError, ProtocolError, TransportError

ROW_TOL = 1e-6


class RemoteModel:
    def __init__(self, endpoint: str, expected_vocab: Optional[Vocab] = None, timeout: float = 10.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        doc = self._request("GET", "/v1/vocab")
        try:
            self._vocab = Vocab.from_json(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad /v1/vocab body: {exc}") from exc
        if expected_vocab is not None and expected_vocab.size != self._vocab.size:
            raise ConfigError(
                f"backend vocab size {self._vocab.size} != expected {expected_vocab.size}"
            )

    def vocab(self) -> Vocab:
        return self._vocab

    def _request(self, method: str, path: str, payload=None):
        url = self.endpoint + path
        try:
            resp = requests.request(method, url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"{method} {url}: {exc}") from exc
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{method} {url}: response is not JSON") from exc
        if resp.status_code != 200:
            detail = body.get("error") if isinstance(body, dict) else body
            raise ProtocolError(f"{method} {url}: HTTP {resp.status_code}: {detail}")
        if not isinstance(body, dict):
            raise ProtocolError(f"{method} {url}: expected a JSON object")
        return body

    def forward(self, prompt: Sequence[int], from_position: int) -> list[ProbDist]:
        prompt = [int(t) for t in prompt]
        if not prompt:
            raise ConfigError("remote forward needs a non-empty prompt")
        body = self._request(
            "POST", "/v1/forward", {"tokens": prompt, "from_position": int(from_position)}
        )
        return decode_forward_response(body, self._vocab.size, len(prompt) - from_position)


def decode_forward_response(body: dict, vocab_size: int, expected_rows: int) -> list[ProbDist]:
    """Turn a ``/v1/forward`` body into distributions, validating every row."""
    if body.get("vocab_size") != vocab_size:
        raise ConfigError(f"response vocab_size {body.get('vocab_size')!r} != {vocab_size}")
    if "probs" in body:
        rows = [_full_row(r, vocab_size) for r in _rows(body["probs"])]
    elif "top_k" in body:
        rows = [_top_k_row(r, vocab_size) for r in _rows(body["top_k"])]
    else:
        raise ProtocolError("response has neither 'probs' nor 'top_k'")
    if len(rows) != expected_rows:
        raise ProtocolError(f"expected {expected_rows} rows, got {len(rows)}")
    return rows


def _rows(value):
    if not isinstance(value, list):
        raise ProtocolError("rows must be a JSON array")
    return value


def _full_row(row, vocab_size: int) -> ProbDist:
    try:
        p = np.asarray(row, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"row is not numeric: {exc}") from exc
    if p.shape != (vocab_size,):
        raise ProtocolError(f"row has shape {p.shape}, expected ({vocab_size},)")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ProtocolError("row has negative or non-finite probabilities")
    total = math.fsum(p)
    if abs(total - 1.0) > ROW_TOL:
        raise ProtocolError(f"row sums to {total!r}")
    return ProbDist(p / total)


def _top_k_row(row, vocab_size: int) -> ProbDist:
    # ids missing from a truncated row get probability zero
    p = np.zeros(vocab_size)
    try:
        for tok, prob in row:
            tok, prob = int(tok), float(prob)
            if not 0 <= tok < vocab_size or not math.isfinite(prob) or prob < 0:
                raise ProtocolError(f"bad top-k pair ({tok}, {prob})")
            p[tok] = prob
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed top-k row: {exc}") from exc
    if p.sum() <= 0:
        raise ProtocolError("top-k row has no probability mass")
    return ProbDist(p / p.sum())
