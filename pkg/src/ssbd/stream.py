"""Streaming input production and session orchestration."""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .core import TokenSeq, Vocab
from .decoder import (
    DecodeConfig,
    PromptTemplate,
    SessionState,
    UpdateResult,
    ar_decode,
    ssbd_update,
)
from .errors import ConfigError, SessionError, SSBDError, TranscriptError
from .metrics import erasure
from .model.base import LanguageModel
from .model.ledger import StepCounts

log = logging.getLogger(__name__)

PARADIGMS = ("ar", "ssbd")


@dataclass(frozen=True)
class StreamUpdate:
    session_id: str
    t: int
    input_text: str
    # filled from the model vocab by run_session when absent
    input_tokens: Optional[TokenSeq] = None

    def tokens(self, vocab: Vocab) -> TokenSeq:
        if self.input_tokens is not None:
            return tuple(self.input_tokens)
        return vocab.encode(self.input_text)


@dataclass(frozen=True)
class UpdateRecord:
    t: int
    input: str
    output: TokenSeq
    display_output: TokenSeq
    accepted: int
    draft_len: int
    erasure: int
    forwards: int
    prefill_positions: int
    decode_steps: int
    wall_nanos: int
    truncated: bool = False


@dataclass
class SessionTrace:
    session_id: str
    paradigm: str
    config: DecodeConfig
    records: list[UpdateRecord] = field(default_factory=list)
    totals: StepCounts = StepCounts()

    @property
    def final_output(self) -> TokenSeq:
        return self.records[-1].output if self.records else ()

    @property
    def outputs(self) -> list[TokenSeq]:
        return [r.output for r in self.records]

    @property
    def display_outputs(self) -> list[TokenSeq]:
        return [r.display_output for r in self.records]


def lag_k_updates(words: Sequence[str], k: int, session_id: str = "s0") -> list[StreamUpdate]:
    """Reveal ``words`` ``k`` at a time; the last update always has the full sentence."""
    if k < 1:
        raise ConfigError(f"lag k must be >= 1, got {k}")
    words = list(words)
    if not words:
        raise ConfigError("cannot build updates from an empty sentence")
    n = math.ceil(len(words) / k)
    return [
        StreamUpdate(session_id, i, " ".join(words[: min(i * k, len(words))]))
        for i in range(1, n + 1)
    ]


def parse_transcript(lines: Iterable[str]) -> list[list[StreamUpdate]]:
    """Group JSONL transcript lines into sessions, sorted by session id.

    Sessions may interleave, but within a session ``t`` must strictly
    increase in file order.
    """
    sessions: dict[str, list[StreamUpdate]] = defaultdict(list)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            sid, t, text = doc["session"], doc["t"], doc["input"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise TranscriptError(f"malformed transcript line: {exc}", line=lineno) from exc
        if not isinstance(sid, str) or type(t) is not int or not isinstance(text, str):
            raise TranscriptError("expected string session, integer t, string input", line=lineno)
        if not text.strip():
            raise TranscriptError(f"empty input for session {sid!r} t={t}", line=lineno)
        prev = sessions[sid][-1].t if sessions[sid] else None
        if prev is not None and t == prev:
            raise TranscriptError(f"duplicate t={t} in session {sid!r}", line=lineno)
        if prev is not None and t < prev:
            raise TranscriptError(f"t={t} after t={prev} in session {sid!r}", line=lineno)
        sessions[sid].append(StreamUpdate(sid, t, text))
    return [sessions[sid] for sid in sorted(sessions)]


def load_transcript(path) -> list[list[StreamUpdate]]:
    with open(path, encoding="utf-8") as fh:
        return parse_transcript(fh)


def transcript_lines(updates: Iterable[StreamUpdate]) -> list[str]:
    return [
        json.dumps({"session": u.session_id, "t": u.t, "input": u.input_text}, ensure_ascii=False)
        for u in updates
    ]


def run_session(
    lm: LanguageModel,
    updates: Sequence[StreamUpdate],
    config: DecodeConfig,
    paradigm: str = "ssbd",
    template: Optional[PromptTemplate] = None,
) -> SessionTrace:
    """Decode every update of one session and record per-update counters."""
    if paradigm not in PARADIGMS:
        raise ConfigError(f"unknown paradigm {paradigm!r}")
    if not updates:
        raise ConfigError("session has no updates")
    sid = updates[0].session_id
    if any(u.session_id != sid for u in updates):
        raise ConfigError("run_session takes updates from a single session")
    vocab = lm.vocab()
    state = SessionState(template or PromptTemplate.for_vocab(vocab), config)
    trace = SessionTrace(sid, paradigm, config)
    prev_display: TokenSeq = ()
    last_t = None
    for i, upd in enumerate(updates):
        if last_t is not None and upd.t <= last_t:
            raise SessionError(sid, upd.t, ConfigError("update index not increasing"))
        last_t = upd.t
        is_final = i == len(updates) - 1
        try:
            tokens = upd.tokens(vocab)
            if paradigm == "ar":
                state.input = tokens
                res: UpdateResult = ar_decode(lm, state, is_final=is_final)
            else:
                res = ssbd_update(lm, state, tokens, is_final=is_final)
        except SSBDError as exc:
            raise SessionError(sid, upd.t, exc) from exc
        trace.records.append(
            UpdateRecord(
                t=upd.t,
                input=upd.input_text,
                output=res.output,
                display_output=res.display_output,
                accepted=res.verification.accepted,
                draft_len=res.verification.draft_len,
                erasure=erasure(prev_display, res.display_output),
                forwards=res.steps.forwards,
                prefill_positions=res.steps.prefill_positions,
                decode_steps=res.steps.decode_steps,
                wall_nanos=res.steps.wall_nanos,
                truncated=res.truncated,
            )
        )
        prev_display = res.display_output
    trace.totals = state.ledger.snapshot()
    log.debug("session %s (%s): %s", sid, paradigm, trace.totals)
    return trace


def trace_to_dicts(trace: SessionTrace, vocab: Optional[Vocab] = None, timing: bool = True) -> list[dict]:
    rows = []
    for r in trace.records:
        row = {
            "session": trace.session_id,
            "t": r.t,
            "paradigm": trace.paradigm,
            "beta": trace.config.beta,
            "mask_k": trace.config.mask_k,
            "mask_mode": trace.config.mask_mode.value,
            "input": r.input,
            "output": list(r.output),
            "display_output": list(r.display_output),
            "accepted": r.accepted,
            "draft_len": r.draft_len,
            "erasure": r.erasure,
            "forwards": r.forwards,
            "prefill_positions": r.prefill_positions,
            "decode_steps": r.decode_steps,
            "wall_nanos": r.wall_nanos if timing else 0,
            "truncated": r.truncated,
        }
        if vocab is not None and vocab.tokens is not None:
            row["output_text"] = vocab.decode(r.output)
        rows.append(row)
    return rows


def write_trace(traces: Iterable[SessionTrace], path, vocab: Optional[Vocab] = None, timing: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            for row in trace_to_dicts(trace, vocab, timing):
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_trace(path) -> list[SessionTrace]:
    """Rebuild traces from a trace JSONL file, one per (paradigm, config, session)."""
    traces: dict[tuple, SessionTrace] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            cfg = DecodeConfig(beta=d["beta"], mask_k=d["mask_k"], mask_mode=d["mask_mode"])
            key = (d["paradigm"], cfg, d["session"])
            trace = traces.get(key)
            if trace is None:
                trace = traces[key] = SessionTrace(d["session"], d["paradigm"], cfg)
            trace.records.append(
                UpdateRecord(
                    t=d["t"],
                    input=d["input"],
                    output=tuple(d["output"]),
                    display_output=tuple(d["display_output"]),
                    accepted=d["accepted"],
                    draft_len=d["draft_len"],
                    erasure=d["erasure"],
                    forwards=d["forwards"],
                    prefill_positions=d["prefill_positions"],
                    decode_steps=d["decode_steps"],
                    wall_nanos=d["wall_nanos"],
                    truncated=d.get("truncated", False),
                )
            )
    for trace in traces.values():
        trace.totals = sum(
            (StepCounts(r.forwards, r.prefill_positions, r.decode_steps, r.wall_nanos) for r in trace.records),
            StepCounts(),
        )
    return list(traces.values())


def strip_timing(trace: SessionTrace) -> SessionTrace:
    """Copy of ``trace`` with every wall-clock field zeroed."""
    records = [replace(r, wall_nanos=0) for r in trace.records]
    return SessionTrace(
        trace.session_id, trace.paradigm, trace.config, records, replace(trace.totals, wall_nanos=0)
    )
