"""Flicker and efficiency metrics over session traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from statistics import fmean
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

from .core import lcp
from .errors import ConfigError, UndefinedMetricError

if TYPE_CHECKING:
    from .stream import SessionTrace

REPORT_HEADER = (
    "session", "beta", "mask_k", "mask_mode", "NE", "a_over_d", "a_over_o",
    "ar_steps", "ssbd_steps", "step_speedup", "tps",
)


def erasure(prev: Sequence, curr: Sequence) -> int:
    """Tokens deleted from the end of ``prev`` to reach a prefix of ``curr``."""
    return len(prev) - lcp(prev, curr)


def normalized_erasure(outputs: Sequence[Sequence]) -> float:
    """Total erasure over a stream divided by the final output length.

    The stream starts from an empty output, so the first update erases nothing.
    """
    if not outputs:
        raise UndefinedMetricError("no outputs")
    if not outputs[-1]:
        raise UndefinedMetricError("final output is empty")
    total = 0
    prev: Sequence = ()
    for out in outputs:
        total += erasure(prev, out)
        prev = out
    return total / len(outputs[-1])


@dataclass(frozen=True)
class FlickerStats:
    per_update_erasure: tuple[int, ...]
    normalized_erasure: Optional[float]


@dataclass(frozen=True)
class AcceptanceStats:
    accepted_total: int
    draft_total: int
    output_total: int

    @property
    def a_over_d(self) -> Optional[float]:
        return self.accepted_total / self.draft_total if self.draft_total else None

    @property
    def a_over_o(self) -> Optional[float]:
        return self.accepted_total / self.output_total if self.output_total else None

    def __add__(self, other: "AcceptanceStats") -> "AcceptanceStats":
        return AcceptanceStats(
            self.accepted_total + other.accepted_total,
            self.draft_total + other.draft_total,
            self.output_total + other.output_total,
        )


@dataclass(frozen=True)
class EfficiencyStats:
    ar_decode_steps: int
    ssbd_decode_steps: int
    ar_forwards: int
    ssbd_forwards: int
    ssbd_output_tokens: int = 0
    ssbd_wall_nanos: int = 0

    @property
    def step_speedup(self) -> Optional[float]:
        return self.ar_decode_steps / self.ssbd_decode_steps if self.ssbd_decode_steps else None

    @property
    def forward_speedup(self) -> Optional[float]:
        return self.ar_forwards / self.ssbd_forwards if self.ssbd_forwards else None

    @property
    def tps(self) -> Optional[float]:
        """Wall-clock output tokens per second; informational only."""
        return tps(self.ssbd_output_tokens, self.ssbd_wall_nanos)

    def __add__(self, other: "EfficiencyStats") -> "EfficiencyStats":
        return EfficiencyStats(
            *(a + b for a, b in zip(self._values(), other._values()))
        )

    def _values(self):
        return (
            self.ar_decode_steps, self.ssbd_decode_steps, self.ar_forwards,
            self.ssbd_forwards, self.ssbd_output_tokens, self.ssbd_wall_nanos,
        )


def tps(tokens: int, nanos: int) -> Optional[float]:
    return tokens / (nanos / 1e9) if nanos > 0 else None


def flicker_stats(trace: "SessionTrace", display: bool = True) -> FlickerStats:
    """Erasure per update, measured on what the user sees by default."""
    outs = trace.display_outputs if display else trace.outputs
    per_update = []
    prev: Sequence = ()
    for out in outs:
        per_update.append(erasure(prev, out))
        prev = out
    try:
        ne = normalized_erasure(outs)
    except UndefinedMetricError:
        ne = None
    return FlickerStats(tuple(per_update), ne)


def acceptance_stats(trace: "SessionTrace") -> AcceptanceStats:
    return AcceptanceStats(
        accepted_total=sum(r.accepted for r in trace.records),
        draft_total=sum(r.draft_len for r in trace.records),
        output_total=sum(len(r.output) for r in trace.records),
    )


def efficiency_stats(ar_trace: "SessionTrace", ssbd_trace: "SessionTrace") -> EfficiencyStats:
    if ar_trace.session_id != ssbd_trace.session_id:
        raise ConfigError(
            f"comparing session {ar_trace.session_id!r} with {ssbd_trace.session_id!r}"
        )
    ar_inputs = [(r.t, r.input) for r in ar_trace.records]
    ssbd_inputs = [(r.t, r.input) for r in ssbd_trace.records]
    if ar_inputs != ssbd_inputs:
        raise ConfigError(f"session {ar_trace.session_id!r}: traces cover different inputs")
    return EfficiencyStats(
        ar_decode_steps=sum(r.decode_steps for r in ar_trace.records),
        ssbd_decode_steps=sum(r.decode_steps for r in ssbd_trace.records),
        ar_forwards=sum(r.forwards for r in ar_trace.records),
        ssbd_forwards=sum(r.forwards for r in ssbd_trace.records),
        ssbd_output_tokens=sum(len(r.output) for r in ssbd_trace.records),
        ssbd_wall_nanos=sum(r.wall_nanos for r in ssbd_trace.records),
    )


@dataclass(frozen=True)
class ReportRow:
    session: str
    beta: Optional[float]
    mask_k: int
    mask_mode: str
    ne: Optional[float]
    a_over_d: Optional[float]
    a_over_o: Optional[float]
    ar_steps: Optional[int]
    ssbd_steps: Optional[int]
    step_speedup: Optional[float]
    tps: Optional[float]

    def cells(self) -> list[str]:
        return [
            self.session,
            _ratio(self.beta, 2),
            str(self.mask_k),
            self.mask_mode,
            _ratio(self.ne),
            _ratio(self.a_over_d),
            _ratio(self.a_over_o),
            "" if self.ar_steps is None else str(self.ar_steps),
            "" if self.ssbd_steps is None else str(self.ssbd_steps),
            _ratio(self.step_speedup),
            _ratio(self.tps),
        ]


def _ratio(x: Optional[float], places: int = 4) -> str:
    return "" if x is None else f"{x:.{places}f}"


def _steps(trace: Optional["SessionTrace"]) -> Optional[int]:
    return None if trace is None else sum(r.decode_steps for r in trace.records)


def report_rows(
    ssbd: Sequence["SessionTrace"] = (),
    ar: Sequence["SessionTrace"] = (),
) -> list[ReportRow]:
    """One row per session plus an ``ALL`` row for a single configuration.

    With both paradigms present the rows describe the SSBD run and carry the
    AR step counts for the speedup; with only one paradigm the row describes
    that paradigm. Aggregate NE is the mean of the per-session values; every
    other aggregate is pooled.
    """
    primary = list(ssbd) if ssbd else list(ar)
    if not primary:
        return []
    ar_by_sid = {t.session_id: t for t in ar}
    ssbd_by_sid = {t.session_id: t for t in ssbd}
    cfg = primary[0].config
    beta = cfg.beta if ssbd else None
    rows = []
    nes, acc_all, tokens, nanos = [], AcceptanceStats(0, 0, 0), 0, 0
    ar_total = ssbd_total = 0
    for trace in sorted(primary, key=lambda t: t.session_id):
        sid = trace.session_id
        ne = flicker_stats(trace).normalized_erasure
        if ne is not None:
            nes.append(ne)
        acc = acceptance_stats(trace) if ssbd else None
        if acc is not None:
            acc_all = acc_all + acc
        ar_t, ssbd_t = ar_by_sid.get(sid), ssbd_by_sid.get(sid)
        speedup = None
        if ar_t is not None and ssbd_t is not None:
            speedup = efficiency_stats(ar_t, ssbd_t).step_speedup
        out_tokens = sum(len(r.output) for r in trace.records)
        wall = sum(r.wall_nanos for r in trace.records)
        tokens += out_tokens
        nanos += wall
        ar_total += _steps(ar_t) or 0
        ssbd_total += _steps(ssbd_t) or 0
        rows.append(ReportRow(
            session=sid,
            beta=beta,
            mask_k=cfg.mask_k,
            mask_mode=cfg.mask_mode.value,
            ne=ne,
            a_over_d=acc.a_over_d if acc else None,
            a_over_o=acc.a_over_o if acc else None,
            ar_steps=_steps(ar_t),
            ssbd_steps=_steps(ssbd_t),
            step_speedup=speedup,
            tps=tps(out_tokens, wall),
        ))
    rows.append(ReportRow(
        session="ALL",
        beta=beta,
        mask_k=cfg.mask_k,
        mask_mode=cfg.mask_mode.value,
        ne=fmean(nes) if nes else None,
        a_over_d=acc_all.a_over_d if ssbd else None,
        a_over_o=acc_all.a_over_o if ssbd else None,
        ar_steps=ar_total if ar else None,
        ssbd_steps=ssbd_total if ssbd else None,
        step_speedup=ar_total / ssbd_total if ar and ssbd and ssbd_total else None,
        tps=tps(tokens, nanos),
    ))
    return rows


def emit_report(rows: Iterable[ReportRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in rows:
            writer.writerow(row.cells())


def report_from_traces(traces: Sequence["SessionTrace"]) -> list[ReportRow]:
    """Rebuild report rows from traces (e.g. read back from a trace file).

    AR traces form a baseline block; each SSBD configuration forms its own
    block, compared against the AR traces when present.
    """
    ar = [t for t in traces if t.paradigm == "ar"]
    groups: dict = {}
    for t in traces:
        if t.paradigm == "ssbd":
            groups.setdefault(t.config, []).append(t)
    rows = []
    if ar:
        rows.extend(report_rows(ar=ar))
    for cfg in sorted(groups, key=lambda c: (c.beta, c.mask_mode.value, c.mask_k)):
        rows.extend(report_rows(ssbd=groups[cfg], ar=ar))
    return rows
