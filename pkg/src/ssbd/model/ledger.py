"""Simulated KV-cache bookkeeping.

No tensors are kept; the ledger only tracks how many prompt positions hold
valid cache entries and what each forward call cost.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

from ..core import lcp
from ..errors import CacheLogicError


@dataclass(frozen=True)
class StepCounts:
    forwards: int = 0
    prefill_positions: int = 0
    decode_steps: int = 0
    wall_nanos: int = 0

    def __sub__(self, other: "StepCounts") -> "StepCounts":
        return StepCounts(*(getattr(self, f.name) - getattr(other, f.name) for f in fields(self)))

    def __add__(self, other: "StepCounts") -> "StepCounts":
        return StepCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    @property
    def positions(self) -> int:
        return self.prefill_positions + self.decode_steps


@dataclass
class CacheLedger:
    """Per-session cache validity and cost counters.

    Cost model: every model call is one forward. A position whose
    distribution is used to pick a generated token (including the EOS that
    ends decoding) counts as a decode step; every other computed position
    counts as a prefill position.
    """

    validated_len: int = 0
    prefill_positions: int = 0
    decode_steps: int = 0
    forwards: int = 0
    wall_nanos: int = 0

    def snapshot(self) -> StepCounts:
        return StepCounts(self.forwards, self.prefill_positions, self.decode_steps, self.wall_nanos)

    def reuse_prefix(self, prev_prompt: Sequence[int], new_prompt: Sequence[int]) -> int:
        """Keep the cache entries shared by both prompts; return how many survive."""
        r = min(lcp(prev_prompt, new_prompt), self.validated_len)
        self.validated_len = r
        return r

    def truncate(self, keep_len: int) -> None:
        if keep_len < 0 or keep_len > self.validated_len:
            raise CacheLogicError(
                f"cannot keep {keep_len} positions, only {self.validated_len} are valid"
            )
        self.validated_len = keep_len

    def charge(self, computed: int, generated: int, prompt_len: int, nanos: int = 0) -> None:
        """Record one forward that computed ``computed`` positions and extended
        the cache to ``prompt_len``; ``generated`` of those positions picked a token."""
        if not 0 <= generated <= computed:
            raise CacheLogicError(f"generated={generated} outside [0, computed={computed}]")
        self.forwards += 1
        self.decode_steps += generated
        self.prefill_positions += computed - generated
        self.wall_nanos += nanos
        self.validated_len = prompt_len


def reuse_prefix(ledger: CacheLedger, prev_prompt: Sequence[int], new_prompt: Sequence[int]) -> int:
    return ledger.reuse_prefix(prev_prompt, new_prompt)


def cache_truncate(ledger: CacheLedger, keep_len: int) -> None:
    ledger.truncate(keep_len)
