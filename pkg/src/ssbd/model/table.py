from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np

from ..core import ProbDist, Vocab, check_seq
from ..errors import ConfigError


class TableModel:
    """Exact-match lookup from full context to next-token distribution.

    Contexts that are not in the table get ``fallback`` (uniform by default).
    """

    def __init__(
        self,
        vocab: Vocab,
        entries: Mapping[Sequence[int], ProbDist],
        fallback: Optional[ProbDist] = None,
    ):
        self._vocab = vocab
        self.fallback = fallback if fallback is not None else ProbDist.uniform(vocab.size)
        if len(self.fallback) != vocab.size:
            raise ConfigError("fallback length does not match vocab size")
        self.entries: dict[tuple[int, ...], ProbDist] = {}
        for ctx, dist in entries.items():
            ctx = check_seq(ctx, vocab)
            if not isinstance(dist, ProbDist):
                dist = ProbDist(dist)
            if len(dist) != vocab.size:
                raise ConfigError(f"entry for context {ctx} has {len(dist)} probabilities")
            self.entries[ctx] = dist

    def vocab(self) -> Vocab:
        return self._vocab

    def predict(self, context: Sequence[int]) -> ProbDist:
        return self.entries.get(tuple(context), self.fallback)

    def forward(self, prompt: Sequence[int], from_position: int) -> list[ProbDist]:
        prompt = check_seq(prompt, self._vocab)
        if not 0 <= from_position <= len(prompt):
            raise ConfigError(f"from_position {from_position} outside [0, {len(prompt)}]")
        return [self.predict(prompt[: j + 1]) for j in range(from_position, len(prompt))]

    @classmethod
    def scripted(
        cls,
        vocab: Vocab,
        script: Mapping[Sequence[int], Sequence[int]],
        peak: float = 0.9,
        fallback: Optional[ProbDist] = None,
    ) -> "TableModel":
        """Table whose greedy continuation of each prompt is the scripted output.

        Every prefix of ``prompt + output`` gets a distribution putting
        ``peak`` on the next scripted token (EOS after the last one) and
        spreading the rest evenly.
        """
        if not 0 < peak <= 1:
            raise ConfigError("peak must be in (0, 1]")
        entries: dict[tuple[int, ...], ProbDist] = {}
        for prompt, output in script.items():
            seq = tuple(prompt) + tuple(output)
            targets = list(output) + [vocab.eos_id]
            for i, target in enumerate(targets):
                ctx = seq[: len(prompt) + i]
                p = np.full(vocab.size, (1.0 - peak) / max(vocab.size - 1, 1))
                p[target] = peak
                if vocab.size == 1:
                    p[target] = 1.0
                dist = ProbDist.normalized(p)
                if ctx in entries and entries[ctx] != dist:
                    raise ConfigError(f"script assigns two continuations to context {ctx}")
                entries[ctx] = dist
        return cls(vocab, entries, fallback)
