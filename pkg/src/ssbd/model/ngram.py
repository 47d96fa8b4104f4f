from __future__ import annotations

from collections import Counter, defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..core import ProbDist, Vocab, check_seq
from ..errors import ConfigError


class NgramModel:
    """Add-alpha smoothed n-gram model with backoff to shorter contexts.

    Counts are kept for every context length from 0 (unigram) up to
    ``order - 1``. Prediction uses the longest suffix of the context that
    was seen in training.
    """

    def __init__(
        self,
        vocab: Vocab,
        order: int,
        alpha: float,
        counts: Mapping[tuple[int, ...], Mapping[int, int]],
    ):
        if order < 1:
            raise ConfigError(f"order must be >= 1, got {order}")
        if not alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {alpha}")
        self._vocab = vocab
        self.order = order
        self.alpha = float(alpha)
        self.counts: dict[tuple[int, ...], np.ndarray] = {}
        for ctx, row in counts.items():
            ctx = tuple(int(t) for t in ctx)
            if len(ctx) >= order:
                raise ConfigError(f"context {ctx} longer than order - 1")
            vec = np.zeros(vocab.size)
            for tok, c in row.items():
                vec[int(tok)] = c
            self.counts[ctx] = vec
        if () not in self.counts:
            self.counts[()] = np.zeros(vocab.size)
        self._cache: dict[tuple[int, ...], ProbDist] = {}

    def vocab(self) -> Vocab:
        return self._vocab

    def predict(self, context: Sequence[int]) -> ProbDist:
        ctx = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        while ctx not in self.counts:
            ctx = ctx[1:]
        hit = self._cache.get(ctx)
        if hit is None:
            row = self.counts[ctx]
            hit = ProbDist((row + self.alpha) / (row.sum() + self.alpha * self._vocab.size))
            self._cache[ctx] = hit
        return hit

    def forward(self, prompt: Sequence[int], from_position: int) -> list[ProbDist]:
        prompt = check_seq(prompt, self._vocab)
        if not 0 <= from_position <= len(prompt):
            raise ConfigError(f"from_position {from_position} outside [0, {len(prompt)}]")
        return [self.predict(prompt[: j + 1]) for j in range(from_position, len(prompt))]

    def count_rows(self) -> dict[tuple[int, ...], dict[int, int]]:
        return {
            ctx: {int(i): int(row[i]) for i in np.flatnonzero(row)}
            for ctx, row in self.counts.items()
        }


def ngram_train(
    corpus: Iterable[Sequence[int]], order: int, alpha: float, vocab: Vocab
) -> NgramModel:
    """Count every window of length 1..order in every corpus sequence."""
    corpus = [check_seq(s, vocab) for s in corpus]
    if not corpus or not any(corpus):
        raise ConfigError("cannot train on an empty corpus")
    if order < 1:
        raise ConfigError(f"order must be >= 1, got {order}")
    counts: dict[tuple[int, ...], Counter] = defaultdict(Counter)
    for seq in corpus:
        for end in range(len(seq)):
            for n in range(1, order + 1):
                start = end - n + 1
                if start < 0:
                    break
                counts[seq[start:end]][seq[end]] += 1
    return NgramModel(vocab, order, alpha, counts)
