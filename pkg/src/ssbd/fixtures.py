"""Seeded desk-scale fixtures: random scripted table sessions and a toy n-gram translator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TokenSeq, Vocab
from .decoder import PromptTemplate
from .model.ngram import NgramModel, ngram_train
from .model.table import TableModel
from .stream import StreamUpdate, lag_k_updates

TOY_PAIRS = (
    ("the cat sleeps", "die katze schläft"),
    ("the dog sleeps", "der hund schläft"),
    ("the cat sees the dog", "die katze sieht den hund"),
    ("the dog sees the cat", "der hund sieht die katze"),
    ("a small cat sleeps on the mat", "eine kleine katze schläft auf der matte"),
    ("the big dog eats", "der große hund frisst"),
    ("the cat eats fish", "die katze frisst fisch"),
    ("the small dog sees a fish", "der kleine hund sieht einen fisch"),
    ("a dog sleeps on the mat", "ein hund schläft auf der matte"),
    ("the cat sees a big fish", "die katze sieht einen großen fisch"),
    ("the dog eats the fish", "der hund frisst den fisch"),
    ("a cat sees the mat", "eine katze sieht die matte"),
)

TOY_SOURCES = (
    "the small cat sees the big dog on the mat",
    "a dog eats fish on the mat",
    "the big cat sleeps",
    "the dog sees a small fish",
    "a cat eats the fish on the mat",
    "the small dog sleeps on the mat",
)


@dataclass(frozen=True)
class RandomSession:
    model: TableModel
    template: PromptTemplate
    updates: tuple[StreamUpdate, ...]
    ar_outputs: tuple[TokenSeq, ...]


def _peaked(rng: np.random.Generator, size: int, target: int, margin: float) -> np.ndarray:
    p = rng.dirichlet(np.full(size, 0.5))
    p[target] = p.max() + margin
    return p / p.sum()


def random_table_session(
    rng: np.random.Generator,
    session_id: str = "s0",
    n_updates: int | None = None,
    n_source: int = 6,
    n_target: int = 8,
    margin: float = 0.05,
    keep_prob: float = 0.6,
) -> RandomSession:
    """Random table model scripted over one lag-1 session.

    Each update's greedy output keeps a prefix of the previous output (all
    of it with probability ``keep_prob``) and appends 1-3 tokens. Every
    scripted context gets a random distribution whose argmax is unique by
    at least ``margin`` before renormalization.
    """
    if n_updates is None:
        n_updates = int(rng.integers(5, 11))
    words = [f"s{i}" for i in range(n_source)] + [f"t{i}" for i in range(n_target)]
    vocab = Vocab.build(words)
    src_ids = [vocab.id_of(f"s{i}") for i in range(n_source)]
    tgt_ids = [vocab.id_of(f"t{i}") for i in range(n_target)]
    template = PromptTemplate.for_vocab(vocab)

    sentence = [int(rng.choice(src_ids)) for _ in range(n_updates)]
    updates, outputs = [], []
    entries = {}
    prev: TokenSeq = ()
    for t in range(1, n_updates + 1):
        x = tuple(sentence[:t])
        if prev and rng.random() >= keep_prob:
            keep = int(rng.integers(0, len(prev)))
        else:
            keep = len(prev)
        grow = int(rng.integers(1, 4))
        y = prev[:keep] + tuple(int(rng.choice(tgt_ids)) for _ in range(grow))
        base = template(x)
        for i, target in enumerate(y + (vocab.eos_id,)):
            entries[base + y[:i]] = _peaked(rng, vocab.size, target, margin)
        updates.append(StreamUpdate(session_id, t, vocab.decode(x), x))
        outputs.append(y)
        prev = y
    return RandomSession(TableModel(vocab, entries), template, tuple(updates), tuple(outputs))


def toy_vocab() -> Vocab:
    words = []
    for src, tgt in TOY_PAIRS:
        words.extend(src.split())
        words.extend(tgt.split())
    for src in TOY_SOURCES:
        words.extend(src.split())
    return Vocab.build(words)


def toy_ngram(order: int = 4, alpha: float = 0.1) -> NgramModel:
    """N-gram 'translator' trained on ``<inst> src <sep> tgt <eos>`` sequences."""
    vocab = toy_vocab()
    template = PromptTemplate.for_vocab(vocab)
    corpus = [
        template(vocab.encode(src)) + vocab.encode(tgt) + (vocab.eos_id,)
        for src, tgt in TOY_PAIRS
    ]
    return ngram_train(corpus, order, alpha, vocab)


def toy_sessions(k: int = 3) -> list[list[StreamUpdate]]:
    return [
        lag_k_updates(src.split(), k, session_id=f"s{i:04d}")
        for i, src in enumerate(TOY_SOURCES)
    ]

