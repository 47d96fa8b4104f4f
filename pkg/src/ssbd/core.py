"""Token, vocabulary and probability primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidTokenError, MalformedLogitsError

TokenId = int
TokenSeq = tuple[int, ...]

PROB_TOL = 1e-9

EOS = "<eos>"
UNK = "<unk>"
INST = "<inst>"
SEP = "<sep>"
SPECIALS = (EOS, UNK, INST, SEP)


@dataclass(frozen=True)
class Vocab:
    """Closed token inventory with a distinguished end-of-sequence id.

    ``tokens`` is an optional id -> string table used for word-level
    encoding and display.
    """

    size: int
    eos_id: int
    tokens: Optional[tuple[str, ...]] = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.size <= 0:
            raise ConfigError(f"vocab size must be positive, got {self.size}")
        if not 0 <= self.eos_id < self.size:
            raise ConfigError(f"eos_id {self.eos_id} outside [0, {self.size})")
        if self.tokens is not None:
            tokens = tuple(self.tokens)
            if len(tokens) != self.size:
                raise ConfigError(
                    f"token table has {len(tokens)} entries, vocab size is {self.size}"
                )
            if len(set(tokens)) != len(tokens):
                raise ConfigError("token table contains duplicate strings")
            object.__setattr__(self, "tokens", tokens)
            object.__setattr__(self, "_index", {s: i for i, s in enumerate(tokens)})

    @classmethod
    def build(cls, words: Iterable[str]) -> "Vocab":
        """Word-level vocab: the special tokens first, then words in first-seen order."""
        table = list(SPECIALS)
        seen = set(table)
        for w in words:
            if w not in seen:
                seen.add(w)
                table.append(w)
        return cls(size=len(table), eos_id=0, tokens=tuple(table))

    def id_of(self, word: str) -> Optional[int]:
        if self._index is None:
            return None
        return self._index.get(word)

    def encode(self, text: str) -> TokenSeq:
        if self.tokens is None:
            raise ConfigError("vocab has no string table; cannot encode text")
        unk = self.id_of(UNK)
        ids = []
        for w in text.split():
            i = self.id_of(w)
            if i is None:
                if unk is None:
                    raise InvalidTokenError(f"word {w!r} not in vocab")
                i = unk
            ids.append(i)
        return tuple(ids)

    def decode(self, ids: Sequence[int]) -> str:
        if self.tokens is None:
            return " ".join(str(i) for i in ids)
        return " ".join(self.tokens[i] for i in ids)

    def to_json(self) -> dict:
        doc = {"size": self.size, "eos_id": self.eos_id}
        if self.tokens is not None:
            doc["tokens"] = list(self.tokens)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Vocab":
        tokens = doc.get("tokens")
        return cls(
            size=int(doc["size"]),
            eos_id=int(doc["eos_id"]),
            tokens=tuple(tokens) if tokens is not None else None,
        )


def check_seq(seq: Sequence[int], vocab: Vocab, allow_eos: bool = True) -> TokenSeq:
    """Validate ``seq`` against ``vocab`` and return it as a tuple."""
    out = tuple(int(t) for t in seq)
    for pos, t in enumerate(out):
        if not 0 <= t < vocab.size:
            raise InvalidTokenError(f"token id {t} at position {pos} outside [0, {vocab.size})")
        if t == vocab.eos_id and (not allow_eos or pos != len(out) - 1):
            raise InvalidTokenError(f"eos id at position {pos} of a {len(out)}-token sequence")
    return out


class ProbDist:
    """Immutable, normalized next-token distribution."""

    __slots__ = ("probs",)

    def __init__(self, probs, validate: bool = True):
        arr = np.array(probs, dtype=np.float64)
        if validate:
            if arr.ndim != 1 or arr.size == 0:
                raise MalformedLogitsError("distribution must be a non-empty vector")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise MalformedLogitsError("distribution has negative or non-finite entries")
            total = math.fsum(arr)
            if abs(total - 1.0) > PROB_TOL:
                raise MalformedLogitsError(f"distribution sums to {total!r}, not 1")
        arr.flags.writeable = False
        self.probs = arr

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, i: int) -> float:
        return float(self.probs[i])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbDist):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        return f"ProbDist({np.array2string(self.probs, precision=4)})"

    @classmethod
    def one_hot(cls, size: int, index: int) -> "ProbDist":
        p = np.zeros(size)
        p[index] = 1.0
        return cls(p, validate=False)

    @classmethod
    def uniform(cls, size: int) -> "ProbDist":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def normalized(cls, weights) -> "ProbDist":
        """Scale non-negative weights to sum to one."""
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if not np.isfinite(total) or total <= 0 or np.any(w < 0):
            raise MalformedLogitsError("weights must be non-negative with a positive sum")
        return cls(w / total)

    def tolist(self) -> list[float]:
        return self.probs.tolist()


def lcp(a: Sequence, b: Sequence) -> int:
    """Length of the longest common prefix of ``a`` and ``b``."""
    n = min(len(a), len(b))
    for i in range(n):
        if a[i] != b[i]:
            return i
    return n


def canonical_argmax(p: ProbDist) -> TokenId:
    """Most probable token id; ties go to the lowest id."""
    # np.argmax returns the first maximal index.
    return int(np.argmax(p.probs))


def logits_to_probs(logits) -> ProbDist:
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise MalformedLogitsError("logits must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise MalformedLogitsError("logits contain non-finite values")
    z = np.exp(x - x.max())
    return ProbDist(z / z.sum())
