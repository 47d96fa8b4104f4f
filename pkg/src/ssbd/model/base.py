from __future__ import annotations

from typing import Protocol, Sequence, runtime_checkable

from ..core import ProbDist, Vocab


@runtime_checkable
class LanguageModel(Protocol):
    """Anything that can score a prompt.

    ``forward(prompt, from_position)`` returns one distribution per position
    ``j`` in ``[from_position, len(prompt))``; row ``j`` is conditioned on
    ``prompt[:j + 1]`` and predicts the token at ``j + 1``. Implementations
    must be deterministic.
    """

    def vocab(self) -> Vocab: ...

    def forward(self, prompt: Sequence[int], from_position: int) -> list[ProbDist]: ...
