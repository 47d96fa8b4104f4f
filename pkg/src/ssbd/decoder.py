"""Greedy autoregressive decoding and self-speculative biased decoding.

Both paradigms drive the same :class:`~ssbd.model.ledger.CacheLedger`, so
their step counters are directly comparable.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import INST, SEP, ProbDist, TokenSeq, Vocab, canonical_argmax, check_seq
from .errors import ConfigError
from .model.base import LanguageModel
from .model.ledger import CacheLedger, StepCounts

log = logging.getLogger(__name__)


class MaskMode(str, enum.Enum):
    NONE = "none"
    TRIM_DRAFT = "trim_draft"
    DISPLAY_ONLY = "display_only"


@dataclass(frozen=True)
class DecodeConfig:
    beta: float = 0.0
    max_new_tokens: Optional[int] = None
    mask_k: int = 0
    mask_mode: MaskMode = MaskMode.NONE

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.max_new_tokens is not None and self.max_new_tokens < 1:
            raise ConfigError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        if self.mask_k < 0:
            raise ConfigError(f"mask_k must be >= 0, got {self.mask_k}")
        object.__setattr__(self, "mask_mode", MaskMode(self.mask_mode))

    def budget(self, input_len: int) -> int:
        """Output length cap for an input of ``input_len`` tokens."""
        if self.max_new_tokens is not None:
            return self.max_new_tokens
        return 4 * input_len + 16


@dataclass(frozen=True)
class PromptTemplate:
    """``prefix + input + separator``; the draft always follows the separator."""

    prefix: TokenSeq = ()
    separator: TokenSeq = ()

    def __call__(self, input_tokens: Sequence[int]) -> TokenSeq:
        return tuple(self.prefix) + tuple(input_tokens) + tuple(self.separator)

    @classmethod
    def for_vocab(cls, vocab: Vocab) -> "PromptTemplate":
        """Use the vocab's ``<inst>``/``<sep>`` tokens when it has them."""
        inst, sep = vocab.id_of(INST), vocab.id_of(SEP)
        return cls(
            prefix=(inst,) if inst is not None else (),
            separator=(sep,) if sep is not None else (),
        )


@dataclass
class SessionState:
    template: PromptTemplate
    config: DecodeConfig = field(default_factory=DecodeConfig)
    input: TokenSeq = ()
    prev_output: TokenSeq = ()
    ledger: CacheLedger = field(default_factory=CacheLedger)
    # tokens backing the first ledger.validated_len cache entries
    cache_tokens: TokenSeq = ()


@dataclass(frozen=True)
class Decision:
    draft_token: int
    model_argmax: int
    accepted: bool


@dataclass(frozen=True)
class VerificationResult:
    accepted: int
    draft_len: int
    corrected_token: Optional[int] = None
    decisions: tuple[Decision, ...] = ()
    bonus_token: Optional[int] = None


NO_DRAFT = VerificationResult(accepted=0, draft_len=0)


@dataclass(frozen=True)
class UpdateResult:
    output: TokenSeq
    display_output: TokenSeq
    verification: VerificationResult
    steps: StepCounts
    truncated: bool = False


def bias_distribution(p: ProbDist, draft_token: int, beta: float) -> ProbDist:
    """Convex mix of ``p`` and a one-hot on the draft token."""
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must be in [0, 1], got {beta}")
    if not 0 <= draft_token < len(p):
        raise ConfigError(f"draft token {draft_token} outside the distribution")
    q = (1.0 - beta) * p.probs
    q[draft_token] += beta
    return ProbDist(q)


def verify_draft(dists: Sequence[ProbDist], draft: Sequence[int], beta: float) -> VerificationResult:
    """Accept the longest draft prefix that the biased model agrees with.

    ``dists[i]`` must be the distribution over the token at draft position
    ``i``. A draft token is accepted when it is a maximizer of the biased
    distribution (ties favour the draft). The first rejected position yields
    the corrected token; if the whole draft passes and one more row is
    available, its unbiased argmax is the bonus token.
    """
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must be in [0, 1], got {beta}")
    if len(dists) < len(draft):
        raise ConfigError(f"{len(dists)} distributions for a {len(draft)}-token draft")
    decisions = []
    for i, tok in enumerate(draft):
        biased = bias_distribution(dists[i], tok, beta)
        ok = bool(biased.probs[tok] >= biased.probs.max())
        decisions.append(Decision(tok, canonical_argmax(dists[i]), ok))
        if not ok:
            return VerificationResult(
                accepted=i,
                draft_len=len(draft),
                corrected_token=canonical_argmax(biased),
                decisions=tuple(decisions),
            )
    bonus = canonical_argmax(dists[len(draft)]) if len(dists) > len(draft) else None
    return VerificationResult(len(draft), len(draft), None, tuple(decisions), bonus)


def trim_draft_mask_k(draft: Sequence[int], k: int) -> TokenSeq:
    draft = tuple(draft)
    return draft[: max(len(draft) - k, 0)]


def display_view(output: Sequence[int], k: int, is_final: bool) -> TokenSeq:
    output = tuple(output)
    if is_final:
        return output
    return output[: max(len(output) - k, 0)]


def _display(state: SessionState, output: TokenSeq, is_final: bool) -> TokenSeq:
    cfg = state.config
    if cfg.mask_mode is MaskMode.NONE or cfg.mask_k == 0:
        return output
    return display_view(output, cfg.mask_k, is_final)


def _prefill(lm: LanguageModel, state: SessionState, prompt: TokenSeq, need_from: int):
    """Batched forward over ``prompt`` reusing whatever cache survives.

    Returns the rows for positions ``need_from..`` and the number of
    positions the call computed. Positions below ``need_from`` that are
    still cached are skipped; the rest are recomputed.
    """
    reusable = state.ledger.reuse_prefix(state.cache_tokens, prompt)
    start = min(reusable, need_from)
    rows = lm.forward(prompt, start)
    return rows[need_from - start:], len(prompt) - start


def _greedy_continue(lm: LanguageModel, state: SessionState, output: list, budget: int) -> bool:
    """Step-wise greedy decoding; ``output[-1]`` is not yet in the cache.

    Appends to ``output`` in place and returns True if stopped by the budget.
    """
    eos = lm.vocab().eos_id
    ledger = state.ledger
    while len(output) < budget:
        seq = state.cache_tokens + (output[-1],)
        (row,) = lm.forward(seq, len(state.cache_tokens))
        ledger.charge(computed=1, generated=1, prompt_len=len(seq))
        state.cache_tokens = seq
        tok = canonical_argmax(row)
        if tok == eos:
            return False
        output.append(tok)
    return True


def _ar_core(lm: LanguageModel, state: SessionState, input_tokens: TokenSeq) -> tuple[TokenSeq, bool]:
    eos = lm.vocab().eos_id
    budget = state.config.budget(len(input_tokens))
    prompt = state.template(input_tokens)
    (row,), computed = _prefill(lm, state, prompt, len(prompt) - 1)
    state.ledger.charge(computed=computed, generated=1, prompt_len=len(prompt))
    state.cache_tokens = prompt
    first = canonical_argmax(row)
    if first == eos:
        return (), False
    output = [first]
    truncated = _greedy_continue(lm, state, output, budget)
    return tuple(output), truncated


def _checked_input(lm: LanguageModel, tokens: Sequence[int]) -> TokenSeq:
    tokens = check_seq(tokens, lm.vocab(), allow_eos=False)
    if not tokens:
        raise ConfigError("input must be non-empty")
    return tokens


def ar_decode(lm: LanguageModel, state: SessionState, is_final: bool = False) -> UpdateResult:
    """Greedy decoding of ``state.input`` from scratch (no draft)."""
    before = state.ledger.snapshot()
    t0 = time.perf_counter_ns()
    input_tokens = _checked_input(lm, state.input)
    output, truncated = _ar_core(lm, state, input_tokens)
    state.ledger.wall_nanos += time.perf_counter_ns() - t0
    state.prev_output = output
    if truncated:
        log.warning("output truncated at %d tokens", len(output))
    return UpdateResult(
        output=output,
        display_output=_display(state, output, is_final),
        verification=NO_DRAFT,
        steps=state.ledger.snapshot() - before,
        truncated=truncated,
    )


def ssbd_update(
    lm: LanguageModel,
    state: SessionState,
    new_input: Sequence[int],
    is_final: bool = False,
) -> UpdateResult:
    """Decode ``new_input`` using the previous output as a draft."""
    before = state.ledger.snapshot()
    t0 = time.perf_counter_ns()
    new_input = _checked_input(lm, new_input)
    cfg = state.config
    eos = lm.vocab().eos_id
    budget = cfg.budget(len(new_input))

    draft = state.prev_output
    if cfg.mask_mode is MaskMode.TRIM_DRAFT:
        draft = trim_draft_mask_k(draft, cfg.mask_k)
    draft = draft[:budget]
    state.input = new_input

    if not draft:
        output, truncated = _ar_core(lm, state, new_input)
        verification = NO_DRAFT
    else:
        base = state.template(new_input)
        prompt = base + draft
        rows, computed = _prefill(lm, state, prompt, len(base) - 1)
        verification = verify_draft(rows, draft, cfg.beta)
        k = verification.accepted
        if k < len(draft):
            nxt = verification.corrected_token
        elif k < budget:
            nxt = verification.bonus_token
        else:
            nxt = None
        state.ledger.charge(
            computed=computed, generated=int(nxt is not None), prompt_len=len(prompt)
        )
        # everything after the accepted draft prefix is stale
        state.ledger.truncate(len(base) + k)
        state.cache_tokens = prompt[: len(base) + k]

        output = list(draft[:k])
        if nxt is None:
            truncated = True
        elif nxt == eos:
            truncated = False
        else:
            output.append(nxt)
            truncated = _greedy_continue(lm, state, output, budget)
        output = tuple(output)

    state.ledger.wall_nanos += time.perf_counter_ns() - t0
    state.prev_output = output
    if truncated:
        log.warning("output truncated at %d tokens", len(output))
    return UpdateResult(
        output=output,
        display_output=_display(state, output, is_final),
        verification=verification,
        steps=state.ledger.snapshot() - before,
        truncated=truncated,
    )
