"""Self-speculative biased decoding for streaming re-translation."""

from .core import ProbDist, Vocab, canonical_argmax, lcp, logits_to_probs
from .decoder import (
    DecodeConfig,
    MaskMode,
    PromptTemplate,
    SessionState,
    UpdateResult,
    VerificationResult,
    ar_decode,
    bias_distribution,
    display_view,
    ssbd_update,
    trim_draft_mask_k,
    verify_draft,
)
from .metrics import (
    acceptance_stats,
    efficiency_stats,
    emit_report,
    erasure,
    flicker_stats,
    normalized_erasure,
)
from .stream import SessionTrace, StreamUpdate, lag_k_updates, load_transcript, run_session

__version__ = "0.1.0"
