"""Command-line entry point: ``ssbd run|compare|lagk|serve-mock|fixture|train-ngram``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .decoder import DecodeConfig, MaskMode, PromptTemplate
from .errors import SSBDError
from .metrics import emit_report, report_rows
from .model import load_model, ngram_train, save_model
from .model.base import LanguageModel
from .model.remote import RemoteModel
from .model.table import TableModel
from .stream import (
    SessionTrace,
    StreamUpdate,
    lag_k_updates,
    load_transcript,
    run_session,
    strip_timing,
    transcript_lines,
    write_trace,
)

log = logging.getLogger("ssbd")


@dataclass
class RunSpec:
    model: str
    transcript: Optional[str] = None
    corpus: Optional[str] = None
    lag_k: int = 3
    paradigm: str = "ssbd"
    config: DecodeConfig = field(default_factory=DecodeConfig)
    betas: tuple[float, ...] = ()
    trace: Optional[str] = None
    report: Optional[str] = None
    jobs: int = 1
    timing: bool = True


def _unit_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"beta must be in [0, 1], got {value}")
    return value


def _beta_grid(text: str) -> tuple[float, ...]:
    return tuple(sorted({_unit_float(v) for v in text.split(",") if v.strip()}))


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def open_model(source: str) -> LanguageModel:
    if source.startswith(("http://", "https://")):
        return RemoteModel(source)
    return load_model(source)


def load_sessions(spec: RunSpec) -> list[list[StreamUpdate]]:
    if spec.transcript is not None:
        return load_transcript(spec.transcript)
    return corpus_sessions(spec.corpus, spec.lag_k)


def corpus_sessions(path, k: int) -> list[list[StreamUpdate]]:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    sentences = [ln for ln in lines if ln]
    if not sentences:
        raise SSBDError(f"{path}: corpus has no sentences")
    return [lag_k_updates(s.split(), k, session_id=f"s{i:04d}") for i, s in enumerate(sentences)]


def run_all(
    lm: LanguageModel,
    sessions: Sequence[Sequence[StreamUpdate]],
    config: DecodeConfig,
    paradigm: str,
    jobs: int = 1,
    timing: bool = True,
) -> list[SessionTrace]:
    """Run every session; results are ordered by session id whatever ``jobs`` is."""
    template = PromptTemplate.for_vocab(lm.vocab())

    def one(updates):
        return run_session(lm, updates, config, paradigm, template)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(one, sessions))
    else:
        traces = [one(s) for s in sessions]
    if not timing:
        traces = [strip_timing(t) for t in traces]
    return sorted(traces, key=lambda t: t.session_id)


def cmd_run(spec: RunSpec) -> int:
    lm = open_model(spec.model)
    sessions = load_sessions(spec)
    traces = run_all(lm, sessions, spec.config, spec.paradigm, spec.jobs, spec.timing)
    if spec.trace:
        write_trace(traces, spec.trace, lm.vocab())
    rows = report_rows(ssbd=traces) if spec.paradigm == "ssbd" else report_rows(ar=traces)
    if spec.report:
        emit_report(rows, spec.report)
    _print_summary(rows)
    return 0


def cmd_compare(spec: RunSpec) -> int:
    lm = open_model(spec.model)
    sessions = load_sessions(spec)
    base = spec.config
    ar_cfg = DecodeConfig(0.0, base.max_new_tokens, base.mask_k, base.mask_mode)
    ar = run_all(lm, sessions, ar_cfg, "ar", spec.jobs, spec.timing)
    all_traces = list(ar)
    rows = report_rows(ar=ar)
    for beta in spec.betas or (base.beta,):
        cfg = DecodeConfig(beta, base.max_new_tokens, base.mask_k, base.mask_mode)
        ssbd = run_all(lm, sessions, cfg, "ssbd", spec.jobs, spec.timing)
        all_traces.extend(ssbd)
        rows.extend(report_rows(ssbd=ssbd, ar=ar))
    if spec.trace:
        write_trace(all_traces, spec.trace, lm.vocab())
    if spec.report:
        emit_report(rows, spec.report)
    _print_summary(rows)
    return 0


def cmd_lagk(corpus: str, k: int, out: str) -> int:
    sessions = corpus_sessions(corpus, k)
    with open(out, "w", encoding="utf-8") as fh:
        for updates in sessions:
            for line in transcript_lines(updates):
                fh.write(line + "\n")
    log.info("wrote %d sessions to %s", len(sessions), out)
    return 0


def cmd_serve_mock(model: str, host: str, port: int, full_limit: int, top_k: int) -> int:
    from .server import MockServer

    lm = load_model(model)
    try:
        server = MockServer(lm, host, port, full_limit=full_limit, top_k=top_k)
    except OSError as exc:
        print(f"error: cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return 1
    print(f"serving {model} on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_fixture(seed: int, sessions: int, model_out: str, transcript_out: str) -> int:
    """Random scripted table model plus a matching lag-1 transcript.

    Sessions share one table; where two sessions script the same context the
    first one wins.
    """
    from .fixtures import random_table_session

    rng = np.random.default_rng(seed)
    entries, lines, vocab = {}, [], None
    for i in range(sessions):
        rs = random_table_session(rng, session_id=f"s{i:04d}")
        vocab = rs.model.vocab()
        for ctx, dist in rs.model.entries.items():
            entries.setdefault(ctx, dist)
        lines.extend(transcript_lines(rs.updates))
    save_model(TableModel(vocab, entries), model_out)
    Path(transcript_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_train_ngram(pairs: str, order: int, alpha: float, out: str) -> int:
    """Train on ``source<TAB>target`` lines as ``<inst> source <sep> target <eos>``."""
    from .core import Vocab

    rows = []
    for lineno, line in enumerate(Path(pairs).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise SSBDError(f"{pairs}:{lineno}: expected source<TAB>target")
        src, tgt = line.split("\t", 1)
        rows.append((src, tgt))
    vocab = Vocab.build(w for src, tgt in rows for w in (src + " " + tgt).split())
    template = PromptTemplate.for_vocab(vocab)
    corpus = [template(vocab.encode(s)) + vocab.encode(t) + (vocab.eos_id,) for s, t in rows]
    save_model(ngram_train(corpus, order, alpha, vocab), out)
    return 0


def _print_summary(rows) -> None:
    for row in rows:
        if row.session == "ALL":
            cells = dict(zip(("NE", "A/D", "A/O", "speedup"), (row.ne, row.a_over_d, row.a_over_o, row.step_speedup)))
            shown = " ".join(f"{k}={v:.4f}" for k, v in cells.items() if v is not None)
            beta = "ar" if row.beta is None else f"beta={row.beta:.2f}"
            print(f"{beta} mask={row.mask_mode}:{row.mask_k} {shown}")


def _add_run_args(p: argparse.ArgumentParser, compare: bool) -> None:
    p.add_argument("--model", required=True, help="model JSON file or http(s) URL of a backend")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--transcript", help="transcript JSONL")
    src.add_argument("--corpus", help="plain text, one sentence per line (see --lag-k)")
    p.add_argument("--lag-k", type=_positive_int, default=3)
    if not compare:
        p.add_argument("--paradigm", choices=("ar", "ssbd"), default="ssbd")
    p.add_argument("--beta", type=_unit_float, default=0.2)
    if compare:
        p.add_argument("--beta-grid", type=_beta_grid, help="comma-separated betas, e.g. 0,0.1,0.2")
    p.add_argument("--mask-k", type=_non_negative_int, default=0)
    p.add_argument("--display-only", action="store_true",
                   help="mask the last --mask-k tokens in the display only, keep them in the draft")
    p.add_argument("--max-new-tokens", type=_positive_int)
    p.add_argument("--trace", help="write per-update trace JSONL here")
    p.add_argument("--report", help="write CSV report here")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--no-timing", action="store_true", help="zero wall-clock fields for reproducible files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssbd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_args(sub.add_parser("run", help="decode sessions with one paradigm"), compare=False)
    _add_run_args(sub.add_parser("compare", help="AR vs SSBD on identical inputs"), compare=True)

    p = sub.add_parser("lagk", help="turn a sentence-per-line corpus into a lag-k transcript")
    p.add_argument("--corpus", required=True)
    p.add_argument("-k", "--lag-k", dest="k", type=_positive_int, default=3)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve-mock", help="serve a model file over the JSON wire protocol")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--full-limit", type=int, default=4096,
                   help="send full distributions up to this vocab size, top-k above it")
    p.add_argument("--top-k", type=_positive_int, default=64)

    p = sub.add_parser("fixture", help="write a seeded random table model and transcript")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sessions", type=_positive_int, default=4)
    p.add_argument("--model-out", required=True)
    p.add_argument("--transcript-out", required=True)

    p = sub.add_parser("train-ngram", help="train an n-gram model on source<TAB>target pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--order", type=_positive_int, default=4)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--out", required=True)
    return parser


def spec_from_args(args: argparse.Namespace) -> RunSpec:
    if args.mask_k == 0:
        mode = MaskMode.NONE
    elif args.display_only:
        mode = MaskMode.DISPLAY_ONLY
    else:
        mode = MaskMode.TRIM_DRAFT
    return RunSpec(
        model=args.model,
        transcript=args.transcript,
        corpus=args.corpus,
        lag_k=args.lag_k,
        paradigm=getattr(args, "paradigm", "ssbd"),
        config=DecodeConfig(args.beta, args.max_new_tokens, args.mask_k, mode),
        betas=getattr(args, "beta_grid", None) or (),
        trace=args.trace,
        report=args.report,
        jobs=args.jobs,
        timing=not args.no_timing,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SSBD_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(spec_from_args(args))
        if args.command == "compare":
            return cmd_compare(spec_from_args(args))
        if args.command == "lagk":
            return cmd_lagk(args.corpus, args.k, args.out)
        if args.command == "serve-mock":
            return cmd_serve_mock(args.model, args.host, args.port, args.full_limit, args.top_k)
        if args.command == "fixture":
            return cmd_fixture(args.seed, args.sessions, args.model_out, args.transcript_out)
        if args.command == "train-ngram":
            return cmd_train_ngram(args.pairs, args.order, args.alpha, args.out)
    except (SSBDError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
