"""Acceptance gate; ``pytest`` prints one PASS/FAIL line per criterion at the end."""

import json
import subprocess
import sys
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest
import requests

from ssbd.cli import RunSpec, cmd_run
from ssbd.core import ProbDist, Vocab, lcp
from ssbd.decoder import DecodeConfig, PromptTemplate, bias_distribution, verify_draft
from ssbd.fixtures import TOY_SOURCES, random_table_session, toy_ngram, toy_sessions
from ssbd.metrics import acceptance_stats, erasure, flicker_stats, normalized_erasure
from ssbd.model import RemoteModel, TableModel, save_model
from ssbd.stream import StreamUpdate, run_session, strip_timing

BETA_GRID = [round(0.1 * i, 1) for i in range(11)]


@contextmanager
def within(seconds):
    t0 = time.perf_counter()
    yield
    elapsed = time.perf_counter() - t0
    assert elapsed < seconds, f"took {elapsed:.2f}s, budget {seconds}s"


def _random_sessions(n, seed0=0):
    return [random_table_session(np.random.default_rng(seed0 + i), session_id=f"r{i:03d}") for i in range(n)]


def _greedy(table: TableModel, ctx):
    """Argmax read straight off the table, lowest id on ties."""
    p = table.predict(ctx).probs
    return max(range(len(p)), key=lambda i: (p[i], -i))


@pytest.mark.criterion(1, "lossless at beta=0 on 60 argmax-unique random table sessions")
def test_lossless_speculation():
    with within(5):
        sessions = _random_sessions(60)
        for rs in sessions:
            assert 5 <= len(rs.updates) <= 10
            ar = run_session(rs.model, rs.updates, DecodeConfig(), "ar", rs.template)
            ss = run_session(rs.model, rs.updates, DecodeConfig(beta=0.0), "ssbd", rs.template)
            assert ar.outputs == list(rs.ar_outputs)
            assert ss.outputs == ar.outputs


@pytest.mark.criterion(2, "beta in {0.5, 1.0}: A/D = 100% and NE = 0 exactly")
def test_full_acceptance_boundary(caption_demo):
    with within(5):
        model, updates, _ = caption_demo
        fixtures = [(model, updates, None)]
        ngram = toy_ngram()
        fixtures += [(ngram, s, None) for s in toy_sessions()]
        fixtures += [(rs.model, rs.updates, rs.template) for rs in _random_sessions(10, seed0=500)]
        for beta in (0.5, 1.0):
            for lm, ups, tpl in fixtures:
                trace = run_session(lm, ups, DecodeConfig(beta=beta), "ssbd", tpl)
                acc = acceptance_stats(trace)
                assert acc.draft_total > 0
                assert acc.accepted_total == acc.draft_total
                assert acc.a_over_d == 1.0
                assert flicker_stats(trace).normalized_erasure == 0


@pytest.mark.criterion(3, "acceptance, NE and A/D move monotonically over the beta grid")
def test_beta_monotonicity():
    with within(30):
        # per update, with the draft and context held fixed
        for rs in _random_sessions(40, seed0=1000):
            lm = rs.model
            for upd, draft in zip(rs.updates[1:], rs.ar_outputs):
                base = rs.template(upd.input_tokens)
                dists = lm.forward(base + draft, len(base) - 1)
                accepted = [verify_draft(dists, draft, b).accepted for b in BETA_GRID]
                assert accepted == sorted(accepted)

        # aggregate over the toy translator sessions
        lm, sessions = toy_ngram(), toy_sessions()
        ne_curve, ad_curve = [], []
        for beta in BETA_GRID:
            traces = [run_session(lm, s, DecodeConfig(beta=beta)) for s in sessions]
            ne_curve.append(np.mean([flicker_stats(t).normalized_erasure for t in traces]))
            acc = sum((acceptance_stats(t) for t in traces[1:]), acceptance_stats(traces[0]))
            ad_curve.append(acc.a_over_d)
        assert all(a >= b for a, b in zip(ne_curve, ne_curve[1:])), ne_curve
        assert all(a <= b for a, b in zip(ad_curve, ad_curve[1:])), ad_curve
        assert ne_curve[0] > ne_curve[-1] == 0
        assert ad_curve[0] < ad_curve[-1] == 1.0


ENGINE_FIELDS = ("t", "input", "output", "accepted", "draft_len", "forwards",
                 "prefill_positions", "decode_steps", "truncated")


@pytest.mark.criterion(4, "display-only mask-k leaves engine traces bit-identical")
def test_display_only_invariance():
    with within(10):
        lm = toy_ngram()
        fixtures = [(lm, s, None) for s in toy_sessions()]
        fixtures += [(rs.model, rs.updates, rs.template) for rs in _random_sessions(10, seed0=2000)]
        for lm, ups, tpl in fixtures:
            plain = strip_timing(run_session(lm, ups, DecodeConfig(beta=0.2), "ssbd", tpl))
            for k in (3, 5):
                cfg = DecodeConfig(beta=0.2, mask_k=k, mask_mode="display_only")
                masked = strip_timing(run_session(lm, ups, cfg, "ssbd", tpl))
                for a, b in zip(plain.records, masked.records):
                    assert all(getattr(a, f) == getattr(b, f) for f in ENGINE_FIELDS)
                assert masked.totals == plain.totals
                assert acceptance_stats(masked) == acceptance_stats(plain)
                assert masked.records[-1].display_output == masked.records[-1].output
                assert any(a.display_output != b.display_output for a, b in zip(plain.records, masked.records))


def _final_flip_fixture():
    """Each update either extends the output or replaces its last token and extends."""
    vocab = Vocab.build(["s1", "s2", "s3", "s4", "a", "b", "c", "d", "e", "x", "y"])
    tpl = PromptTemplate.for_vocab(vocab)
    enc = vocab.encode
    stream = [
        ("s1", "a x"),
        ("s1 s2", "a y b"),
        ("s1 s2 s3", "a y b c"),
        ("s1 s2 s3 s4", "a y b d e"),
    ]
    model = TableModel.scripted(vocab, {tpl(enc(src)): enc(tgt) for src, tgt in stream})
    updates = [StreamUpdate("flip", t, src) for t, (src, _) in enumerate(stream, 1)]
    return model, updates, [enc(tgt) for _, tgt in stream]


@pytest.mark.criterion(5, "trim-draft mask_k=1 lifts A/D to 100% and lowers A/O")
def test_trim_draft_direction():
    with within(10):
        model, updates, outputs = _final_flip_fixture()
        for prev, curr in zip(outputs, outputs[1:]):
            assert lcp(prev, curr) >= len(prev) - 1
        plain = run_session(model, updates, DecodeConfig(beta=0.0))
        trim = run_session(model, updates, DecodeConfig(beta=0.0, mask_k=1, mask_mode="trim_draft"))
        assert plain.outputs == trim.outputs == outputs
        for r in trim.records[1:]:
            assert r.draft_len > 0 and r.accepted == r.draft_len
        p, q = acceptance_stats(plain), acceptance_stats(trim)
        assert p.a_over_d < 1.0 == q.a_over_d
        assert q.a_over_o < p.a_over_o


def _stable_fixture(g, n_updates=5):
    words = [f"s{i}" for i in range(n_updates)] + [f"t{i}" for i in range(g * n_updates)]
    vocab = Vocab.build(words)
    tpl = PromptTemplate.for_vocab(vocab)
    targets = vocab.encode(" ".join(f"t{i}" for i in range(g * n_updates)))
    inputs = [vocab.encode(" ".join(f"s{i}" for i in range(t))) for t in range(1, n_updates + 1)]
    script = {tpl(x): targets[: g * t] for t, x in enumerate(inputs, 1)}
    model = TableModel.scripted(vocab, script, peak=0.6)
    updates = [StreamUpdate("stable", t, vocab.decode(x), x) for t, x in enumerate(inputs, 1)]
    return model, tpl, updates


def _hand_replay(model: TableModel, tpl, updates, speculative: bool):
    """Replay a session token by token, tracking the cached token list by hand."""
    eos = model.vocab().eos_id
    cache: list[int] = []
    prev: list[int] = []
    counts = []
    for upd in updates:
        base = list(tpl(upd.input_tokens))
        out = []
        while True:
            tok = _greedy(model, base + out)
            if tok == eos:
                break
            out.append(tok)
        draft = prev if speculative else []
        accepted = lcp(draft, out)
        assert accepted == len(draft), "fixture must be prefix-stable"
        prompt = base + draft
        reused = min(lcp(cache, prompt), len(base) - 1)
        computed_first = len(prompt) - reused
        # one position picks a token in the batched call, then one step per remaining token + EOS
        steps_after = len(out) - accepted
        forwards = 1 + steps_after
        decode = 1 + steps_after
        prefill = computed_first - 1
        cache = base + out
        prev = out
        counts.append((forwards, prefill, decode, accepted, len(draft)))
    return counts


@pytest.mark.criterion(6, "step counters equal the hand-replayed closed form")
@pytest.mark.parametrize("g", [1, 2, 3])
def test_step_economy(g):
    with within(5):
        model, tpl, updates = _stable_fixture(g)
        ar = run_session(model, updates, DecodeConfig(), "ar", tpl)
        ss = run_session(model, updates, DecodeConfig(beta=0.0), "ssbd", tpl)
        got_ar = [(r.forwards, r.prefill_positions, r.decode_steps, r.accepted, r.draft_len) for r in ar.records]
        got_ss = [(r.forwards, r.prefill_positions, r.decode_steps, r.accepted, r.draft_len) for r in ss.records]
        assert got_ar == _hand_replay(model, tpl, updates, speculative=False)
        assert got_ss == _hand_replay(model, tpl, updates, speculative=True)
        for t, (a, s) in enumerate(zip(ar.records, ss.records), 1):
            assert a.forwards == len(a.output) + 1
            if t > 1:
                assert s.forwards == 1 + (g - 1) + 1
                # the cache keeps <inst> and the previous input; the new prompt differs after that
                r = 1 + len(updates[t - 2].input_tokens)
                L = len(tpl(updates[t - 1].input_tokens))
                assert a.prefill_positions == L - r - 1
                assert s.prefill_positions == L + len(ss.records[t - 2].output) - r - 1


@pytest.mark.criterion(7, "erasure and NE match exact oracles")
def test_metric_oracles():
    with within(5):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            a = list(rng.integers(0, 3, size=rng.integers(0, 9)))
            b = list(rng.integers(0, 3, size=rng.integers(0, 9)))
            deleted = 0
            while a[: len(a) - deleted] != b[: len(a) - deleted]:
                deleted += 1
            assert erasure(a, b) == deleted
        outputs = [[1, 2], [1, 3], [1, 3, 4]]
        assert Fraction(1, 3) == Fraction(sum(erasure(p, c) for p, c in zip([[]] + outputs, outputs)), 3)
        assert abs(normalized_erasure(outputs) - 1 / 3) <= 1e-12


@pytest.mark.criterion(8, "bias_distribution conforms to the convex mix on 1000 triples")
def test_bias_conformance():
    with within(2):
        rng = np.random.default_rng(88)
        for _ in range(1000):
            size = int(rng.integers(2, 64))
            p = ProbDist(rng.dirichlet(np.full(size, 0.3)))
            d = int(rng.integers(0, size))
            beta = float(rng.random())
            q = bias_distribution(p, d, beta).probs
            expected = [(1 - beta) * float(p.probs[i]) + (beta if i == d else 0.0) for i in range(size)]
            assert max(abs(float(x) - e) for x, e in zip(q, expected)) <= 1e-12
            assert abs(float(q.sum()) - 1.0) <= 1e-9


@pytest.fixture
def served_table(tmp_path):
    rng = np.random.default_rng(99)
    vocab = Vocab(size=40, eos_id=0)
    entries = {}
    for _ in range(200):
        ctx = tuple(int(x) for x in rng.integers(1, 40, size=rng.integers(1, 6)))
        entries[ctx] = ProbDist(rng.dirichlet(np.full(40, 0.5)))
    model = TableModel(vocab, entries)
    path = tmp_path / "table.json"
    save_model(model, path)
    proc = subprocess.Popen(
        [sys.executable, "-m", "ssbd.cli", "serve-mock", "--model", str(path), "--port", "0"],
        stdout=subprocess.PIPE, text=True,
    )
    try:
        url = proc.stdout.readline().split(" on ")[-1].strip()
        yield model, url, rng
    finally:
        proc.terminate()
        proc.wait(timeout=10)


@pytest.mark.criterion(9, "served model equals the local table row for row; bad requests get 400")
def test_wire_equivalence(served_table):
    model, url, rng = served_table
    with within(10):
        remote = RemoteModel(url, expected_vocab=model.vocab())
        contexts = list(model.entries)
        for i in range(100):
            if i % 2:
                prompt = list(contexts[int(rng.integers(len(contexts)))]) + [int(rng.integers(1, 40))]
            else:
                prompt = [int(x) for x in rng.integers(1, 40, size=rng.integers(1, 8))]
            start = int(rng.integers(0, len(prompt)))
            local_rows = model.forward(prompt, start)
            remote_rows = remote.forward(prompt, start)
            assert len(local_rows) == len(remote_rows) == len(prompt) - start
            for a, b in zip(local_rows, remote_rows):
                assert np.max(np.abs(a.probs - b.probs)) <= 1e-9

        bad = [
            b"not json",
            json.dumps({"tokens": [1, 2]}).encode(),
            json.dumps({"tokens": [1, "x"], "from_position": 0}).encode(),
            json.dumps({"tokens": [1, 99], "from_position": 0}).encode(),
            json.dumps({"tokens": [1, 2], "from_position": 5}).encode(),
            json.dumps({"tokens": [], "from_position": 0}).encode(),
        ]
        for body in bad:
            resp = requests.post(url + "/v1/forward", data=body, timeout=5)
            assert resp.status_code == 400, body
            assert "error" in resp.json()


@pytest.mark.criterion(10, "cmd_run twice with --no-timing gives byte-identical files")
def test_end_to_end_determinism(tmp_path):
    with within(10):
        model = tmp_path / "toy.json"
        save_model(toy_ngram(), model)
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("\n".join(TOY_SOURCES) + "\n", encoding="utf-8")
        outputs = []
        for run in ("a", "b"):
            spec = RunSpec(
                model=str(model), corpus=str(corpus), lag_k=2,
                config=DecodeConfig(beta=0.2, mask_k=1, mask_mode="trim_draft"),
                trace=str(tmp_path / f"trace_{run}.jsonl"),
                report=str(tmp_path / f"report_{run}.csv"),
                timing=False,
            )
            assert cmd_run(spec) == 0
            outputs.append(((tmp_path / f"trace_{run}.jsonl").read_bytes(), (tmp_path / f"report_{run}.csv").read_bytes()))
        assert outputs[0] == outputs[1]
        assert outputs[0][0] and outputs[0][1].count(b"\n") == len(TOY_SOURCES) + 2
