import logging

import numpy as np
import pytest

from ssbd.core import Vocab
from ssbd.decoder import PromptTemplate
from ssbd.model import TableModel
from ssbd.stream import StreamUpdate


@pytest.fixture(autouse=True)
def _quiet_truncation_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="ssbd")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CAPTION_STREAM = (
    ("This is", "C'est"),
    ("This is an example", "C'est un example"),
    ("This is an example of self-speculative", "C'est un example d'auto-spéculation"),
    (
        "This is an example of self-speculative decoding.",
        "C'est un example de décodage auto-spéculatif.",
    ),
)


@pytest.fixture
def caption_demo():
    """Scripted model reproducing the four-update live-caption example."""
    words = []
    for src, tgt in CAPTION_STREAM:
        words += src.split() + tgt.split()
    vocab = Vocab.build(words)
    template = PromptTemplate.for_vocab(vocab)
    script = {template(vocab.encode(src)): vocab.encode(tgt) for src, tgt in CAPTION_STREAM}
    model = TableModel.scripted(vocab, script, peak=0.9)
    updates = [StreamUpdate("demo", t, src) for t, (src, _) in enumerate(CAPTION_STREAM, 1)]
    return model, updates, vocab


_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, name): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, name = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        # parametrized criteria pass only if every case passes
        failed = not report.passed or _CRITERIA.get(n, ("", "PASS"))[1] == "FAIL"
        _CRITERIA[n] = (name, "FAIL" if failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        name, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}  {name}")
