import sys

import numpy as np
import pytest

from tablere import kernels
from tablere.tokenizer import Vocab


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["python", "cython"])
def backend(request, monkeypatch):
    """Run a test once per LSTM kernel backend."""
    if request.param == "cython":
        if not kernels.compiled_available:
            pytest.skip("compiled kernel not built")
        from tablere.kernels import _lstm_ext as mod
    else:
        from tablere.kernels import _lstm_py as mod
    monkeypatch.setattr(kernels, "lstm_forward", mod.lstm_forward)
    monkeypatch.setattr(kernels, "lstm_backward", mod.lstm_backward)
    return request.param


# 20 entries: pad, unk, and 18 crafted pieces
CRAFTED_TOKENS = [
    "[PAD]", "[UNK]", "play", "##ing", "##ed", "##er", "un", "##able", "##s",
    "read", "re", "##read", "a", "##b", "##c", "abc", "name", "of", "the", "1",
]


@pytest.fixture
def crafted_vocab():
    return Vocab(CRAFTED_TOKENS)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
