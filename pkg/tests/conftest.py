"""Shared fixtures: named channels and seeded random corpora."""

import numpy as np
import pytest

from mdcc.channel import Channel, bec, bsc, identity_channel


def random_channel(rng, k=None, m=None, floor=0.0):
    k = k or int(rng.integers(2, 5))
    m = m or int(rng.integers(2, 5))
    W = rng.dirichlet(np.ones(m), size=k)
    if floor:
        W = np.clip(W, floor, None)
        W /= W.sum(axis=1, keepdims=True)
    return Channel(W)


def channel_corpus(count, seed, max_k=4, max_m=4, floor=1e-3):
    rng = np.random.default_rng(seed)
    return [random_channel(rng, int(rng.integers(2, max_k + 1)), int(rng.integers(2, max_m + 1)), floor)
            for _ in range(count)]


def duplicated_row_channel():
    return Channel([[0.9, 0.1], [0.9, 0.1], [0.1, 0.9]])


@pytest.fixture
def W_bsc():
    return bsc(0.1)


@pytest.fixture
def W_bec():
    return bec(0.5)


@pytest.fixture
def W_id3():
    return identity_channel(3)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
