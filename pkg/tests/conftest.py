import numpy as np
import pytest

from scpgan.data import build_manifest, synth_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """8 train / 2 test clips of 1 s; shared read-only by the slower tests."""
    root = tmp_path_factory.mktemp("corpus")
    synth_corpus(root, n_clips=8, duration_s=1.0, seed=0)
    manifest = build_manifest(root, seed=0)
    return manifest


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
