import numpy as np
import pytest

from mvrank.pipeline.benchmark import prepare
from mvrank.pipeline.synth import SynthSpec, synth_generate

SMALL_SPEC = SynthSpec(V=3, N=60, dims=(5, 6, 4), latent_dim=3, noise_sigma=0.3, seed=11)


@pytest.fixture(scope="session")
def small_prep():
    """Pairs from a 60-sample synthetic set; cheap enough to train on."""
    return prepare(synth_generate(SMALL_SPEC), test_fraction=0.25, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
