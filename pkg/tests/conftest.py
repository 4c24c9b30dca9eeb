import numpy as np
import pytest

from tevir.latent import MultiViewLatent, ViewWeights
from tevir.sequence import GeneratedSequence


def random_sequence(rng, H, P, D, task="reach"):
    views = tuple(f"v{i}" for i in range(P))
    return GeneratedSequence(rng.standard_normal((H, P, D)), views, task)


def random_latent(rng, views, D):
    return MultiViewLatent(views, rng.standard_normal((len(views), D)))


def random_weights(rng, views):
    return ViewWeights(views, rng.uniform(0.1, 1.0, len(views)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
