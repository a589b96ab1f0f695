import numpy as np
import pytest

from blockris.channel_model import SystemDims, generate_channels, random_geometry

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def small_channels():
    """Factory for a random small channel realization."""

    def make(seed=0, K=2, M=2, Nt=4, Nr=2, Ni=4, p_block=0.0, k_factor=5.0):
        rng = np.random.default_rng(seed)
        dims = SystemDims(K=K, M=M, Nt=Nt, Nr=Nr, Ni=Ni)
        geo = random_geometry(dims, 100.0, rng)
        return generate_channels(dims, geo, k_factor, p_block, rng), rng

    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
