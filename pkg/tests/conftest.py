import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from dragonet.model import ModelConfig  # noqa: E402
from dragonet.taxonomy import load_taxonomy, parse_taxonomy  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy()


@pytest.fixture
def toy_taxonomy():
    return parse_taxonomy("A\ta1\nA\ta2\nB\tb1\n")


@pytest.fixture
def small_config():
    return ModelConfig(
        vocab_size=12,
        macro_count=3,
        micro_count=5,
        embed_dim=8,
        num_heads=2,
        num_layers=1,
        ffn_hidden=16,
        fusion_hidden=16,
        max_len=4,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
