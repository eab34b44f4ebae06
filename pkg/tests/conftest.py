import numpy as np
import pytest

from msformer.config import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    return ModelConfig(
        window_len=8, input_dim=3, embed_dim=8, heads=2, lambda_schedule=(2, 2, 2, 1), c1=2, c2=4
    )


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    skipped = terminalreporter.stats.get("skipped", [])
    lines = list(test_acceptance.RESULTS)
    for rep in skipped:
        if "test_acceptance" in rep.nodeid:
            lines.append(f"[SKIP] {rep.nodeid.split('::')[-1]}: {rep.longrepr[2]}")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
