import os

import hypothesis
import numpy as np
import pytest

from causalnn import causal_models as cm
from causalnn.synth_dgp import DgpConfig, simulate

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_data():
    return simulate(DgpConfig(n=300, seed=3))


@pytest.fixture(scope="session")
def quick_models(small_data):
    """One briefly trained model of every kind, shared by read-only tests."""
    out = {}
    for kind in cm.KINDS:
        cfg = cm.default_config(kind, epochs=5, seed=1)
        out[kind] = cm.fit(kind, small_data, cfg)
    return out


ACCEPTANCE_LINES = []


def record_acceptance(label: str, ok: bool, detail: str = "") -> bool:
    """Store one acceptance verdict; printed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] {label}"
    if detail:
        line += f" :: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
