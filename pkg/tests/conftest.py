"""Shared fixtures and the acceptance reporting hook.

Acceptance tests record one verdict per criterion through the ``criterion``
fixture; the terminal summary prints one PASS/FAIL line for each recorded
criterion regardless of output capturing.
"""
from __future__ import annotations

import numpy as np
import pytest

from relate import SyntheticSpec, TrainConfig, generate_synthetic_kg

_VERDICTS: dict[int, tuple[bool, str]] = {}


def _check(number: int, passed, detail: str = "") -> None:
    passed = bool(passed)
    _VERDICTS[number] = (passed, detail)
    assert passed, f"criterion {number}: {detail}"


@pytest.fixture
def criterion():
    """Callable (number, passed, detail); records then asserts."""
    return _check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_VERDICTS):
        passed, detail = _VERDICTS[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")


# Shared desk-scale dataset: 200 entities, ~1000 facts, 80/10/10.
FAMILY_SEED = 0

# Training configuration used by the desk-scale learning and robustness
# acceptance runs; tuned on this dataset family.
DESK_CONFIG = TrainConfig(
    dim=64,
    lr=0.15,
    margin=9.0,
    adv_temperature=1.5,
    reciprocal=True,
    max_steps=2000,
    valid_interval=200,
)


@pytest.fixture(scope="session")
def family_kg():
    return generate_synthetic_kg(SyntheticSpec(), FAMILY_SEED)


@pytest.fixture(scope="session")
def small_kg():
    """A quick-to-train graph for plumbing tests."""
    return generate_synthetic_kg(SyntheticSpec(entities=48), seed=5)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
