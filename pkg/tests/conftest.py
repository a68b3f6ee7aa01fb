from __future__ import annotations

import numpy as np
import pytest

from rwr import ColumnTable, RngStream, TimeVaryingSpec, simulate_dataset

TV = TimeVaryingSpec("y", "a1", "a2", ("c1",), ("c2",))


def tv_table(seed: int = 1, n: int = 500, gamma: float = 0.3, theta: float = 0.2) -> ColumnTable:
    t = simulate_dataset(gamma, theta, n, RngStream(seed, 0, 0), include_latent=False)
    return t


def replace_column(table: ColumnTable, name: str, values) -> ColumnTable:
    return ColumnTable([(c, values if c == name else table[c]) for c in table.names])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tv_spec():
    return TV


# Filled by tests/test_acceptance.py; echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
