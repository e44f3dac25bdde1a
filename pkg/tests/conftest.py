import itertools
import os

import numpy as np
import pytest

from metavmc.ising import MaxCutTask

_ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name} {detail}".rstrip())


def pytest_collection_modifyitems(config, items):
    if os.environ.get("METAVMC_FULL_SCALE") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; set METAVMC_FULL_SCALE=1")
    for item in items:
        if "full_scale" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def graph(n, edges):
    J = np.zeros((n, n))
    for i, j in edges:
        J[i, j] = J[j, i] = 1
    return MaxCutTask(J)


@pytest.fixture
def k3():
    return graph(3, [(0, 1), (1, 2), (0, 2)])


def enumerate_spins(n):
    """Independent enumeration: row for basis label x has s_i = 1 - 2 * bit_i(x)."""
    return np.array([[1 - 2 * ((x >> i) & 1) for i in range(n)] for x in range(2**n)], dtype=float)


def naive_energy(J, s):
    n = len(s)
    return sum(J[i][j] * s[i] * s[j] for i in range(n) for j in range(i + 1, n))


def naive_maxcut(J):
    n = J.shape[0]
    best = 0
    for bits in itertools.product((1, -1), repeat=n):
        cut = sum(J[i, j] for i in range(n) for j in range(i + 1, n) if bits[i] != bits[j])
        best = max(best, cut)
    return int(best)
