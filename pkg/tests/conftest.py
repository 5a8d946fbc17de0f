import numpy as np
import pytest

from steincov import SteinContext, make_family


@pytest.fixture
def normal_ctx():
    return SteinContext(make_family("normal", [0, 1]), 0)


def ctx_for(name, params, ell=None):
    return SteinContext(make_family(name, params), ell)


# representative law/lattice pairs used across the module tests
CASES = [
    ("normal", (0.0, 1.0), 0), ("beta", (1.3, 2.4), 0), ("gamma", (1.3, 2.4), 0),
    ("logistic", (0.0, 1.0), 0), ("poisson", (2.0,), 1), ("poisson", (2.0,), -1),
    ("binomial", (10, 0.4), 1), ("binomial", (10, 0.4), -1), ("negbinomial", (2, 0.3), 1),
    ("hypergeom", (5, 4, 10), -1),
]


def bulk(ctx, n=9):
    g = ctx.grid(n, 0.05, 0.95)
    return np.unique(g[ctx.interior(g)])


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
