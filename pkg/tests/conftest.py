import math
from contextlib import contextmanager

import numpy as np
import pytest

from hybridtme.model import ModelParams
from hybridtme.spectral import SignalCoupling

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def pset():
    """Reference kinetics K=10, alpha=0.6, xi=0.4, lambda_S=1.5, lambda_R=1.0."""
    return ModelParams(lambda_S=1.5, lambda_R=1.0, K=10.0, alpha=0.6, xi=0.4)


@pytest.fixture
def cset():
    """Local-closure feedback chi_R=1, g_S=-1 (used with d_S=d_R=0.05)."""
    return SignalCoupling(chi_S=0.0, chi_R=1.0, g_S=-1.0, g_R=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@contextmanager
def _criterion(number: int, title: str):
    detail: dict = {}
    try:
        yield detail
    except BaseException as err:
        msg = detail.get("summary") or f"{type(err).__name__}: {err}".splitlines()[0]
        _emit(f"[FAIL] criterion {number:>2} {title}: {msg}")
        raise
    _emit(f"[PASS] criterion {number:>2} {title}: {detail.get('summary', '')}")


def _emit(line: str):
    _ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture
def criterion():
    """Context manager that logs one pass/fail line per acceptance criterion."""
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)


def rel(a, b):
    return abs(a - b) / max(abs(b), math.ulp(1.0))
