from __future__ import annotations

import functools
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (title, passed, seconds, detail)
ACCEPTANCE: dict[int, tuple[str, bool, float, str]] = {}


def criterion(number: int, title: str):
    """Record the outcome of an acceptance test for the end-of-run table."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                ACCEPTANCE[number] = (title, False, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}"[:200])
                raise
            ACCEPTANCE[number] = (title, True, time.perf_counter() - t0, detail or "")

        return wrapper

    return deco


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, secs, detail = ACCEPTANCE[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}  ({secs:.2f}s)"
        if detail:
            line += f"  {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
