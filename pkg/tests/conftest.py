import numpy as np
import pandas as pd
import pytest

from chainimp.data_model import dataset_from_frame


def frame_of(columns: dict) -> pd.DataFrame:
    """Raw string cells; None becomes an empty (missing) cell."""
    return pd.DataFrame({k: ["" if v is None else str(v) for v in vals] for k, vals in columns.items()})


def make_ds(columns: dict, variables: list, **extra):
    return dataset_from_frame(frame_of(columns), {"variables": variables, **extra})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Log an acceptance outcome; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
