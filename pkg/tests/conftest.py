from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from newscast.series import TimeSeries, make_windows

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1].replace("test_acceptance_", "")
        _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, outcome in _ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"  {outcome}  {name}")

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


# Visible history/output values from the load-forecasting prompt examples; the
# remaining points are filler so the window covers exactly two days.
A2_HISTORY_PREFIX = [7015.7, 6875.1, 6634.6, 6334.6, 6134.7, 6007.9]
A2_OUTPUT_PREFIX = [6592.6, 6467.0, 6312.3, 6066.8, 5902.9, 5795.0]


def electricity_series(series_id: str = "nsw-load") -> TimeSeries:
    values = A2_HISTORY_PREFIX + [6000.0 + 10 * i for i in range(42)]
    values += A2_OUTPUT_PREFIX + [5800.0 + 10 * i for i in range(42)]
    return TimeSeries(
        id=series_id,
        domain="electricity",
        region="NSW",
        granularity=timedelta(minutes=30),
        start=datetime(2019, 11, 9, tzinfo=timezone.utc),
        values=tuple(values),
    )


@pytest.fixture
def nsw_series() -> TimeSeries:
    return electricity_series()


@pytest.fixture
def nsw_task(nsw_series):
    return make_windows(nsw_series, input_len=48, horizon=48, stride=48)[0]
