from __future__ import annotations

import math
import random
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newscast.errors import (
    HorizonMismatch,
    MetricError,
    ParseFailure,
    SplitError,
    WindowError,
)
from newscast.series import (
    ForecastTask,
    FormatPolicy,
    Split,
    TimeSeries,
    compute_metrics,
    make_windows,
    parse_digits,
    serialize_digits,
    split_tasks,
)

UTC = timezone.utc


def series_of(values, granularity=timedelta(minutes=30)):
    return TimeSeries(
        id="s",
        domain="custom",
        region="R1",
        granularity=granularity,
        start=datetime(2020, 1, 1, tzinfo=UTC),
        values=tuple(values),
    )


class TestSerializeDigits:
    def test_integers_render_without_decimals(self):
        assert serialize_digits([123, 456], FormatPolicy(decimals=0)) == "123,456"

    def test_empty(self):
        assert serialize_digits([]) == ""

    def test_one_decimal_default_matches_load_fixture(self):
        assert serialize_digits([7015.7, 6875.1, 6634.6]) == "7015.7,6875.1,6634.6"

    def test_trailing_zero_kept(self):
        assert serialize_digits([6467.0]) == "6467.0"

    def test_rejects_non_finite_naming_index(self):
        with pytest.raises(ValueError, match="index 1"):
            serialize_digits([1.0, float("nan")])

    def test_significant_figures_policy(self):
        policy = FormatPolicy(decimals=None, significant_figures=3)
        assert serialize_digits([7015.7, 0.12345, 34.0], policy) == "7020,0.123,34.0"

    def test_policy_requires_exactly_one_mode(self):
        with pytest.raises(ValueError):
            FormatPolicy(decimals=1, significant_figures=3)
        with pytest.raises(ValueError):
            FormatPolicy(decimals=None, significant_figures=None)


class TestParseDigits:
    def test_model_output_fixture(self):
        assert parse_digits("6592.6,6467.0,6312.3") == [6592.6, 6467.0, 6312.3]

    def test_expected_len_ok(self):
        assert parse_digits("1.00,2.00,3.00", expected_len=3) == [1.0, 2.0, 3.0]

    def test_lenient_stops_at_chatter(self):
        assert parse_digits("5.1,5.2,done") == [5.1, 5.2]

    def test_lenient_takes_leading_number_of_dirty_token(self):
        assert parse_digits("5.1,5.2 and that is all") == [5.1, 5.2]

    def test_lenient_crops_to_expected_len(self):
        assert parse_digits("1,2,3,4", expected_len=2) == [1.0, 2.0]

    def test_zero_values_raises(self):
        with pytest.raises(ParseFailure):
            parse_digits("no numbers here")

    def test_strict_short_output(self):
        with pytest.raises(HorizonMismatch) as err:
            parse_digits("1,2", expected_len=3, strict=True)
        assert err.value.parsed == 2
        assert err.value.expected == 3

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=50))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_one_decimal(self, values):
        text = serialize_digits(values)
        parsed = parse_digits(text, expected_len=len(values), strict=True)
        assert parsed == [round(v, 1) for v in [float(f"{v:.1f}") for v in values]]


class TestMakeWindows:
    def test_single_window_two_days(self):
        tasks = make_windows(series_of(range(96)), 48, 48, 48)
        assert len(tasks) == 1
        t = tasks[0]
        assert t.history_start == 0
        assert t.forecast_start == datetime(2020, 1, 2, tzinfo=UTC)

    def test_stride_one_same_count(self):
        assert len(make_windows(series_of(range(96)), 48, 48, 1)) == 1

    def test_too_short(self):
        with pytest.raises(WindowError):
            make_windows(series_of(range(95)), 48, 48, 48)

    def test_count_formula(self):
        # floor((200 - 48 - 48)/24) + 1 = 5
        assert len(make_windows(series_of(range(200)), 48, 48, 24)) == 5

    def test_no_history_horizon_overlap(self):
        series = series_of(range(300))
        for t in make_windows(series, 48, 48, 7):
            history_end = t.history_start + t.input_len
            assert series.timestamp_at(history_end) == t.forecast_start
            assert series.history_values(t)[-1] == series.values[history_end - 1]
            assert series.target_values(t)[0] == series.values[history_end]


class TestSplitTasks:
    def make_tasks(self, n):
        series = series_of(range(96 + n - 1))
        return make_windows(series, 48, 48, 1)

    def test_deterministic_partition(self):
        tasks = self.make_tasks(10)
        train1, val1 = split_tasks(tasks, 0.2, seed=7)
        train2, val2 = split_tasks(tasks, 0.2, seed=7)
        assert len(train1) == 8 and len(val1) == 2
        assert [t.id for t in train1] == [t.id for t in train2]
        assert [t.id for t in val1] == [t.id for t in val2]
        assert {t.id for t in train1} | {t.id for t in val1} == {t.id for t in tasks}
        assert all(t.split is Split.VALIDATION for t in val1)

    def test_half_of_two(self):
        train, val = split_tasks(self.make_tasks(2), 0.5, seed=0)
        assert len(train) == 1 and len(val) == 1

    def test_cap(self):
        _, val = split_tasks(self.make_tasks(20), 0.9, seed=0, cap=3)
        assert len(val) == 3

    def test_empty_raises(self):
        with pytest.raises(SplitError):
            split_tasks([], 0.2, seed=0)

    def test_seed_changes_partition(self):
        tasks = self.make_tasks(10)
        _, val_a = split_tasks(tasks, 0.3, seed=1)
        _, val_b = split_tasks(tasks, 0.3, seed=2)
        assert {t.id for t in val_a} != {t.id for t in val_b}


def loop_metrics(actual, predicted):
    """Independent scalar-loop oracle for the four error metrics."""
    n = len(actual)
    sq = ab = pc = 0.0
    for y, yhat in zip(actual, predicted):
        sq += (y - yhat) ** 2
        ab += abs(y - yhat)
        pc += abs((y - yhat) / y)
    return sq / n, math.sqrt(sq / n), ab / n, 100.0 * pc / n


class TestComputeMetrics:
    def test_identity(self):
        r = compute_metrics([1, 2], [1, 2])
        assert (r.mse, r.rmse, r.mae, r.mape) == (0, 0, 0, 0)

    def test_ten_percent(self):
        r = compute_metrics([100], [110])
        assert r.mape == pytest.approx(10.0)
        assert r.mae == 10 and r.mse == 100 and r.rmse == 10

    def test_hand_computed_case(self):
        r = compute_metrics([10, 20], [13, 24])
        assert r.mse == pytest.approx(12.5)
        assert r.rmse == pytest.approx(math.sqrt(12.5))
        assert r.mae == pytest.approx(3.5)
        assert r.mape == pytest.approx(25.0)

    def test_matches_loop_oracle_on_random_vectors(self):
        rng = random.Random(1234)
        for _ in range(1000):
            n = rng.randint(1, 40)
            actual = [rng.uniform(0.5, 1000.0) * rng.choice([1, -1]) for _ in range(n)]
            predicted = [a + rng.uniform(-50, 50) for a in actual]
            r = compute_metrics(actual, predicted)
            mse, rmse, mae, mape = loop_metrics(actual, predicted)
            assert r.mse == pytest.approx(mse, rel=1e-9)
            assert r.rmse == pytest.approx(rmse, rel=1e-9)
            assert r.mae == pytest.approx(mae, rel=1e-9)
            assert r.mape == pytest.approx(mape, rel=1e-9)
            assert r.rmse**2 == pytest.approx(r.mse, rel=1e-12)

    def test_mape_omitted_at_zero_actual(self):
        r = compute_metrics([0.0, 5.0], [1.0, 5.0])
        assert r.mape is None and r.mape_omitted

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            compute_metrics([1, 2], [1])

    def test_empty(self):
        with pytest.raises(MetricError):
            compute_metrics([], [])


class TestTypes:
    def test_series_rejects_nan(self):
        with pytest.raises(ValueError):
            series_of([1.0, float("inf")])

    def test_task_requires_horizon(self):
        with pytest.raises(ValueError):
            ForecastTask("s", 0, 48, 0, datetime(2020, 1, 2, tzinfo=UTC), "R1")

    def test_naive_start_becomes_utc(self):
        s = TimeSeries(
            id="x", domain="custom", region="R", granularity=timedelta(hours=1),
            start=datetime(2020, 1, 1), values=(1.0,),
        )
        assert s.start.tzinfo is UTC
