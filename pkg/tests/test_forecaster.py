from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import pytest

from newscast.clients import ModelClientConfig
from newscast.errors import EmitError, HorizonMismatch
from newscast.forecaster import (
    ForecastBackendConfig,
    emit_dataset,
    forecast,
    read_dataset,
    seasonal_naive,
)
from newscast.prompts import TrainingExample
from newscast.series import TimeSeries, compute_metrics, make_windows

UTC = timezone.utc


def periodic_series(days=3, period=48, level=100.0):
    values = [level + 10 * (i % period) for i in range(days * period)]
    return TimeSeries(
        id="p", domain="custom", region="R1", granularity=timedelta(minutes=30),
        start=datetime(2020, 1, 1, tzinfo=UTC), values=tuple(values),
    )


def inference_example():
    return TrainingExample(instruction="1,2,3", input="ctx", output="")


class TestSeasonalNaive:
    def test_exact_on_periodic(self):
        series = periodic_series()
        task = make_windows(series, 48, 48, 48)[0]
        config = ForecastBackendConfig(kind="seasonal_naive")
        result = forecast(task, inference_example(), config, series=series)
        report = compute_metrics(series.target_values(task), result.predicted)
        assert report.mse == 0 and report.mape == 0

    def test_two_identical_days_reproduced(self):
        history = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0]
        assert seasonal_naive(history, 3, period=3) == [1.0, 2.0, 3.0]

    def test_short_history_repeats_tail(self):
        assert seasonal_naive([5.0, 7.0], 4, period=48) == [5.0, 7.0, 5.0, 7.0]


class TestMockBackend:
    def test_scripted_values(self):
        series = periodic_series()
        task = make_windows(series, 48, 48, 48)[0]
        config = ForecastBackendConfig(kind="mock", script={task.id: [1.0] * 48})
        result = forecast(task, inference_example(), config)
        assert result.predicted == tuple([1.0] * 48)
        assert result.backend == "mock"

    def test_strict_horizon_enforced(self):
        series = periodic_series()
        task = make_windows(series, 48, 48, 48)[0]
        config = ForecastBackendConfig(kind="mock", default_script=[1.0, 2.0, 3.0])
        with pytest.raises(HorizonMismatch):
            forecast(task, inference_example(), config)

    def test_output_nonempty_rejected(self):
        series = periodic_series()
        task = make_windows(series, 48, 48, 48)[0]
        config = ForecastBackendConfig(kind="mock", default_script=[1.0] * 48)
        with pytest.raises(ValueError):
            forecast(task, TrainingExample("i", "in", "1,2"), config)


class TestRemoteBackend:
    def task(self):
        return make_windows(periodic_series(), 48, 48, 48)[0]

    def remote_config(self, replies, strict=True, decode_retries=2):
        return ForecastBackendConfig(
            kind="remote",
            strict_horizon=strict,
            decode_retries=decode_retries,
            client_config=ModelClientConfig(endpoint="mock", script=tuple(replies)),
        )

    def test_full_reply_decoded(self):
        reply = ",".join(f"{6592.6 + i:.1f}" for i in range(48))
        result = forecast(self.task(), inference_example(), self.remote_config([reply]))
        assert len(result.predicted) == 48
        assert result.predicted[0] == 6592.6
        assert result.raw_reply == reply

    def test_horizon_retry_then_success(self):
        short = "1.0,2.0"
        full = ",".join("3.0" for _ in range(48))
        result = forecast(self.task(), inference_example(), self.remote_config([short, full]))
        assert len(result.predicted) == 48

    def test_strict_miss_raises(self):
        config = self.remote_config(["1.0,2.0"], strict=True)
        with pytest.raises(HorizonMismatch):
            forecast(self.task(), inference_example(), config)

    def test_lenient_pads_with_last_value(self):
        config = self.remote_config(["1.0,2.0"], strict=False)
        result = forecast(self.task(), inference_example(), config)
        assert len(result.predicted) == 48
        assert result.predicted[2:] == tuple([2.0] * 46)

    def test_overlong_reply_cropped(self):
        reply = ",".join("9.0" for _ in range(60))
        result = forecast(self.task(), inference_example(), self.remote_config([reply]))
        assert len(result.predicted) == 48


class TestDatasetEmit:
    def example(self, i=0):
        return TrainingExample(
            instruction=f"The historical load data is: {i},1,2",
            input="Based on the historical load data, please predict.",
            output="3.0,4.0,5.0",
        )

    def test_emit_read_fixpoint(self, tmp_path):
        examples = [self.example(i) for i in range(100)]
        path = tmp_path / "data.jsonl"
        assert emit_dataset(examples, path) == 100
        assert read_dataset(path) == examples

    def test_empty_list_valid(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        assert emit_dataset([], path) == 0
        assert path.read_text() == ""

    def test_empty_output_names_index(self, tmp_path):
        examples = [self.example(), TrainingExample("a", "b", "")]
        with pytest.raises(EmitError, match="example 1"):
            emit_dataset(examples, tmp_path / "x.jsonl")

    def test_line_json_schema(self, tmp_path):
        path = tmp_path / "one.jsonl"
        emit_dataset([self.example()], path)
        rec = json.loads(path.read_text().splitlines()[0])
        assert set(rec) == {"instruction", "input", "output"}


class TestBackendConfig:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ForecastBackendConfig(kind="quantum")

    def test_remote_needs_client(self):
        with pytest.raises(ValueError):
            ForecastBackendConfig(kind="remote")

    def test_oracle_needs_callable(self):
        with pytest.raises(ValueError):
            ForecastBackendConfig(kind="synthetic_oracle")
