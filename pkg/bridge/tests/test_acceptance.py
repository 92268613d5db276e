"""Bridge acceptance: tune 200 steps on a 100-example synthetic dataset with
strictly decreasing logged loss, then answer the primary pipeline's forecast
calls with horizon-length digit sequences for at least 8 of 10 validation
windows — through the wire contract, with zero adaptations on either side."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from tunebridge.server import serve_in_thread
from tunebridge.training import TuneConfig, read_loss_log, tune

from conftest import write_copy_dataset

# the consumer side: the forecasting pipeline's own remote client
from newscast.clients import ModelClientConfig
from newscast.errors import HorizonMismatch, ParseFailure
from newscast.forecaster import ForecastBackendConfig, forecast
from newscast.prompts import TrainingExample
from newscast.series import ForecastTask

HORIZON = 8


@pytest.fixture(scope="module")
def tuned_adapter(digit_base, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("acceptance")
    dataset = tmp / "train.jsonl"
    write_copy_dataset(dataset, 100, seed=42, period=HORIZON)
    adapter = tune(TuneConfig(
        base_model_id=str(digit_base),
        dataset_path=str(dataset),
        output_dir=str(tmp / "adapter"),
        max_steps=200,
        batch_size=8,
        seed=0,
        log_every=50,
    ))
    return adapter


def test_acceptance_loss_strictly_decreases(tuned_adapter):
    losses = read_loss_log(tuned_adapter)
    assert len(losses) == 200
    assert losses[-1] < losses[0]
    head = sum(losses[:20]) / 20
    tail = sum(losses[-20:]) / 20
    assert tail < head


def test_acceptance_primary_forecasts_through_served_endpoint(tuned_adapter, tmp_path):
    server, url, _ = serve_in_thread(tuned_adapter, max_new_tokens=80)
    try:
        backend = ForecastBackendConfig(
            kind="remote",
            client_config=ModelClientConfig(endpoint=url, model_id="tuned", timeout=120.0),
            strict_horizon=True,
            decode_retries=0,
        )
        validation = write_copy_dataset(tmp_path / "val.jsonl", 10, seed=777, period=HORIZON)
        successes = 0
        for i, record in enumerate(validation):
            task = ForecastTask(
                series_id=f"val-{i}",
                history_start=0,
                input_len=2 * HORIZON,
                horizon=HORIZON,
                forecast_start=datetime(2021, 6, 1, tzinfo=timezone.utc),
                region="R1",
            )
            example = TrainingExample(record["instruction"], record["input"], "")
            try:
                result = forecast(task, example, backend)
            except (HorizonMismatch, ParseFailure):
                continue
            assert len(result.predicted) == HORIZON
            assert all(v >= 0 and v == int(v) for v in result.predicted)  # digit groups
            successes += 1
        assert successes >= 8, f"only {successes}/10 windows produced horizon-length forecasts"
    finally:
        server.shutdown()
