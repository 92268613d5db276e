"""Pluggable forecast backends and the instruction-tuning dataset emitter.

The remote backend speaks the shared chat wire contract and decodes digit
replies; the other kinds (seasonal-naive, scripted mock, news-aware synthetic
oracle) keep the pipeline runnable and verifiable offline.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from datetime import timedelta
from pathlib import Path

from .clients import ModelClientConfig, make_client
from .errors import EmitError, HorizonMismatch, ParseFailure
from .prompts import TrainingExample
from .series import ForecastTask, TimeSeries, parse_digits

BACKEND_KINDS = ("remote", "seasonal_naive", "mock", "synthetic_oracle")

HORIZON_REMINDER = "Please output exactly {n} comma-separated values and nothing else."


@dataclass
class ForecastBackendConfig:
    """Exactly one backend kind, plus its kind-specific settings."""

    kind: str
    strict_horizon: bool = True
    # remote
    client_config: ModelClientConfig | None = None
    decode_retries: int = 2
    # seasonal_naive
    seasonal_period: int | None = None
    # mock: per-task scripted values, or a single shared sequence
    script: dict[str, list[float]] | None = None
    default_script: list[float] | None = None
    # synthetic_oracle: callable (task, example) -> list of floats
    oracle: object | None = None

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and self.client_config is None:
            raise ValueError("remote backend needs client_config")
        if self.kind == "mock" and self.script is None and self.default_script is None:
            raise ValueError("mock backend needs scripted values")
        if self.kind == "synthetic_oracle" and self.oracle is None:
            raise ValueError("synthetic_oracle backend needs an oracle callable")


@dataclass(frozen=True)
class ForecastResult:
    task_ref: str
    predicted: tuple[float, ...]
    backend: str
    latency: float
    raw_reply: str | None = None


def _points_per_day(granularity: timedelta) -> int:
    per_day = timedelta(days=1) / granularity
    return max(int(round(per_day)), 1)


def seasonal_naive(history: list[float], horizon: int, period: int) -> list[float]:
    """Repeat the last full seasonal period of the history."""
    period = min(period, len(history))
    tail = history[-period:]
    return [tail[i % period] for i in range(horizon)]


def _remote_predict(
    task: ForecastTask, example: TrainingExample, config: ForecastBackendConfig
) -> tuple[list[float], str]:
    client = make_client(config.client_config)
    prompt = f"{example.instruction}\n{example.input}"
    messages = [{"role": "user", "content": prompt}]
    raw = ""
    parsed: list[float] = []
    for attempt in range(config.decode_retries + 1):
        raw = client.complete(messages, purpose="forecast")
        try:
            parsed = parse_digits(raw, expected_len=task.horizon)
        except ParseFailure:
            parsed = []
        if len(parsed) >= task.horizon:
            return parsed[: task.horizon], raw
        if attempt < config.decode_retries:
            messages = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": HORIZON_REMINDER.format(n=task.horizon)},
            ]
    if config.strict_horizon:
        raise HorizonMismatch(
            f"remote reply held {len(parsed)} of {task.horizon} values after retries",
            len(parsed), task.horizon,
        )
    if not parsed:
        raise ParseFailure(f"remote reply held no numbers: {raw[:80]!r}")
    parsed = parsed + [parsed[-1]] * (task.horizon - len(parsed))
    return parsed, raw


def forecast(
    task: ForecastTask,
    example: TrainingExample,
    config: ForecastBackendConfig,
    series: TimeSeries | None = None,
) -> ForecastResult:
    """Produce a horizon-length prediction for ``task`` through the configured backend."""
    if example.output:
        raise ValueError("inference examples must have an empty output")
    started = time.perf_counter()
    raw_reply = None

    if config.kind == "remote":
        predicted, raw_reply = _remote_predict(task, example, config)
    elif config.kind == "seasonal_naive":
        if series is None:
            raise ValueError("seasonal_naive needs the series for history")
        period = config.seasonal_period or _points_per_day(series.granularity)
        predicted = seasonal_naive(list(series.history_values(task)), task.horizon, period)
    elif config.kind == "mock":
        script = (config.script or {}).get(task.id, config.default_script)
        if script is None:
            raise ValueError(f"mock backend has no script for task {task.id}")
        predicted = list(script)
    else:  # synthetic_oracle
        predicted = list(config.oracle(task, example))

    if config.strict_horizon and len(predicted) != task.horizon:
        raise HorizonMismatch(
            f"backend {config.kind} produced {len(predicted)} of {task.horizon} values",
            len(predicted), task.horizon,
        )
    if not all(math.isfinite(v) for v in predicted):
        raise ValueError(f"backend {config.kind} produced a non-finite value")
    return ForecastResult(
        task_ref=task.id,
        predicted=tuple(float(v) for v in predicted),
        backend=config.kind,
        latency=time.perf_counter() - started,
        raw_reply=raw_reply,
    )


def emit_dataset(examples: list[TrainingExample], path: str | Path) -> int:
    """Write the line-json instruction-tuning dataset; returns the record count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    for i, ex in enumerate(examples):
        if not ex.output:
            raise EmitError(f"example {i} has an empty output")
        try:
            parse_digits(ex.output)
        except ParseFailure:
            raise EmitError(f"example {i} output is not a digit sequence")
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.as_dict(), ensure_ascii=False) + "\n")
    return len(examples)


def read_dataset(path: str | Path) -> list[TrainingExample]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                TrainingExample(
                    instruction=rec["instruction"], input=rec["input"], output=rec["output"]
                )
            )
    return out
