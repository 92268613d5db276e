"""Time series storage, windowing, digit-token (de)serialization and error metrics.

Values are stored and emitted unnormalized; every operation here is a pure
function over immutable values.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import HorizonMismatch, IngestError, MetricError, ParseFailure, SplitError, WindowError

DOMAINS = ("electricity", "exchange", "traffic", "bitcoin", "custom")

DEFAULT_VALIDATION_CAP = 32

_NUMBER_PREFIX = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)")


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True)
class TimeSeries:
    """A single unnormalized series with implied timestamps start + i * granularity."""

    id: str
    domain: str
    region: str
    granularity: timedelta
    start: datetime
    values: tuple[float, ...]

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.granularity <= timedelta(0):
            raise ValueError("granularity must be positive")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        for i, v in enumerate(self.values):
            if not math.isfinite(v):
                raise ValueError(f"non-finite value at index {i}")
        if self.start.tzinfo is None:
            object.__setattr__(self, "start", self.start.replace(tzinfo=timezone.utc))

    def __len__(self) -> int:
        return len(self.values)

    def timestamp_at(self, index: int) -> datetime:
        return self.start + index * self.granularity

    def history_values(self, task: "ForecastTask") -> tuple[float, ...]:
        return self.values[task.history_start : task.history_start + task.input_len]

    def target_values(self, task: "ForecastTask") -> tuple[float, ...]:
        lo = task.history_start + task.input_len
        return self.values[lo : lo + task.horizon]


@dataclass(frozen=True)
class ForecastTask:
    """One forecasting window: ``input_len`` history points then ``horizon`` targets."""

    series_id: str
    history_start: int
    input_len: int
    horizon: int
    forecast_start: datetime
    region: str
    split: Split = Split.TRAIN

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.input_len < 1:
            raise ValueError("input_len must be >= 1")

    @property
    def id(self) -> str:
        return f"{self.series_id}@{self.history_start}+{self.input_len}h{self.horizon}"

    def with_split(self, split: Split) -> "ForecastTask":
        return replace(self, split=split)


@dataclass(frozen=True)
class MetricReport:
    """The four error metrics; ``mape`` is in percent and omitted near zero actuals."""

    mse: float
    rmse: float
    mae: float
    mape: float | None
    n: int
    mape_omitted: bool = False

    def as_dict(self) -> dict:
        return {
            "mse": self.mse,
            "rmse": self.rmse,
            "mae": self.mae,
            "mape": self.mape,
            "n": self.n,
            "mape_omitted": self.mape_omitted,
        }


@dataclass(frozen=True)
class FormatPolicy:
    """Numeric rendering policy for digit-token strings.

    Exactly one of ``decimals`` / ``significant_figures`` is active. The default
    keeps one decimal place; significant-figure rounding is opt-in.
    """

    decimals: int | None = 1
    significant_figures: int | None = None

    def __post_init__(self):
        if (self.decimals is None) == (self.significant_figures is None):
            raise ValueError("set exactly one of decimals / significant_figures")

    def render(self, value: float) -> str:
        if self.decimals is not None:
            return f"{value:.{self.decimals}f}"
        sig = self.significant_figures
        if value == 0:
            return "0"
        exponent = math.floor(math.log10(abs(value)))
        rounded = round(value, sig - 1 - exponent)
        if exponent >= sig - 1:
            return f"{rounded:.0f}"
        return f"{rounded:.{sig - 1 - exponent}f}"


def serialize_digits(values, policy: FormatPolicy = FormatPolicy()) -> str:
    """Render ``values`` as the comma-separated digit string fed to the model."""
    rendered = []
    for i, v in enumerate(values):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError(f"non-finite value at index {i}")
        rendered.append(policy.render(v))
    return ",".join(rendered)


def parse_digits(text: str, expected_len: int | None = None, strict: bool = False) -> list[float]:
    """Recover reals from a comma-separated digit string.

    Lenient by default: the longest valid numeric prefix is returned and model
    chatter after it is ignored. With ``strict=True`` and ``expected_len`` set,
    the count must match exactly.
    """
    values: list[float] = []
    for token in text.split(","):
        token = token.strip()
        try:
            values.append(float(token))
            continue
        except ValueError:
            pass
        m = _NUMBER_PREFIX.match(token)
        if m:
            values.append(float(m.group(1)))
        break
    if not values:
        raise ParseFailure(f"no numeric values in {text[:80]!r}")
    if strict and expected_len is not None and len(values) != expected_len:
        raise HorizonMismatch(
            f"parsed {len(values)} values, expected {expected_len}", len(values), expected_len
        )
    if expected_len is not None and not strict:
        values = values[:expected_len]
    return values


def make_windows(series: TimeSeries, input_len: int, horizon: int, stride: int) -> list[ForecastTask]:
    """Slice ``series`` into non-leaking forecast tasks ordered by forecast_start."""
    if stride < 1:
        raise WindowError("stride must be >= 1")
    usable = len(series) - input_len - horizon
    if usable < 0:
        raise WindowError(
            f"series {series.id} has {len(series)} points; needs >= {input_len + horizon}"
        )
    count = usable // stride + 1
    tasks = []
    for k in range(count):
        i = k * stride
        tasks.append(
            ForecastTask(
                series_id=series.id,
                history_start=i,
                input_len=input_len,
                horizon=horizon,
                forecast_start=series.timestamp_at(i + input_len),
                region=series.region,
            )
        )
    return tasks


def split_tasks(
    tasks: list[ForecastTask],
    validation_fraction: float,
    seed: int,
    cap: int = DEFAULT_VALIDATION_CAP,
) -> tuple[list[ForecastTask], list[ForecastTask]]:
    """Deterministic (train, validation) partition; validation size = min(ceil(f*N), cap)."""
    if not tasks:
        raise SplitError("no tasks to split")
    if not 0 < validation_fraction < 1:
        raise SplitError(f"validation_fraction must be in (0, 1), got {validation_fraction}")
    n_val = min(math.ceil(validation_fraction * len(tasks)), cap)
    order = list(range(len(tasks)))
    random.Random(seed).shuffle(order)
    val_idx = set(order[:n_val])
    train = [t.with_split(Split.TRAIN) for i, t in enumerate(tasks) if i not in val_idx]
    validation = [t.with_split(Split.VALIDATION) for i, t in enumerate(tasks) if i in val_idx]
    return train, validation


def compute_metrics(actual, predicted) -> MetricReport:
    """MSE / RMSE / MAE / MAPE over paired unnormalized values."""
    y = np.asarray(actual, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    if y.shape != yhat.shape:
        raise MetricError(f"length mismatch: {y.shape[0]} actual vs {yhat.shape[0]} predicted")
    if y.size == 0:
        raise MetricError("empty inputs")
    err = y - yhat
    mse = float(np.mean(err**2))
    mae = float(np.mean(np.abs(err)))
    if np.any(y == 0):
        mape, omitted = None, True
    else:
        mape, omitted = float(100.0 * np.mean(np.abs(err / y))), False
    return MetricReport(
        mse=mse, rmse=math.sqrt(mse), mae=mae, mape=mape, n=int(y.size), mape_omitted=omitted
    )


def pool_metrics(pairs: list[tuple[list[float], list[float]]]) -> MetricReport:
    """Metrics over all (actual, predicted) pairs pooled into one vector."""
    actual: list[float] = []
    predicted: list[float] = []
    for a, p in pairs:
        actual.extend(a)
        predicted.extend(p)
    return compute_metrics(actual, predicted)


def load_series(path: str | Path) -> list[TimeSeries]:
    """Read the line-json series ingestion file.

    Each record: {id, domain, region, granularity_minutes, start_iso8601, values}.
    """
    out = []
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestError(f"bad json: {e}", line=lineno, path=str(path))
            try:
                start = datetime.fromisoformat(rec["start_iso8601"].replace("Z", "+00:00"))
                out.append(
                    TimeSeries(
                        id=rec["id"],
                        domain=rec["domain"],
                        region=rec["region"],
                        granularity=timedelta(minutes=int(rec["granularity_minutes"])),
                        start=start,
                        values=tuple(rec["values"]),
                    )
                )
            except KeyError as e:
                raise IngestError(f"missing field {e}", line=lineno, path=str(path))
            except (TypeError, ValueError) as e:
                raise IngestError(str(e), line=lineno, path=str(path))
    return out
