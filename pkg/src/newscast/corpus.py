"""News and supplementary-context ingestion plus rule-based pre-pairing.

Pre-pairing is the coarse, causality-safe alignment of candidate news to a
forecast window by publication time and region; relevance judgment is left to
the agents.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

from .errors import IngestError
from .series import ForecastTask

INTERNATIONAL = "International"

SUPPLEMENTARY_KINDS = ("weather", "calendar", "economic")

# Registered payload vocabulary per kind; ingestion rejects keys outside it.
PAYLOAD_VOCABULARY: dict[str, set[str]] = {
    "weather": {"min_temp", "max_temp", "humidity", "pressure", "wind_speed"},
    "calendar": {"is_weekend", "is_public_holiday", "holiday_name"},
    "economic": {"gdp", "unemployment_rate", "cash_rate", "interest_rate", "inflation_rate"},
}

# Display names used by the sentence templates (economic facts only).
_ECONOMIC_LABELS = {
    "gdp": "GDP",
    "unemployment_rate": "Unemployment rate (unit: %)",
    "cash_rate": "Cash Rate Target (unit: %)",
    "interest_rate": "Interest rate (unit: %)",
    "inflation_rate": "Inflation rate (unit: %)",
}

_REGION_DISPLAY = {
    "AU": "Australia",
    "US": "the United States",
    "USA": "the United States",
}

_SLASH_DATE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{4})(?:\s+(\d{1,2}):(\d{2})(?::(\d{2}))?)?$")


def parse_timestamp(raw: str | datetime) -> datetime:
    """Parse ISO-8601 or M/D/YYYY[ HH:MM[:SS]] timestamps, normalized to UTC."""
    if isinstance(raw, datetime):
        dt = raw
    else:
        raw = raw.strip()
        m = _SLASH_DATE.match(raw)
        if m:
            month, day, year, hh, mm, ss = m.groups()
            dt = datetime(
                int(year), int(month), int(day), int(hh or 0), int(mm or 0), int(ss or 0)
            )
        else:
            try:
                dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
            except ValueError:
                raise ValueError(f"unparseable timestamp {raw!r}")
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


@dataclass(frozen=True)
class NewsItem:
    """One news record; ``published_at`` is always UTC."""

    id: str
    title: str
    content: str
    published_at: datetime
    region: str
    summary: str | None = None
    category: str | None = None
    url: str | None = None

    def __post_init__(self):
        if not self.title:
            raise ValueError("title must be nonempty")
        if self.published_at.tzinfo is None:
            object.__setattr__(self, "published_at", self.published_at.replace(tzinfo=timezone.utc))

    def dedupe_key(self) -> str:
        if self.url:
            return f"url:{self.url}"
        digest = hashlib.sha1(
            f"{self.title}|{self.published_at.isoformat()}".encode()
        ).hexdigest()
        return f"hash:{digest}"


@dataclass(frozen=True)
class SupplementaryRecord:
    """Dated non-news context: weather, calendar flags, or economic indicators."""

    kind: str
    date: date
    region: str
    payload: dict

    def __post_init__(self):
        if self.kind not in SUPPLEMENTARY_KINDS:
            raise ValueError(f"unknown supplementary kind {self.kind!r}")
        bad = set(self.payload) - PAYLOAD_VOCABULARY[self.kind]
        if bad:
            raise ValueError(f"unregistered payload keys for {self.kind}: {sorted(bad)}")
        for k, v in self.payload.items():
            if isinstance(v, float) and v != v:  # NaN
                raise ValueError(f"non-finite payload value for {k}")


@dataclass(frozen=True)
class CandidateSet:
    """News eligible for a task: published inside the window, region-matched."""

    task_ref: str
    items: tuple[str, ...]
    window: tuple[datetime, datetime]


@dataclass(frozen=True)
class SupplementaryFragment:
    """A rendered context sentence plus the raw facts behind it.

    ``role`` places the fragment relative to the task: history_start or
    prediction. The raw payload lets numeric prompt modes re-render the facts.
    """

    kind: str
    date: date
    role: str
    text: str
    payload: dict = field(default_factory=dict)


def _news_from_record(rec: dict, lineno: int, path: str) -> NewsItem:
    for required in ("title", "content", "published_at", "region"):
        if required not in rec or rec[required] in (None, ""):
            raise IngestError(f"missing required field {required!r}", line=lineno, path=path)
    try:
        published = parse_timestamp(rec["published_at"])
    except ValueError as e:
        raise IngestError(str(e), line=lineno, path=path)
    item_id = rec.get("id") or f"news-{hashlib.sha1(json.dumps(rec, sort_keys=True, default=str).encode()).hexdigest()[:12]}"
    return NewsItem(
        id=item_id,
        title=str(rec["title"]),
        content=str(rec["content"]),
        published_at=published,
        region=str(rec["region"]),
        summary=rec.get("summary") or None,
        category=rec.get("category") or None,
        url=rec.get("url") or None,
    )


def ingest_news(source: str | Path, format: str = "line-json") -> list[NewsItem]:
    """Load news records, deduplicate (url else title+timestamp hash), sort by time."""
    path = Path(source)
    items: list[NewsItem] = []
    if format == "line-json":
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as e:
                    raise IngestError(f"bad json: {e}", line=lineno, path=str(path))
                items.append(_news_from_record(rec, lineno, str(path)))
    elif format == "csv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for lineno, rec in enumerate(reader, start=2):  # header is line 1
                items.append(_news_from_record(rec, lineno, str(path)))
    else:
        raise IngestError(f"unknown format {format!r}", path=str(path))

    seen: dict[str, NewsItem] = {}
    for item in items:
        seen.setdefault(item.dedupe_key(), item)
    return sorted(seen.values(), key=lambda n: (n.published_at, n.id))


def ingest_supplementary(source: str | Path) -> list[SupplementaryRecord]:
    """Load the supplementary line-json file: {kind, date, region, payload}."""
    path = Path(source)
    out: list[SupplementaryRecord] = []
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
                out.append(
                    SupplementaryRecord(
                        kind=rec["kind"],
                        date=date.fromisoformat(rec["date"]),
                        region=rec["region"],
                        payload=dict(rec["payload"]),
                    )
                )
            except KeyError as e:
                raise IngestError(f"missing field {e}", line=lineno, path=str(path))
            except (TypeError, ValueError) as e:
                raise IngestError(str(e), line=lineno, path=str(path))
    return out


def prepair(
    corpus: list[NewsItem],
    task: ForecastTask,
    lookback: timedelta,
    include_international: bool = True,
) -> CandidateSet:
    """Select candidate news for ``task`` by publication window and region."""
    if lookback <= timedelta(0):
        raise ValueError("lookback must be positive")
    earliest = task.forecast_start - lookback
    chosen = [
        n
        for n in corpus
        if earliest <= n.published_at < task.forecast_start
        and (n.region == task.region or (include_international and n.region == INTERNATIONAL))
    ]
    chosen.sort(key=lambda n: (n.published_at, n.id))
    return CandidateSet(
        task_ref=task.id,
        items=tuple(n.id for n in chosen),
        window=(earliest, task.forecast_start),
    )


def _render_number(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float) and v == int(v) and abs(v) >= 1e4:
        return str(int(v))  # large round figures read as integers (GDP style)
    return str(v)


def region_display(region: str) -> str:
    return _REGION_DISPLAY.get(region, region)


def render_supplementary(
    records: list[SupplementaryRecord], task: ForecastTask, series_start: date | None = None,
    history_days: int = 1,
) -> list[SupplementaryFragment]:
    """Render supplementary records for ``task`` into fixed-template fragments.

    ``series_start`` is the first calendar date of the task's history (derived
    by the caller from the series); the prediction date is the forecast start
    date. Missing kinds/dates are silently omitted.
    """
    pred_date = task.forecast_start.date()
    start_date = series_start or pred_date
    fragments: list[SupplementaryFragment] = []

    def weather_text(prefix: str, p: dict) -> str:
        parts = []
        if "min_temp" in p:
            parts.append(f"the minimum temperature is {p['min_temp']}")
        if "max_temp" in p:
            parts.append(f"the maximum temperature is {p['max_temp']}")
        if "humidity" in p:
            parts.append(f"the humidity is {p['humidity']}")
        if "pressure" in p:
            parts.append(f"the pressure is {p['pressure']}")
        return f"{prefix}: " + "; ".join(parts) + "."

    for rec in records:
        if rec.kind == "weather" and rec.date == start_date:
            fragments.append(
                SupplementaryFragment(
                    "weather", rec.date, "history_start",
                    weather_text("Weather of the start date", rec.payload), rec.payload,
                )
            )
        elif rec.kind == "weather" and rec.date == pred_date:
            fragments.append(
                SupplementaryFragment(
                    "weather", rec.date, "prediction",
                    weather_text("Weather forecast of the prediction date", rec.payload), rec.payload,
                )
            )
        elif rec.kind == "calendar" and rec.date in (start_date, pred_date):
            role = "history_start" if rec.date == start_date else "prediction"
            day_type = "Weekend" if rec.payload.get("is_weekend") else "Weekday"
            holiday = "a public holiday" if rec.payload.get("is_public_holiday") else "not a public holiday"
            text = f" that is {day_type}, and it is {holiday}"
            fragments.append(SupplementaryFragment("calendar", rec.date, role, text, rec.payload))

    # Economic facts render as one sentence per (region, key) over the history
    # span plus one per prediction-date value, in the background-block template.
    coverage = _coverage_phrase(history_days)
    econ = [r for r in records if r.kind == "economic"]
    history_dates = [start_date + timedelta(days=i) for i in range(history_days)]
    by_region_key: dict[tuple[str, str], dict[date, object]] = {}
    for rec in econ:
        for key, value in rec.payload.items():
            by_region_key.setdefault((rec.region, key), {})[rec.date] = value
    for (region, key), per_date in sorted(by_region_key.items()):
        label = _ECONOMIC_LABELS.get(key, key)
        series_vals = [per_date[d] for d in history_dates if d in per_date]
        if series_vals and len(series_vals) == history_days:
            joined = ",".join(_render_number(v) for v in series_vals)
            fragments.append(
                SupplementaryFragment(
                    "economic", start_date, "history_start",
                    f"The Daily {label} of {region_display(region)} during {coverage} was {joined}.",
                    {key: series_vals},
                )
            )
        if pred_date in per_date:
            fragments.append(
                SupplementaryFragment(
                    "economic", pred_date, "prediction",
                    f"The Daily {label} of {region_display(region)} on the prediction date is "
                    f"{_render_number(per_date[pred_date])}.",
                    {key: per_date[pred_date]},
                )
            )
    return fragments


def _coverage_phrase(days: int) -> str:
    if days == 7:
        return "the last week"
    if days == 1:
        return "the last day"
    return f"the last {days} days"
