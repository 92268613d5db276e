"""Deterministic construction of every prompt used by the pipeline.

Covers the four forecasting prompt modes, the reasoning agent's three-phase
bundle, the evaluation agent's four-phase bundle, and the consolidation
bundle. Multi-line prompt bodies live in ``templates/`` as text files with
``{{name}}`` substitution slots; builders are byte-deterministic.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from enum import Enum
from importlib import resources

from .corpus import NewsItem, SupplementaryFragment
from .domains import DomainProfile, profile_for
from .errors import ModeError, PromptError
from .series import ForecastTask, FormatPolicy, TimeSeries, serialize_digits

_PLACEHOLDER = re.compile(r"\{\{([a-z_]+)\}\}")
_ANGLE_TOKEN = re.compile(r"<[a-z_]+>")

NEWS_TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
DEFAULT_NEWS_CAP = 8


class PromptMode(str, Enum):
    NUMERIC_ONLY = "numeric_only"
    TEXTUAL_NO_NEWS = "textual_no_news"
    TEXTUAL_UNFILTERED_NEWS = "textual_unfiltered_news"
    TEXTUAL_FILTERED_NEWS = "textual_filtered_news"

    @property
    def wants_news(self) -> bool:
        return self in (PromptMode.TEXTUAL_UNFILTERED_NEWS, PromptMode.TEXTUAL_FILTERED_NEWS)

    @property
    def uses_agent(self) -> bool:
        return self is PromptMode.TEXTUAL_FILTERED_NEWS


class Purpose(str, Enum):
    REASONING = "reasoning"
    EVALUATION = "evaluation"
    CONSOLIDATION = "consolidation"


@dataclass(frozen=True)
class TrainingExample:
    """The instruction/input/output triple; output is empty at inference time."""

    instruction: str
    input: str
    output: str = ""

    def as_dict(self) -> dict:
        return {"instruction": self.instruction, "input": self.input, "output": self.output}


@dataclass(frozen=True)
class PromptBundle:
    """An ordered (role, content) message list for one agent interaction."""

    messages: tuple[tuple[str, str], ...]
    purpose: Purpose

    def __post_init__(self):
        for role, content in self.messages:
            if role not in ("system", "user"):
                raise PromptError(f"bad role {role!r}")
            leftover = _ANGLE_TOKEN.search(content)
            if leftover:
                raise PromptError(f"unsubstituted placeholder {leftover.group(0)!r}")

    @property
    def user_messages(self) -> list[str]:
        return [c for r, c in self.messages if r == "user"]

    def text(self) -> str:
        return "\n\n".join(c for _, c in self.messages)


def load_template(name: str) -> str:
    return resources.files("newscast.templates").joinpath(f"{name}.txt").read_text("utf-8")


def render_template(name: str, **subs: str) -> str:
    """Substitute ``{{key}}`` slots; any leftover slot is a PromptError."""
    text = load_template(name)

    def repl(m: re.Match) -> str:
        key = m.group(1)
        if key not in subs:
            raise PromptError(f"template {name!r} needs {{{{{key}}}}}")
        return subs[key]

    out = _PLACEHOLDER.sub(repl, text)
    if _PLACEHOLDER.search(out):
        raise PromptError(f"template {name!r} still holds a placeholder after substitution")
    return out.rstrip("\n")


def _compact_date(d: date) -> str:
    """Dates inside forecast prompts carry no zero padding (e.g. 2019-11-9)."""
    return f"{d.year}-{d.month}-{d.day}"


def _span_phrase(granularity: timedelta, points: int) -> str:
    span = granularity * points
    if span % timedelta(days=1) == timedelta(0):
        days = span // timedelta(days=1)
        return "1 day" if days == 1 else f"{days} days"
    if span % timedelta(hours=1) == timedelta(0):
        hours = span // timedelta(hours=1)
        return "1 hour" if hours == 1 else f"{hours} hours"
    minutes = int(span.total_seconds() // 60)
    return f"{minutes} minutes"


def _granularity_phrase(granularity: timedelta) -> str:
    return _span_phrase(granularity, 1)


def _horizon_phrase(granularity: timedelta, horizon: int) -> str:
    phrase = _span_phrase(granularity, horizon)
    # "1 day" reads as "the next day", multiples as "the next 7 days"
    return "day" if phrase == "1 day" else phrase


def _calendar_flags(
    d: date, fragments: list[SupplementaryFragment], role: str
) -> tuple[str, str]:
    for frag in fragments:
        if frag.kind == "calendar" and frag.role == role:
            weekend = frag.payload.get("is_weekend", d.weekday() >= 5)
            holiday = frag.payload.get("is_public_holiday", False)
            break
    else:
        weekend, holiday = d.weekday() >= 5, False
    day_type = "Weekend" if weekend else "Weekday"
    holiday_phrase = "a public holiday" if holiday else "not a public holiday"
    return day_type, holiday_phrase


def _weather_payload(fragments: list[SupplementaryFragment], role: str) -> dict | None:
    for frag in fragments:
        if frag.kind == "weather" and frag.role == role:
            return frag.payload
    return None


def build_forecast_example(
    task: ForecastTask,
    series: TimeSeries,
    supplementary: list[SupplementaryFragment],
    news_sentences: list[tuple[datetime, str]],
    mode: PromptMode,
    target: list[float] | None = None,
    profile: DomainProfile | None = None,
    policy: FormatPolicy | None = None,
) -> TrainingExample:
    """Build one instruction/input/output triple for ``task`` in ``mode``."""
    profile = profile or profile_for(series.domain)
    policy = policy or profile.policy
    if news_sentences and not mode.wants_news:
        raise ModeError(f"news sentences supplied in mode {mode.value}")
    if target is not None and len(target) != task.horizon:
        raise PromptError(f"target has {len(target)} values, horizon is {task.horizon}")

    history = series.history_values(task)
    digits = serialize_digits(history, policy)
    start_date = series.timestamp_at(task.history_start).date()
    pred_date = task.forecast_start.date()
    day1, hol1 = _calendar_flags(start_date, supplementary, "history_start")
    day2, hol2 = _calendar_flags(pred_date, supplementary, "prediction")

    if mode is PromptMode.NUMERIC_ONLY:
        instruction = digits
        input_text = _numeric_input(task, supplementary, (day1, hol1), (day2, hol2),
                                    _compact_date(start_date), _compact_date(pred_date))
    else:
        instruction = f"The historical {profile.series_noun} data is: {digits}"
        sentences = [
            f"Based on the historical {profile.series_noun} data, please predict the "
            f"{profile.target_noun} in the next {_horizon_phrase(series.granularity, task.horizon)}.",
            f"The region for prediction is {task.region}.",
        ]
        sentences += _background_sentences(
            task, series, supplementary, (day1, hol1), (day2, hol2)
        )
        input_text = " ".join(sentences)
        if news_sentences:
            ordered = sorted(news_sentences, key=lambda p: p[0])
            block = "".join(
                f"On {ts.strftime(NEWS_TIME_FORMAT)}, the news can change the time series "
                f"fluctuation that {text} "
                for ts, text in ordered
            )
            input_text = f"{input_text} {block}"

    output = serialize_digits(target, policy) if target is not None else ""
    return TrainingExample(instruction=instruction, input=input_text, output=output)


def _background_sentences(
    task: ForecastTask,
    series: TimeSeries,
    supplementary: list[SupplementaryFragment],
    start_flags: tuple[str, str],
    pred_flags: tuple[str, str],
) -> list[str]:
    start_date = series.timestamp_at(task.history_start).date()
    pred_date = task.forecast_start.date()
    sentences = [
        f"The start date of historical data was on {_compact_date(start_date)} that is "
        f"{start_flags[0]}, and it is {start_flags[1]}.",
        f"The data frequency is {_granularity_phrase(series.granularity)} per point.",
        f"Historical data covers {_span_phrase(series.granularity, task.input_len)}.",
        f"The date of prediction is on {_compact_date(pred_date)} that is "
        f"{pred_flags[0]}, and it is {pred_flags[1]}.",
    ]
    for frag in supplementary:
        if frag.kind == "weather" and frag.role == "history_start":
            sentences.append(frag.text)
    for frag in supplementary:
        if frag.kind == "weather" and frag.role == "prediction":
            sentences.append(frag.text)
    for frag in supplementary:
        if frag.kind == "economic":
            sentences.append(frag.text)
    return sentences


def build_background(
    task: ForecastTask,
    series: TimeSeries,
    supplementary: list[SupplementaryFragment],
) -> str:
    """The evaluation agent's background block: dates, frequency and context facts."""
    start_date = series.timestamp_at(task.history_start).date()
    pred_date = task.forecast_start.date()
    day1, hol1 = _calendar_flags(start_date, supplementary, "history_start")
    day2, hol2 = _calendar_flags(pred_date, supplementary, "prediction")
    return " ".join(_background_sentences(task, series, supplementary, (day1, hol1), (day2, hol2)))


# A.2-style compact numeric field list. The semicolon spacing is irregular but
# fixed by the fixture; weather values render raw.
_NUMERIC_WITH_WEATHER = (
    "{region}; {d1}; {day1}; {hol1}; {d2}; {day2}; {hol2};"
    "{hmin};{hmax}; {hhum};{hprs}; {fmin}; {fmax}; {fhum}; {fprs}."
)
_NUMERIC_BARE = "{region}; {d1}; {day1}; {hol1}; {d2}; {day2}; {hol2}."


def _numeric_input(
    task: ForecastTask,
    supplementary: list[SupplementaryFragment],
    start_flags: tuple[str, str],
    pred_flags: tuple[str, str],
    d1: str,
    d2: str,
) -> str:
    hist_weather = _weather_payload(supplementary, "history_start")
    pred_weather = _weather_payload(supplementary, "prediction")
    common = dict(
        region=task.region, d1=d1, day1=start_flags[0], hol1=start_flags[1],
        d2=d2, day2=pred_flags[0], hol2=pred_flags[1],
    )
    if hist_weather and pred_weather:
        return _NUMERIC_WITH_WEATHER.format(
            **common,
            hmin=hist_weather.get("min_temp"), hmax=hist_weather.get("max_temp"),
            hhum=hist_weather.get("humidity"), hprs=hist_weather.get("pressure"),
            fmin=pred_weather.get("min_temp"), fmax=pred_weather.get("max_temp"),
            fhum=pred_weather.get("humidity"), fprs=pred_weather.get("pressure"),
        )
    return _NUMERIC_BARE.format(**common)


def candidates_as_json(candidates: list[NewsItem]) -> str:
    payload = []
    for item in candidates:
        entry: dict = {
            "news": item.title,
            "region": item.region,
            "time": item.published_at.strftime(NEWS_TIME_FORMAT),
        }
        if item.summary:
            entry["summary"] = item.summary
        payload.append(entry)
    return json.dumps(payload, ensure_ascii=False)


def default_selection_schema(profile: DomainProfile) -> str:
    return render_template("selection_schema", category_noun=profile.category_noun)


def selection_category_keys(profile: DomainProfile) -> dict[str, str]:
    return {
        "long_term": f"Long-Term Effect on Future {profile.category_noun}",
        "short_term": f"Short-Term Effect on Future {profile.category_noun}",
        "real_time": f"Real-Time Direct Effect on Today's {profile.category_noun}",
    }


def _system_message() -> tuple[str, str]:
    return ("system", load_template("agent_system").strip())


def build_reasoning_prompts(
    domain: str,
    logic_text: str,
    prediction_date: date,
    candidates: list[NewsItem],
    schema_example: str | None = None,
) -> PromptBundle:
    """Three-phase news selection bundle: logic, instruction, candidates+format."""
    if not logic_text.strip():
        raise PromptError("reasoning logic must be nonempty")
    profile = profile_for(domain)
    schema = schema_example or default_selection_schema(profile)
    messages = (
        _system_message(),
        ("user", render_template("reasoning_logic", logic=logic_text)),
        ("user", render_template(
            "reasoning_select",
            prediction_date=prediction_date.isoformat(),
            target_noun=profile.target_noun,
            region_list="/".join(profile.regions),
        )),
        ("user", render_template(
            "reasoning_format",
            all_news=candidates_as_json(candidates),
            schema_example=schema,
        )),
    )
    return PromptBundle(messages=messages, purpose=Purpose.REASONING)


def build_evaluation_prompts(
    background: str,
    selected_news: str,
    all_news: str,
    actual: list[float],
    errors_vec: list[float],
    prediction_date: date,
    domain: str = "electricity",
    policy: FormatPolicy | None = None,
) -> PromptBundle:
    """Four-phase prediction review bundle mirroring the evaluation fixtures."""
    if len(actual) != len(errors_vec):
        raise PromptError(f"{len(actual)} actuals vs {len(errors_vec)} errors")
    profile = profile_for(domain)
    policy = policy or profile.policy
    extra = f" {profile.eval_extra}" if profile.eval_extra else ""
    messages = (
        _system_message(),
        ("user", render_template(
            "evaluation_intro", eval_subject=profile.eval_subject, eval_extra=extra
        )),
        ("user", render_template("evaluation_background", background=background)),
        ("user", render_template(
            "evaluation_compare",
            selected_news=selected_news,
            all_news=all_news,
            actual_values=serialize_digits(actual, policy),
            errors=serialize_digits(errors_vec, policy),
            prediction_date=prediction_date.isoformat(),
        )),
        ("user", render_template("evaluation_update", update_subject=profile.update_subject)),
    )
    return PromptBundle(messages=messages, purpose=Purpose.EVALUATION)


def build_consolidation_prompts(
    updates: list[str],
    current_logic_text: str,
    domain: str = "electricity",
) -> PromptBundle:
    """Two-message final merge bundle: polish all updates, rephrase current logic."""
    if not updates:
        raise PromptError("no logic updates to consolidate")
    profile = profile_for(domain)
    messages = (
        _system_message(),
        ("user", render_template(
            "consolidation_polish",
            influence_phrase=profile.influence_phrase,
            updates="\n\n".join(updates),
        )),
        ("user", render_template(
            "consolidation_rephrase", current_logic=current_logic_text
        )),
    )
    return PromptBundle(messages=messages, purpose=Purpose.CONSOLIDATION)


def build_open_logic_prompt(domain: str) -> PromptBundle:
    """Open-ended ask used when no seed logic exists for a domain."""
    profile = profile_for(domain)
    messages = (
        _system_message(),
        ("user", render_template("open_logic", target_noun=profile.target_noun)),
    )
    return PromptBundle(messages=messages, purpose=Purpose.REASONING)


def seed_logic_text(domain: str) -> str | None:
    """The bundled per-domain seed selection logic, if one ships for ``domain``."""
    try:
        return load_template(f"seed_{domain}").rstrip("\n")
    except FileNotFoundError:
        return None


def cap_news_sentences(
    sentences: list[tuple[datetime, str, str]],
    cap: int = DEFAULT_NEWS_CAP,
) -> list[tuple[datetime, str]]:
    """Bound news per prompt: effect-category priority, then recency.

    Input triples are (timestamp, text, category) with category one of
    real_time/short_term/long_term/"" (unfiltered). Output keeps chronological
    order for rendering.
    """
    priority = {"real_time": 0, "short_term": 1, "long_term": 2, "": 3}
    ranked = sorted(sentences, key=lambda s: (priority.get(s[2], 3), -s[0].timestamp()))
    kept = ranked[: max(cap, 0)]
    kept.sort(key=lambda s: s[0])
    return [(ts, text) for ts, text, _ in kept]
