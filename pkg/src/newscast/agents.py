"""Reasoning, evaluation and consolidation agents over the model-client contract.

Replies are normalized before parsing: markdown code fences are stripped, then
the outermost JSON object is extracted from any surrounding prose. Malformed
replies trigger repair re-asks up to the client's max_retries.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field, replace
from datetime import datetime

from .clients import wire_messages
from .corpus import NewsItem, parse_timestamp
from .errors import AgentParseError
from .prompts import (
    PromptBundle,
    build_consolidation_prompts,
    build_evaluation_prompts,
    build_open_logic_prompt,
    build_reasoning_prompts,
    seed_logic_text,
)
from .series import ForecastTask

REPAIR_INSTRUCTION = "Remember to only give the JSON output, and make it the valid JSON format."

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)
_NO_REPLY = re.compile(r"^\s*no[.!]?\s*$", re.I)

CATEGORIES = ("long_term", "short_term", "real_time")
_CATEGORY_PREFIX = {"long-term": "long_term", "short-term": "short_term", "real-time": "real_time"}


@dataclass(frozen=True)
class ReasoningLogic:
    """Versioned text of the news-selection logic."""

    version: int
    text: str
    provenance: str  # default_seed | agent_generated | user_supplied | consolidated
    parent_version: int | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("logic text must be nonempty")
        if self.version < 1:
            raise ValueError("version must be >= 1")


@dataclass(frozen=True)
class SelectedNews:
    news: str
    region: str
    time_text: str
    rationality: str
    category: str
    time: datetime | None = None
    source_ref: str | None = None

    def as_dict(self) -> dict:
        return {
            "news": self.news,
            "region": self.region,
            "time": self.time_text,
            "rationality": self.rationality,
        }


@dataclass(frozen=True)
class SelectionResult:
    long_term: tuple[SelectedNews, ...] = ()
    short_term: tuple[SelectedNews, ...] = ()
    real_time: tuple[SelectedNews, ...] = ()
    retry_count: int = field(default=0, compare=False)

    def entries(self) -> list[SelectedNews]:
        return [*self.long_term, *self.short_term, *self.real_time]

    def counts(self) -> dict[str, int]:
        return {
            "long_term": len(self.long_term),
            "short_term": len(self.short_term),
            "real_time": len(self.real_time),
        }

    def to_json(self, category_keys: dict[str, str]) -> str:
        payload = {
            category_keys["long_term"]: [e.as_dict() for e in self.long_term],
            category_keys["short_term"]: [e.as_dict() for e in self.short_term],
            category_keys["real_time"]: [e.as_dict() for e in self.real_time],
        }
        return json.dumps(payload, ensure_ascii=False, indent=2)


@dataclass(frozen=True)
class MissedNewsEntry:
    missed_news: str
    occurred_at: str
    reasoning: str
    occurred_time: datetime | None = None


@dataclass(frozen=True)
class MissedNewsReport:
    entries: tuple[MissedNewsEntry, ...]
    raw: str


def extract_json(text: str):
    """Pull a JSON value out of a possibly fenced / prose-wrapped reply."""
    candidates = []
    fenced = _FENCE.findall(text)
    candidates.extend(fenced)
    candidates.append(text)
    for start, end in (("{", "}"), ("[", "]")):
        lo, hi = text.find(start), text.rfind(end)
        if 0 <= lo < hi:
            candidates.append(text[lo : hi + 1])
    for candidate in candidates:
        try:
            return json.loads(candidate)
        except json.JSONDecodeError:
            continue
    raise ValueError("no JSON value found in reply")


def _category_for_key(key: str) -> str | None:
    lowered = key.lower().lstrip(string.punctuation + " ")
    for prefix, category in _CATEGORY_PREFIX.items():
        if lowered.startswith(prefix):
            return category
    return None


def _coerce_entries(value, category: str) -> list[SelectedNews]:
    if value is None:
        return []
    if isinstance(value, str):
        # "no" (or any bare refusal) means an empty category
        return []
    if isinstance(value, dict):
        value = [value]
    out = []
    for raw in value:
        if not isinstance(raw, dict):
            continue
        news = str(raw.get("news", "")).strip()
        rationality = str(raw.get("rationality", "")).strip()
        if not news or not rationality:
            raise ValueError(f"selection entry missing news/rationality in {category}")
        time_text = str(raw.get("time", "")).strip()
        parsed_time = None
        if time_text:
            try:
                parsed_time = parse_timestamp(time_text)
            except ValueError:
                parsed_time = None
        out.append(
            SelectedNews(
                news=news,
                region=str(raw.get("region", "")).strip(),
                time_text=time_text,
                rationality=rationality,
                category=category,
                time=parsed_time,
            )
        )
    return out


def parse_selection(raw_reply: str) -> SelectionResult:
    """Parse an agent selection reply into categorized entries.

    Raises ValueError when the reply holds no usable JSON; a bare "no" reply is
    a valid empty selection.
    """
    if _NO_REPLY.match(raw_reply) or re.match(r"^\s*no[.!,]?\s", raw_reply, re.I):
        return SelectionResult()
    data = extract_json(raw_reply)
    if isinstance(data, list):
        if len(data) == 1 and isinstance(data[0], dict):
            data = data[0]
        else:
            raise ValueError("selection reply is a list, not a categorized object")
    if not isinstance(data, dict):
        raise ValueError("selection reply is not a JSON object")
    buckets: dict[str, list[SelectedNews]] = {c: [] for c in CATEGORIES}
    matched_any = False
    for key, value in data.items():
        category = _category_for_key(str(key))
        if category is None:
            continue
        matched_any = True
        buckets[category].extend(_coerce_entries(value, category))
    if not matched_any:
        raise ValueError("no effect-category keys found in selection reply")
    return SelectionResult(
        long_term=tuple(buckets["long_term"]),
        short_term=tuple(buckets["short_term"]),
        real_time=tuple(buckets["real_time"]),
    )


_WORD = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> set[str]:
    return set(_WORD.findall(text.lower()))


def match_source(entry_text: str, candidates: list[NewsItem]) -> str | None:
    """Back-link a selection to a candidate by normalized containment or
    >= 0.6 token overlap (against title, then summary)."""
    sel_norm = " ".join(_WORD.findall(entry_text.lower()))
    sel_tokens = _tokens(entry_text)
    best: tuple[float, str] | None = None
    for item in candidates:
        for text in filter(None, (item.title, item.summary)):
            norm = " ".join(_WORD.findall(text.lower()))
            if not norm:
                continue
            if norm in sel_norm or sel_norm in norm:
                return item.id
            tokens = _tokens(text)
            denom = min(len(tokens), len(sel_tokens)) or 1
            overlap = len(tokens & sel_tokens) / denom
            if overlap >= 0.6 and (best is None or overlap > best[0]):
                best = (overlap, item.id)
    return best[1] if best else None


def link_sources(result: SelectionResult, candidates: list[NewsItem]) -> SelectionResult:
    def link(entries):
        return tuple(
            replace(e, source_ref=match_source(e.news, candidates)) for e in entries
        )

    return replace(
        result,
        long_term=link(result.long_term),
        short_term=link(result.short_term),
        real_time=link(result.real_time),
    )


def _converse(client, bundle: PromptBundle, extra: list[tuple[str, str]] | None = None) -> str:
    messages = list(bundle.messages) + list(extra or [])
    return client.complete(wire_messages(messages), purpose=bundle.purpose.value)


def _max_retries(client) -> int:
    config = getattr(client, "config", None)
    return getattr(config, "max_retries", 2)


def run_reasoning_agent(
    logic: ReasoningLogic,
    task: ForecastTask,
    candidates: list[NewsItem],
    client,
    domain: str,
    schema_example: str | None = None,
) -> SelectionResult:
    """Three-phase selection call with JSON repair retries and source back-links."""
    bundle = build_reasoning_prompts(
        domain, logic.text, task.forecast_start.date(), candidates, schema_example
    )
    extra: list[tuple[str, str]] = []
    retries = _max_retries(client)
    last_reply = ""
    for attempt in range(retries + 1):
        last_reply = _converse(client, bundle, extra)
        try:
            result = parse_selection(last_reply)
        except ValueError:
            extra += [("assistant", last_reply), ("user", REPAIR_INSTRUCTION)]
            continue
        return replace(link_sources(result, candidates), retry_count=attempt)
    raise AgentParseError(
        f"selection reply unparseable after {retries} retries", raw_reply=last_reply
    )


_MISSED_STRICT = re.compile(
    r"the missed news is\s*(?P<news>.+?),\s*occurred at\s*(?P<time>.+?),\s*"
    r"the possible reasoning is\s*(?P<why>.+?)(?=(?:the missed news is)|\Z)",
    re.I | re.S,
)
_MISSED_BLOCK = re.compile(
    r"missed news(?:\s+summary)?\s*:\s*[\"“']?(?P<news>.+?)[\"”']?\s*$",
    re.I | re.M,
)
_TIME_LABEL = re.compile(
    r"(?:occurred at|publication time)\s*:?\s*[\"“']?(?P<time>[0-9][0-9:\- ]+[0-9])", re.I
)
_WHY_LABEL = re.compile(
    r"possible reasoning\s*(?:is|:)\s*(?P<why>.+?)(?=\n\s*\n|\n\s*[-*\d]|\Z)", re.I | re.S
)


def parse_missed_news(raw: str) -> MissedNewsReport:
    """Tolerant extraction of missed-news entries; raw text is always kept."""
    entries: list[MissedNewsEntry] = []
    for m in _MISSED_STRICT.finditer(raw):
        entries.append(_entry(m.group("news"), m.group("time"), m.group("why")))
    if not entries:
        block_matches = list(_MISSED_BLOCK.finditer(raw))
        for i, m in enumerate(block_matches):
            segment_end = (
                block_matches[i + 1].start() if i + 1 < len(block_matches) else len(raw)
            )
            segment = raw[m.end() : segment_end]
            time_m = _TIME_LABEL.search(segment)
            why_m = _WHY_LABEL.search(segment)
            entries.append(
                _entry(
                    m.group("news"),
                    time_m.group("time") if time_m else "",
                    why_m.group("why").strip() if why_m else "",
                )
            )
    return MissedNewsReport(entries=tuple(entries), raw=raw)


def _entry(news: str, time_text: str, why: str) -> MissedNewsEntry:
    news = news.strip().strip("\"'“”")
    time_text = time_text.strip().rstrip(".")
    parsed = None
    if time_text:
        try:
            parsed = parse_timestamp(time_text)
        except ValueError:
            parsed = None
    return MissedNewsEntry(
        missed_news=news, occurred_at=time_text, reasoning=why.strip(), occurred_time=parsed
    )


def run_evaluation_agent(
    background: str,
    selected_news: str,
    all_news: str,
    actual: list[float],
    predicted: list[float],
    task: ForecastTask,
    client,
    domain: str,
) -> tuple[MissedNewsReport, str]:
    """Review one validation window: find missed news, then derive updated logic."""
    if len(actual) != len(predicted):
        raise ValueError(f"{len(actual)} actuals vs {len(predicted)} predictions")
    errors_vec = [p - a for a, p in zip(actual, predicted)]
    bundle = build_evaluation_prompts(
        background=background,
        selected_news=selected_news,
        all_news=all_news,
        actual=actual,
        errors_vec=errors_vec,
        prediction_date=task.forecast_start.date(),
        domain=domain,
    )
    # messages[-1] is the logic-derivation ask; it goes out after the agent's
    # missed-news reply so its "identified above" reference resolves.
    head = PromptBundle(messages=bundle.messages[:-1], purpose=bundle.purpose)
    missed_reply = _converse(client, head)
    report = parse_missed_news(missed_reply)
    follow_up = [("assistant", missed_reply), bundle.messages[-1]]
    updated_logic_text = _converse(client, head, follow_up)
    return report, updated_logic_text


def consolidate_logic(
    updates: list[str],
    current: ReasoningLogic,
    client,
    domain: str,
) -> ReasoningLogic:
    """Single-call merge of all collected updates into the definitive logic."""
    bundle = build_consolidation_prompts(updates, current.text, domain)
    reply = _converse(client, bundle)
    return ReasoningLogic(
        version=current.version + 1,
        text=reply,
        provenance="consolidated",
        parent_version=current.version,
    )


def generate_default_logic(domain: str, client=None, mode: str = "seed") -> ReasoningLogic:
    """Seeded per-domain logic, or an agent-written one for unknown domains."""
    if mode not in ("seed", "agent"):
        raise ValueError(f"unknown logic mode {mode!r}")
    if mode == "seed":
        text = seed_logic_text(domain)
        if text is not None:
            return ReasoningLogic(version=1, text=text, provenance="default_seed")
        mode = "agent"  # declared fallback for domains without a bundled seed
    if client is None:
        raise ValueError("agent-generated logic needs a model client")
    reply = _converse(client, build_open_logic_prompt(domain if domain in _known_domains() else "custom"))
    return ReasoningLogic(version=1, text=reply, provenance="agent_generated")


def _known_domains() -> set[str]:
    from .domains import PROFILES

    return set(PROFILES)


def advance_logic(current: ReasoningLogic, updates: list[str], iteration: int) -> ReasoningLogic:
    """Fold an iteration's collected updates into the next logic version."""
    if not updates:
        return current
    addition = "\n\n".join(updates)
    text = f"{current.text}\n\nAdditional selection rules (iteration {iteration}):\n{addition}"
    return ReasoningLogic(
        version=current.version + 1,
        text=text,
        provenance="agent_generated",
        parent_version=current.version,
    )
