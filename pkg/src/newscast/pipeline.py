"""The iterative forecasting loop: select news, pair, build datasets, forecast,
score, reflect, and consolidate — plus a synthetic scenario generator and
scripted agents that make the whole loop verifiable offline.

Iterations are strictly sequential; state mutates only at iteration
boundaries on the single owning runner.
"""

from __future__ import annotations

import hashlib
import json
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .agents import (
    MissedNewsEntry,
    ReasoningLogic,
    SelectionResult,
    advance_logic,
    consolidate_logic,
    generate_default_logic,
    run_evaluation_agent,
    run_reasoning_agent,
)
from .clients import ModelClientConfig
from .corpus import NewsItem, SupplementaryRecord, prepair, render_supplementary
from .domains import default_lookback, profile_for
from .errors import ReportError, ScenarioError, StageError
from .forecaster import ForecastBackendConfig, emit_dataset, forecast
from .prompts import (
    PromptMode,
    TrainingExample,
    build_background,
    build_forecast_example,
    candidates_as_json,
    cap_news_sentences,
    selection_category_keys,
)
from .series import (
    ForecastTask,
    MetricReport,
    TimeSeries,
    make_windows,
    pool_metrics,
    split_tasks,
)

UTC = timezone.utc


@dataclass
class PipelineConfig:
    domain: str
    prompt_mode: PromptMode = PromptMode.TEXTUAL_FILTERED_NEWS
    max_iterations: int = 4
    validation_fraction: float = 0.2
    validation_cap: int = 32
    validation_resample: bool = True
    lookback: timedelta | None = None
    news_cap: int = 8
    include_international: bool = True
    input_len: int | None = None
    horizon: int | None = None
    stride: int | None = None
    seed: int = 0
    logic_mode: str = "seed"
    training_hook: str | None = None
    out_dir: Path | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        profile = profile_for(self.domain)
        if self.input_len is None:
            self.input_len = profile.input_len
        if self.horizon is None:
            self.horizon = profile.horizon
        if self.stride is None:
            self.stride = self.horizon  # non-overlapping windows by default
        if self.lookback is None:
            self.lookback = default_lookback(profile)


@dataclass(frozen=True)
class IterationReport:
    iteration: int
    logic_version: int
    selected_counts: dict
    dataset_size: int
    metrics: MetricReport | None
    validation_skipped: bool
    missed_news: tuple[MissedNewsEntry, ...]
    updated_logic_text: str
    wall_time: float

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "logic_version": self.logic_version,
            "selected_counts": dict(self.selected_counts),
            "dataset_size": self.dataset_size,
            "metrics": self.metrics.as_dict() if self.metrics else None,
            "validation_skipped": self.validation_skipped,
            "missed_news": [
                {"missed_news": e.missed_news, "occurred_at": e.occurred_at, "reasoning": e.reasoning}
                for e in self.missed_news
            ],
            "updated_logic_text": self.updated_logic_text,
            "wall_time": self.wall_time,
        }


@dataclass(frozen=True)
class LeakageRecord:
    task_id: str
    news_id: str
    published_at: datetime
    forecast_start: datetime
    kind: str  # paired | selected


@dataclass(frozen=True)
class WindowRecord:
    iteration: int
    mode: str
    task_id: str
    forecast_start: datetime
    actual: tuple[float, ...]
    predicted: tuple[float, ...]


@dataclass
class RunState:
    series_by_id: dict[str, TimeSeries]
    news: list[NewsItem]
    supplementary: list[SupplementaryRecord]
    tasks: list[ForecastTask]
    logic: ReasoningLogic
    agent_client: object
    backend: ForecastBackendConfig
    iteration: int = 0
    collected_updates: list[str] = field(default_factory=list)
    leakage_ledger: list[LeakageRecord] = field(default_factory=list)
    window_records: list[WindowRecord] = field(default_factory=list)
    reports: list[IterationReport] = field(default_factory=list)

    def series_for(self, task: ForecastTask) -> TimeSeries:
        return self.series_by_id[task.series_id]


def build_state(
    series: list[TimeSeries],
    news: list[NewsItem],
    supplementary: list[SupplementaryRecord],
    config: PipelineConfig,
    agent_client,
    backend: ForecastBackendConfig,
    logic: ReasoningLogic | None = None,
) -> RunState:
    tasks: list[ForecastTask] = []
    for s in series:
        tasks.extend(make_windows(s, config.input_len, config.horizon, config.stride))
    if logic is None:
        logic = generate_default_logic(config.domain, agent_client, config.logic_mode)
    return RunState(
        series_by_id={s.id: s for s in series},
        news=list(news),
        supplementary=list(supplementary),
        tasks=tasks,
        logic=logic,
        agent_client=agent_client,
        backend=backend,
    )


def _history_days(task: ForecastTask, series: TimeSeries) -> int:
    span = series.granularity * task.input_len
    return max(int(span / timedelta(days=1)), 1)


def _fragments_for(state: RunState, task: ForecastTask):
    series = state.series_for(task)
    start_date = series.timestamp_at(task.history_start).date()
    records = [
        r
        for r in state.supplementary
        if r.kind == "economic" or r.region == task.region
    ]
    return render_supplementary(
        records, task, series_start=start_date, history_days=_history_days(task, series)
    )


def _select_for_task(
    state: RunState, task: ForecastTask, config: PipelineConfig
) -> tuple[list[NewsItem], SelectionResult | None]:
    """Pre-pair candidates and, in filtered mode, run the reasoning agent."""
    if not config.prompt_mode.wants_news:
        return [], None
    candidate_set = prepair(state.news, task, config.lookback, config.include_international)
    by_id = {n.id: n for n in state.news}
    candidates = [by_id[i] for i in candidate_set.items]
    for item in candidates:
        state.leakage_ledger.append(
            LeakageRecord(task.id, item.id, item.published_at, task.forecast_start, "paired")
        )
    if config.prompt_mode is not PromptMode.TEXTUAL_FILTERED_NEWS:
        return candidates, None
    selection = run_reasoning_agent(
        state.logic, task, candidates, state.agent_client, config.domain
    )
    return candidates, selection


def _news_sentences(
    task: ForecastTask,
    candidates: list[NewsItem],
    selection: SelectionResult | None,
    config: PipelineConfig,
    state: RunState,
) -> list[tuple[datetime, str]]:
    if config.prompt_mode in (PromptMode.NUMERIC_ONLY, PromptMode.TEXTUAL_NO_NEWS):
        return []
    triples: list[tuple[datetime, str, str]] = []
    by_id = {n.id: n for n in candidates}
    if config.prompt_mode is PromptMode.TEXTUAL_UNFILTERED_NEWS:
        for item in candidates:
            text = item.title if not item.summary else f"{item.title} {item.summary}"
            triples.append((item.published_at, text, ""))
    else:
        for entry in selection.entries() if selection else []:
            source = by_id.get(entry.source_ref) if entry.source_ref else None
            ts = source.published_at if source else entry.time
            if ts is None or ts >= task.forecast_start:
                continue  # unusable or acausal selections never reach a prompt
            state.leakage_ledger.append(
                LeakageRecord(
                    task.id, entry.source_ref or f"text:{entry.news[:40]}",
                    ts, task.forecast_start, "selected",
                )
            )
            triples.append((ts, entry.rationality or entry.news, entry.category))
    return cap_news_sentences(triples, config.news_cap)


def _accumulate_counts(totals: dict, selection: SelectionResult | None):
    if selection is None:
        return
    for key, value in selection.counts().items():
        totals[key] = totals.get(key, 0) + value


def _eval_context_json(state: RunState, task: ForecastTask, config: PipelineConfig) -> str:
    """All news the evaluation agent may inspect: the pre-forecast window plus
    the prediction day itself (retrospective review only)."""
    series = state.series_for(task)
    horizon_end = task.forecast_start + series.granularity * task.horizon
    items = [
        n
        for n in state.news
        if task.forecast_start - config.lookback <= n.published_at < horizon_end
        and (
            n.region == task.region
            or (config.include_international and n.region == "International")
        )
    ]
    items.sort(key=lambda n: (n.published_at, n.id))
    return candidates_as_json(items)


def run_iteration(state: RunState, config: PipelineConfig) -> IterationReport:
    """One select -> pair -> build -> train -> validate -> reflect cycle."""
    started = time.perf_counter()
    state.iteration += 1
    iteration = state.iteration
    logic_version = state.logic.version
    profile = profile_for(config.domain)
    keys = selection_category_keys(profile)

    def stage(name, fn):
        try:
            return fn()
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e)

    split_seed = config.seed + iteration if config.validation_resample else config.seed
    train_tasks, val_tasks = stage(
        "split",
        lambda: split_tasks(
            state.tasks, config.validation_fraction, split_seed, config.validation_cap
        ),
    )

    selections: dict[str, SelectionResult | None] = {}
    candidates_by_task: dict[str, list[NewsItem]] = {}
    counts: dict[str, int] = {}

    def select_all():
        for task in [*train_tasks, *val_tasks]:
            candidates, selection = _select_for_task(state, task, config)
            candidates_by_task[task.id] = candidates
            selections[task.id] = selection
            _accumulate_counts(counts, selection)

    stage("select", select_all)

    train_examples: list[TrainingExample] = []
    val_examples: dict[str, TrainingExample] = {}

    def build_all():
        for task in train_tasks:
            series = state.series_for(task)
            sentences = _news_sentences(
                task, candidates_by_task[task.id], selections[task.id], config, state
            )
            train_examples.append(
                build_forecast_example(
                    task, series, _fragments_for(state, task), sentences,
                    config.prompt_mode, target=list(series.target_values(task)),
                    profile=profile,
                )
            )
        for task in val_tasks:
            series = state.series_for(task)
            sentences = _news_sentences(
                task, candidates_by_task[task.id], selections[task.id], config, state
            )
            val_examples[task.id] = build_forecast_example(
                task, series, _fragments_for(state, task), sentences,
                config.prompt_mode, profile=profile,
            )

    stage("build", build_all)

    dataset_path = None

    def emit():
        nonlocal dataset_path
        if config.out_dir is None:
            return len(train_examples)
        iter_dir = Path(config.out_dir) / "iterations" / f"iter_{iteration}"
        dataset_path = iter_dir / "dataset.jsonl"
        return emit_dataset(train_examples, dataset_path)

    dataset_size = stage("emit", emit)

    def train_hook():
        if not config.training_hook or dataset_path is None:
            return
        command = config.training_hook.format(
            dataset_path=dataset_path, output_tag=f"iter_{iteration}"
        )
        subprocess.run(shlex.split(command), check=True)

    stage("train", train_hook)

    window_pairs: list[tuple[list[float], list[float]]] = []

    def forecast_validation():
        for task in val_tasks:
            series = state.series_for(task)
            result = forecast(task, val_examples[task.id], state.backend, series=series)
            actual = list(series.target_values(task))
            window_pairs.append((actual, list(result.predicted)))
            state.window_records.append(
                WindowRecord(
                    iteration, config.prompt_mode.value, task.id,
                    task.forecast_start, tuple(actual), result.predicted,
                )
            )

    stage("forecast", forecast_validation)

    metrics = stage(
        "score", lambda: pool_metrics(window_pairs) if window_pairs else None
    )

    missed: list[MissedNewsEntry] = []
    updates: list[str] = []

    def evaluate():
        if config.prompt_mode is not PromptMode.TEXTUAL_FILTERED_NEWS:
            return
        for task, (actual, predicted) in zip(val_tasks, window_pairs):
            series = state.series_for(task)
            selection = selections[task.id]
            background = build_background(task, series, _fragments_for(state, task))
            selected_json = selection.to_json(keys) if selection else "[]"
            report, update_text = run_evaluation_agent(
                background=background,
                selected_news=selected_json,
                all_news=_eval_context_json(state, task, config),
                actual=actual,
                predicted=predicted,
                task=task,
                client=state.agent_client,
                domain=config.domain,
            )
            missed.extend(report.entries)
            if update_text.strip():
                updates.append(update_text.strip())

    stage("evaluate", evaluate)

    state.collected_updates.extend(updates)
    state.logic = advance_logic(state.logic, updates, iteration)

    report = IterationReport(
        iteration=iteration,
        logic_version=logic_version,
        selected_counts=counts,
        dataset_size=dataset_size,
        metrics=metrics,
        validation_skipped=not val_tasks,
        missed_news=tuple(missed),
        updated_logic_text="\n\n".join(updates),
        wall_time=time.perf_counter() - started,
    )
    state.reports.append(report)
    return report


@dataclass(frozen=True)
class LoopResult:
    reports: tuple[IterationReport, ...]
    final_logic: ReasoningLogic
    final_dataset_size: int


def run_loop(state: RunState, config: PipelineConfig) -> LoopResult:
    """Run ``max_iterations`` cycles, then consolidate once and build the final dataset."""
    for _ in range(config.max_iterations):
        run_iteration(state, config)

    if state.collected_updates and config.prompt_mode is PromptMode.TEXTUAL_FILTERED_NEWS:
        state.logic = consolidate_logic(
            state.collected_updates, state.logic, state.agent_client, config.domain
        )

    final_size = _build_final_dataset(state, config)
    return LoopResult(
        reports=tuple(state.reports), final_logic=state.logic, final_dataset_size=final_size
    )


def _build_final_dataset(state: RunState, config: PipelineConfig) -> int:
    profile = profile_for(config.domain)
    examples = []
    for task in state.tasks:
        series = state.series_for(task)
        candidates, selection = _select_for_task(state, task, config)
        sentences = _news_sentences(task, candidates, selection, config, state)
        examples.append(
            build_forecast_example(
                task, series, _fragments_for(state, task), sentences,
                config.prompt_mode, target=list(series.target_values(task)),
                profile=profile,
            )
        )
    if config.out_dir is not None:
        return emit_dataset(examples, Path(config.out_dir) / "final_dataset.jsonl")
    return len(examples)


# ---------------------------------------------------------------------------
# Synthetic scenarios
# ---------------------------------------------------------------------------

SCENARIO_TAGS = ("weather", "policy")


@dataclass(frozen=True)
class ScenarioParams:
    period: int = 48                 # points per day
    days: int = 45
    base_level: float = 1000.0
    seasonal_amp: float = 0.3
    noise_level: float = 0.005
    impact_count: int = 10
    impact_magnitude: tuple[float, float] = (0.10, 0.30)
    impact_duration_days: tuple[int, int] = (1, 1)
    distractor_ratio: float = 0.9
    distractor_noise: float = 0.05   # per-distractor, per-point multiplicative sigma
    signed_impacts: bool = True
    region: str = "NSW"
    domain: str = "electricity"
    tags: tuple[str, ...] = SCENARIO_TAGS


@dataclass(frozen=True)
class Impact:
    news_id: str
    onset: int
    duration: int
    magnitude: float
    tag: str


def _stable_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


@dataclass
class SyntheticScenario:
    """A periodic base signal plus labeled news impacts and distractor news.

    Relevance labels live only in ``impacts``; the news items themselves look
    ordinary, so agents never see the labels.
    """

    series: TimeSeries
    news: list[NewsItem]
    impacts: list[Impact]
    base: np.ndarray
    params: ScenarioParams
    seed: int

    @property
    def relevant_ids(self) -> set[str]:
        return {imp.news_id for imp in self.impacts}

    @property
    def distractors(self) -> list[NewsItem]:
        return [n for n in self.news if n.id not in self.relevant_ids]

    def news_by_id(self, news_id: str) -> NewsItem:
        return next(n for n in self.news if n.id == news_id)

    def impact_multiplier(self, index: int, known_ids: set[str]) -> float:
        multiplier = 1.0
        for imp in self.impacts:
            if imp.news_id in known_ids and imp.onset <= index < imp.onset + imp.duration:
                multiplier *= 1.0 + imp.magnitude
        return multiplier

    def oracle_predict(self, task: ForecastTask, example: TrainingExample) -> list[float]:
        """Ground-truth generator output given whatever news made it into the prompt.

        Relevant impacts apply when their title text appears in the input;
        every distractor title present adds deterministic per-point noise,
        modeling the damage unfiltered news does to the fine-tuned model.
        """
        known = {
            imp.news_id
            for imp in self.impacts
            if self.news_by_id(imp.news_id).title in example.input
        }
        noise = np.zeros(task.horizon)
        for item in self.distractors:
            if item.title in example.input:
                rng = _stable_rng(self.seed, item.id, task.id)
                noise += rng.normal(0.0, self.params.distractor_noise, task.horizon)
        lo = task.history_start + task.input_len
        out = []
        for j in range(task.horizon):
            value = float(self.base[lo + j]) * self.impact_multiplier(lo + j, known)
            value *= max(1.0 + noise[j], 0.05)
            out.append(value)
        return out

    def impacted_window_count(self, tasks: list[ForecastTask]) -> int:
        count = 0
        for task in tasks:
            lo = task.history_start + task.input_len
            hi = lo + task.horizon
            if any(imp.onset < hi and imp.onset + imp.duration > lo for imp in self.impacts):
                count += 1
        return count


def synth_scenario(params: ScenarioParams, seed: int) -> SyntheticScenario:
    """Deterministic synthetic scenario; news for an impact precedes its onset."""
    period, days = params.period, params.days
    n = period * days
    max_duration = params.impact_duration_days[1]
    if max_duration >= days or params.impact_count > max(days - 1 - max_duration, 0):
        raise ScenarioError(
            f"{params.impact_count} impacts of up to {max_duration} days "
            f"do not fit in a {days}-day series"
        )
    rng = np.random.default_rng(seed)
    phase = 2 * np.pi * (np.arange(n) % period) / period
    base = params.base_level * (1.0 + params.seasonal_amp * np.sin(phase))

    onset_days = sorted(
        rng.choice(np.arange(1, days - max_duration), size=params.impact_count, replace=False)
    )
    impacts: list[Impact] = []
    news: list[NewsItem] = []
    start = datetime(2021, 1, 1, tzinfo=UTC)
    granularity = timedelta(minutes=int(round(1440 / period)))
    for k, onset_day in enumerate(onset_days):
        duration_days = int(
            rng.integers(params.impact_duration_days[0], params.impact_duration_days[1] + 1)
        )
        magnitude = float(rng.uniform(*params.impact_magnitude))
        if params.signed_impacts and rng.random() < 0.5:
            magnitude = -magnitude
        tag = params.tags[k % len(params.tags)]
        news_id = f"impact-{k:02d}"
        onset_index = int(onset_day) * period
        onset_ts = start + onset_index * granularity
        published = onset_ts - timedelta(hours=float(rng.uniform(2.0, 20.0)))
        impacts.append(Impact(news_id, onset_index, duration_days * period, magnitude, tag))
        news.append(
            NewsItem(
                id=news_id,
                title=f"{tag.capitalize()} alert {k:02d}: major {tag} event announced in {params.region}",
                content=(
                    f"A major {tag} event is expected to move demand by roughly "
                    f"{magnitude:+.0%} while it lasts."
                ),
                published_at=published,
                region=params.region,
            )
        )

    n_distractors = int(round(params.impact_count * params.distractor_ratio / (1 - params.distractor_ratio)))
    span_seconds = (n - 1) * granularity.total_seconds()
    for j in range(n_distractors):
        published = start + timedelta(seconds=float(rng.uniform(0, span_seconds)))
        news.append(
            NewsItem(
                id=f"distractor-{j:03d}",
                title=f"Routine story {j:03d}: community notice number {j}",
                content="Nothing here moves the series.",
                published_at=published,
                region=params.region,
            )
        )

    multipliers = np.ones(n)
    for imp in impacts:
        multipliers[imp.onset : imp.onset + imp.duration] *= 1.0 + imp.magnitude
    noise = rng.normal(0.0, params.noise_level, n)
    values = base * multipliers * (1.0 + noise)

    series = TimeSeries(
        id=f"synth-{seed}",
        domain=params.domain,
        region=params.region,
        granularity=granularity,
        start=start,
        values=tuple(float(v) for v in values),
    )
    news.sort(key=lambda item: (item.published_at, item.id))
    return SyntheticScenario(
        series=series, news=news, impacts=impacts, base=base, params=params, seed=seed
    )


class ScenarioScriptedClient:
    """Deterministic stand-in for both agents on synthetic scenarios.

    Selection obeys the rule tags named in the current logic text; evaluation
    replies reveal a relevant item the selection missed, and the follow-up
    logic update enables that item's tag. All replies are pure functions of the
    conversation, so runs replay bit-identically.
    """

    def __init__(self, scenario: SyntheticScenario, domain: str = "electricity"):
        self.scenario = scenario
        self.profile = profile_for(domain)
        self.keys = selection_category_keys(self.profile)
        self.config = ModelClientConfig(endpoint="mock")
        self.calls: list[list[dict]] = []
        self._relevant_by_title = {
            scenario.news_by_id(imp.news_id).title: imp for imp in scenario.impacts
        }

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def complete(self, messages: list[dict], purpose: str = "") -> str:
        self.calls.append(messages)
        last = messages[-1]["content"]
        if last.startswith("The news happened before the prediction include: "):
            return self._selection_reply(messages)
        if last.startswith("This is the news we used for the prediction: "):
            return self._missed_news_reply(messages)
        if last.startswith("According to the overlooked news identified above"):
            return self._logic_update_reply(messages)
        if last.startswith("According to the given updated logic"):
            return self._consolidation_reply(messages)
        if last.startswith("Please summarize the factors"):
            return "Select news describing events that materially shift the series."
        if last.startswith("Remember to only give the JSON output"):
            return self._selection_reply(messages)
        raise ValueError(f"scripted client got an unexpected message: {last[:60]!r}")

    def _enabled_tags(self, messages: list[dict]) -> set[str]:
        logic_text = ""
        for msg in messages:
            if msg["content"].startswith('The reasoning logic is """'):
                logic_text = msg["content"].lower()
        return {tag for tag in self.scenario.params.tags if tag in logic_text}

    @staticmethod
    def _extract_between(text: str, prefix: str, suffix: str) -> str:
        lo = text.index(prefix) + len(prefix)
        hi = text.index(suffix, lo)
        return text[lo:hi]

    def _selection_reply(self, messages: list[dict]) -> str:
        select_msg = next(
            m["content"] for m in messages
            if m["content"].startswith("The news happened before the prediction include: ")
        )
        body = self._extract_between(
            select_msg,
            "The news happened before the prediction include: ",
            ". The selected news is organized in JSON format.",
        )
        offered = json.loads(body) if body.strip() else []
        enabled = self._enabled_tags(messages)
        chosen = []
        for entry in offered:
            impact = self._relevant_by_title.get(entry["news"])
            if impact is not None and impact.tag in enabled:
                chosen.append((entry, impact))
        payload = {self.keys["long_term"]: [], self.keys["short_term"]: [], self.keys["real_time"]: []}
        for entry, impact in chosen:
            payload[self.keys["short_term"]].append(
                {
                    "news": entry["news"],
                    "region": entry["region"],
                    "time": entry["time"],
                    "rationality": (
                        f"{entry['news']} This event shifts demand by about "
                        f"{impact.magnitude:+.0%} while it lasts."
                    ),
                }
            )
        return json.dumps(payload, ensure_ascii=False)

    def _missed_news_reply(self, messages: list[dict]) -> str:
        compare = messages[-1]["content"]
        selected_body = self._extract_between(
            compare, "This is the news we used for the prediction: ", "; Here are all the news"
        )
        all_body = self._extract_between(
            compare, "in JSON format: ", ". Please determine whether"
        )
        prediction_date = self._extract_between(compare, "The prediction date is ", ".")
        offered = json.loads(all_body) if all_body.strip() else []
        # only items publishable before the prediction could have been considered
        missed = [
            (entry, self._relevant_by_title[entry["news"]])
            for entry in offered
            if entry["news"] in self._relevant_by_title
            and entry["news"] not in selected_body
            and entry["time"][:10] < prediction_date
        ]
        if not missed:
            return "No news has been missed."
        entry, impact = missed[0]
        return (
            f"The missed news is {entry['news']}, occurred at {entry['time']}, "
            f"the possible reasoning is {impact.tag} events were not selected."
        )

    def _logic_update_reply(self, messages: list[dict]) -> str:
        for msg in reversed(messages):
            if msg["role"] == "assistant" and "the possible reasoning is" in msg["content"]:
                tag = msg["content"].rsplit("the possible reasoning is ", 1)[1].split(" ", 1)[0]
                return f"Also select news about {tag} events."
        return "No change to the prediction logic."

    def _consolidation_reply(self, messages: list[dict]) -> str:
        polish = messages[1]["content"]
        updates = polish.split(":", 1)[1] if ":" in polish else polish
        current = messages[2]["content"].rsplit("improve:", 1)[-1]
        return f"Consolidated selection logic.\n{current.strip()}\n{updates.strip()}"


# ---------------------------------------------------------------------------
# Ablation over prompt modes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeResult:
    mode: str
    metrics: MetricReport
    fingerprint: str
    windows: tuple[WindowRecord, ...] = ()


def tasks_fingerprint(tasks: list[ForecastTask]) -> str:
    joined = "|".join(t.id for t in tasks)
    return hashlib.sha256(joined.encode()).hexdigest()[:16]


def evaluate_mode(
    state: RunState,
    tasks: list[ForecastTask],
    mode: PromptMode,
    config: PipelineConfig,
) -> ModeResult:
    """Forecast ``tasks`` under one prompt mode on the shared state (no loop)."""
    saved_mode = config.prompt_mode
    config.prompt_mode = mode
    pairs: list[tuple[list[float], list[float]]] = []
    windows: list[WindowRecord] = []
    try:
        profile = profile_for(config.domain)
        for task in tasks:
            series = state.series_for(task)
            candidates, selection = _select_for_task(state, task, config)
            sentences = _news_sentences(task, candidates, selection, config, state)
            example = build_forecast_example(
                task, series, _fragments_for(state, task), sentences, mode, profile=profile
            )
            result = forecast(task, example, state.backend, series=series)
            actual = list(series.target_values(task))
            pairs.append((actual, list(result.predicted)))
            windows.append(
                WindowRecord(
                    state.iteration, mode.value, task.id, task.forecast_start,
                    tuple(actual), result.predicted,
                )
            )
    finally:
        config.prompt_mode = saved_mode
    return ModeResult(
        mode=mode.value,
        metrics=pool_metrics(pairs),
        fingerprint=tasks_fingerprint(tasks),
        windows=tuple(windows),
    )


METRIC_COLUMNS = ("rmse", "mse", "mae", "mape")


@dataclass(frozen=True)
class AblationTable:
    rows: tuple[dict, ...]
    best: dict

    def to_text(self) -> str:
        header = f"{'mode':<28}" + "".join(f"{c.upper():>14}" for c in METRIC_COLUMNS)
        lines = [header, "-" * len(header)]
        for row in self.rows:
            cells = []
            for c in METRIC_COLUMNS:
                value = row[c]
                text = "-" if value is None else f"{value:.4f}"
                if self.best.get(c) == row["mode"]:
                    text += "*"
                cells.append(f"{text:>14}")
            lines.append(f"{row['mode']:<28}" + "".join(cells))
        lines.append("* best per column")
        return "\n".join(lines)


def report_ablation(results: list[ModeResult]) -> AblationTable:
    """Rows = prompt modes, columns = the four metrics, best per column marked."""
    if len(results) < 2:
        raise ReportError("ablation needs results for at least two modes")
    fingerprints = {r.fingerprint for r in results}
    if len(fingerprints) != 1:
        raise ReportError(f"results come from different task splits: {sorted(fingerprints)}")
    rows = []
    for r in results:
        m = r.metrics
        rows.append({"mode": r.mode, "rmse": m.rmse, "mse": m.mse, "mae": m.mae, "mape": m.mape})
    best = {}
    for column in METRIC_COLUMNS:
        scored = [row for row in rows if row[column] is not None]
        if scored:
            best[column] = min(scored, key=lambda row: row[column])["mode"]
    return AblationTable(rows=tuple(rows), best=best)
