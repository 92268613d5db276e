"""Operator-facing command surface: ingest, pair, select, build-dataset, run,
forecast, and report.

All machine outputs are line-json or CSV; metric tables are printed and also
written into the run directory. Exit codes: 0 success, 1 runtime/stage
failure (the stage tag is printed), 2 usage or config errors.
"""

from __future__ import annotations

import csv
import json
import sys
import time
import uuid
from datetime import datetime, timedelta, timezone
from pathlib import Path

import click
import yaml

from .clients import ModelClientConfig
from .corpus import ingest_news, ingest_supplementary, prepair
from .errors import NewscastError, StageError
from .forecaster import ForecastBackendConfig, emit_dataset, forecast
from .pipeline import (
    PipelineConfig,
    ScenarioParams,
    ScenarioScriptedClient,
    SyntheticScenario,
    build_state,
    evaluate_mode,
    report_ablation,
    run_loop,
    synth_scenario,
)
from .prompts import PromptMode
from .series import load_series, split_tasks

MODES = [m.value for m in PromptMode]
BACKENDS = ("remote", "seasonal_naive", "mock", "synthetic_oracle")


def _fail(message: str, code: int = 1):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        _fail(f"config file not found: {path}", 2)
    except yaml.YAMLError as e:
        _fail(f"config file is not valid YAML: {e}", 2)
    if not isinstance(raw, dict):
        _fail("config file must hold a mapping", 2)
    return raw


def pipeline_config_from(raw: dict, out_dir: Path | None = None, **overrides) -> PipelineConfig:
    settings = {
        "domain": raw.get("domain", "electricity"),
        "prompt_mode": PromptMode(raw.get("mode", "textual_filtered_news")),
        "max_iterations": int(raw.get("max_iterations", 4)),
        "validation_fraction": float(raw.get("validation_fraction", 0.2)),
        "validation_cap": int(raw.get("validation_cap", 32)),
        "validation_resample": bool(raw.get("validation_resample", True)),
        "news_cap": int(raw.get("news_cap", 8)),
        "include_international": bool(raw.get("include_international", True)),
        "input_len": raw.get("input_len"),
        "horizon": raw.get("horizon"),
        "stride": raw.get("stride"),
        "seed": int(raw.get("seed", 0)),
        "logic_mode": raw.get("logic_mode", "seed"),
        "training_hook": raw.get("training_hook"),
        "out_dir": out_dir,
    }
    if raw.get("lookback_days") is not None:
        settings["lookback"] = timedelta(days=float(raw["lookback_days"]))
    for key, value in overrides.items():
        if value is not None:
            settings[key] = value
    try:
        return PipelineConfig(**settings)
    except (ValueError, KeyError) as e:
        _fail(f"bad config: {e}", 2)


def _agent_client_config(raw: dict, run_dir: Path | None) -> ModelClientConfig:
    agents = raw.get("agents", {}) or {}
    transcript = None
    if run_dir is not None and agents.get("endpoint", "mock") != "replay":
        transcript = run_dir / "transcript.jsonl"
    elif agents.get("transcript_path"):
        transcript = Path(agents["transcript_path"])
    return ModelClientConfig(
        endpoint=agents.get("endpoint", "mock"),
        model_id=agents.get("model_id", "gpt-4-turbo"),
        temperature=float(agents.get("temperature", 0.0)),
        max_retries=int(agents.get("max_retries", 2)),
        timeout=float(agents.get("timeout", 30.0)),
        transcript_path=transcript,
        api_key_env=agents.get("api_key_env"),
        script=tuple(agents.get("script", ())),
    )


def _scenario_from(raw: dict) -> SyntheticScenario | None:
    section = raw.get("synthetic")
    if not section:
        return None
    section = dict(section)
    seed = int(section.pop("seed", raw.get("seed", 0)))
    if "impact_magnitude" in section:
        section["impact_magnitude"] = tuple(section["impact_magnitude"])
    if "impact_duration_days" in section:
        section["impact_duration_days"] = tuple(section["impact_duration_days"])
    if "tags" in section:
        section["tags"] = tuple(section["tags"])
    params = ScenarioParams(**section)
    return synth_scenario(params, seed)


def _load_inputs(raw: dict):
    """Returns (series, news, supplementary, scenario)."""
    scenario = _scenario_from(raw)
    if scenario is not None:
        return [scenario.series], scenario.news, [], scenario
    data = raw.get("data") or {}
    if "series" not in data:
        _fail("config needs either a `synthetic:` section or `data.series`", 2)
    series = load_series(data["series"])
    news = ingest_news(data["news"], data.get("news_format", "line-json")) if data.get("news") else []
    supplementary = (
        ingest_supplementary(data["supplementary"]) if data.get("supplementary") else []
    )
    return series, news, supplementary, None


def _backend_from(raw: dict, scenario, backend_override: str | None) -> ForecastBackendConfig:
    section = dict(raw.get("backend") or {"kind": "seasonal_naive"})
    if backend_override:
        section["kind"] = backend_override
    kind = section.get("kind", "seasonal_naive")
    if kind == "remote":
        client = ModelClientConfig(
            endpoint=section.get("endpoint", ""),
            model_id=section.get("model_id", "local-tuned"),
            temperature=float(section.get("temperature", 0.0)),
            max_retries=int(section.get("max_retries", 2)),
            timeout=float(section.get("timeout", 60.0)),
            api_key_env=section.get("api_key_env"),
        )
        return ForecastBackendConfig(
            kind="remote",
            client_config=client,
            strict_horizon=bool(section.get("strict_horizon", True)),
            decode_retries=int(section.get("decode_retries", 2)),
        )
    if kind == "synthetic_oracle":
        if scenario is None:
            _fail("synthetic_oracle backend needs a `synthetic:` config section", 2)
        return ForecastBackendConfig(kind=kind, oracle=scenario.oracle_predict)
    if kind == "mock":
        return ForecastBackendConfig(
            kind="mock",
            script=section.get("script"),
            default_script=section.get("default_script"),
            strict_horizon=bool(section.get("strict_horizon", True)),
        )
    return ForecastBackendConfig(
        kind="seasonal_naive", seasonal_period=section.get("seasonal_period")
    )


def _agent_client(raw: dict, scenario, run_dir: Path | None, config: PipelineConfig):
    agents = raw.get("agents", {}) or {}
    endpoint = agents.get("endpoint", "synthetic" if scenario is not None else "mock")
    if endpoint == "synthetic":
        if scenario is None:
            _fail("agents.endpoint synthetic needs a `synthetic:` config section", 2)
        return ScenarioScriptedClient(scenario, config.domain)
    from .clients import make_client

    return make_client(_agent_client_config(raw, run_dir))


def _prepare_run_dir(out: str, run_id: str | None) -> tuple[Path, str]:
    run_id = run_id or f"{time.strftime('%Y%m%d-%H%M%S')}-{uuid.uuid4().hex[:6]}"
    run_dir = Path(out)
    run_dir.mkdir(parents=True, exist_ok=True)
    if any(run_dir.iterdir()):
        _fail(f"output directory {run_dir} is not empty", 2)
    return run_dir, run_id


def _write_manifest(run_dir: Path, run_id: str, raw_config: dict, artifacts: dict):
    manifest = {
        "run_id": run_id,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config": raw_config,
        "artifacts": artifacts,
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, default=str), encoding="utf-8"
    )


@click.group()
def main():
    """News-conditioned time series forecasting pipeline."""


@main.command()
@click.option("--series", type=click.Path(exists=True), help="series line-json file")
@click.option("--news", "news_path", type=click.Path(exists=True), help="news file")
@click.option("--news-format", default="line-json", type=click.Choice(["line-json", "csv"]))
@click.option("--supplementary", type=click.Path(exists=True), help="supplementary line-json file")
def ingest(series, news_path, news_format, supplementary):
    """Validate and count input records."""
    try:
        if series:
            click.echo(f"series: {len(load_series(series))}")
        if news_path:
            click.echo(f"news: {len(ingest_news(news_path, news_format))}")
        if supplementary:
            click.echo(f"supplementary: {len(ingest_supplementary(supplementary))}")
    except NewscastError as e:
        _fail(str(e))
    if not (series or news_path or supplementary):
        _fail("nothing to ingest; pass --series/--news/--supplementary", 2)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int)
def pair(config_path, out, seed):
    """Pre-pair candidate news to every forecast window."""
    raw = load_config_file(config_path)
    config = pipeline_config_from(raw, seed=seed)
    series, news, _, _ = _load_inputs(raw)
    from .series import make_windows

    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with out_path.open("w", encoding="utf-8") as fh:
        for s in series:
            for task in make_windows(s, config.input_len, config.horizon, config.stride):
                cs = prepair(news, task, config.lookback, config.include_international)
                fh.write(json.dumps({
                    "task": task.id,
                    "forecast_start": task.forecast_start.isoformat(),
                    "window": [t.isoformat() for t in cs.window],
                    "items": list(cs.items),
                }) + "\n")
                count += 1
    click.echo(f"paired {count} windows -> {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int)
def select(config_path, out, seed):
    """Run the reasoning agent over every window and store its selections."""
    raw = load_config_file(config_path)
    config = pipeline_config_from(raw, seed=seed)
    series, news, supplementary, scenario = _load_inputs(raw)
    client = _agent_client(raw, scenario, None, config)
    backend = _backend_from(raw, scenario, None)
    try:
        state = build_state(series, news, supplementary, config, client, backend)
    except NewscastError as e:
        _fail(str(e))
    from .agents import run_reasoning_agent

    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    by_id = {n.id: n for n in news}
    with out_path.open("w", encoding="utf-8") as fh:
        for task in state.tasks:
            cs = prepair(news, task, config.lookback, config.include_international)
            candidates = [by_id[i] for i in cs.items]
            result = run_reasoning_agent(state.logic, task, candidates, client, config.domain)
            fh.write(json.dumps({
                "task": task.id,
                "counts": result.counts(),
                "entries": [e.as_dict() | {"category": e.category} for e in result.entries()],
            }, ensure_ascii=False) + "\n")
    click.echo(f"selections written -> {out_path}")


@main.command("build-dataset")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(MODES))
@click.option("--seed", type=int)
def build_dataset(config_path, out, mode, seed):
    """Build the instruction-tuning dataset for all windows, no loop."""
    raw = load_config_file(config_path)
    config = pipeline_config_from(
        raw, prompt_mode=PromptMode(mode) if mode else None, seed=seed
    )
    series, news, supplementary, scenario = _load_inputs(raw)
    client = _agent_client(raw, scenario, None, config)
    backend = _backend_from(raw, scenario, None)
    try:
        state = build_state(series, news, supplementary, config, client, backend)
        from .domains import profile_for
        from .pipeline import _fragments_for, _news_sentences, _select_for_task
        from .prompts import build_forecast_example

        profile = profile_for(config.domain)
        examples = []
        for task in state.tasks:
            s = state.series_for(task)
            candidates, selection = _select_for_task(state, task, config)
            sentences = _news_sentences(task, candidates, selection, config, state)
            examples.append(build_forecast_example(
                task, s, _fragments_for(state, task), sentences, config.prompt_mode,
                target=list(s.target_values(task)), profile=profile,
            ))
        count = emit_dataset(examples, out)
    except NewscastError as e:
        _fail(str(e))
    click.echo(f"dataset: {count} examples -> {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int)
@click.option("--backend", "backend_override", type=click.Choice(BACKENDS))
@click.option("--mode", type=click.Choice(MODES))
@click.option("--max-iterations", type=int)
@click.option("--ablation/--no-ablation", default=False, help="also score all four prompt modes")
@click.option("--run-id", default=None)
def run(config_path, out, seed, backend_override, mode, max_iterations, ablation, run_id):
    """Run the full iterative loop and write the run directory."""
    raw = load_config_file(config_path)
    run_dir, run_id = _prepare_run_dir(out, run_id)
    config = pipeline_config_from(
        raw,
        out_dir=run_dir,
        seed=seed,
        prompt_mode=PromptMode(mode) if mode else None,
        max_iterations=max_iterations,
    )
    series, news, supplementary, scenario = _load_inputs(raw)
    backend = _backend_from(raw, scenario, backend_override)
    client = _agent_client(raw, scenario, run_dir, config)

    artifacts = {
        "reports": "reports.jsonl",
        "final_logic": "final_logic.txt",
        "final_dataset": "final_dataset.jsonl",
        "predictions": "predictions.jsonl",
    }
    _write_manifest(run_dir, run_id, raw, artifacts)
    (run_dir / "config_snapshot.yaml").write_text(yaml.safe_dump(raw), encoding="utf-8")

    try:
        state = build_state(series, news, supplementary, config, client, backend)
        result = run_loop(state, config)
    except StageError as e:
        _fail(f"[stage:{e.stage}] {e.cause}")
    except NewscastError as e:
        _fail(str(e))

    with (run_dir / "reports.jsonl").open("w", encoding="utf-8") as fh:
        for report in result.reports:
            fh.write(json.dumps(report.as_dict(), default=str) + "\n")
    (run_dir / "final_logic.txt").write_text(result.final_logic.text, encoding="utf-8")

    mode_results = []
    if ablation:
        _, val_tasks = split_tasks(
            state.tasks, config.validation_fraction, config.seed, config.validation_cap
        )
        mode_results = [
            evaluate_mode(state, val_tasks, m, config) for m in PromptMode
        ]
        table = report_ablation(mode_results)
        (run_dir / "ablation.json").write_text(
            json.dumps({"rows": list(table.rows), "best": table.best}, indent=2),
            encoding="utf-8",
        )
        click.echo(table.to_text())

    with (run_dir / "predictions.jsonl").open("w", encoding="utf-8") as fh:
        for record in state.window_records:
            fh.write(json.dumps({
                "iteration": record.iteration,
                "mode": record.mode,
                "task": record.task_id,
                "forecast_start": record.forecast_start.isoformat(),
                "actual": list(record.actual),
                "predicted": list(record.predicted),
            }) + "\n")
        for mode_result in mode_results:
            for record in mode_result.windows:
                fh.write(json.dumps({
                    "iteration": -1,
                    "mode": record.mode,
                    "task": record.task_id,
                    "forecast_start": record.forecast_start.isoformat(),
                    "actual": list(record.actual),
                    "predicted": list(record.predicted),
                }) + "\n")

    click.echo(f"run {run_id}: {len(result.reports)} iterations")
    header = f"{'iter':>4} {'logic':>5} {'dataset':>8} {'RMSE':>12} {'MAE':>12} {'MAPE%':>8}"
    click.echo(header)
    for report in result.reports:
        m = report.metrics
        click.echo(
            f"{report.iteration:>4} {report.logic_version:>5} {report.dataset_size:>8} "
            + (f"{m.rmse:>12.4f} {m.mae:>12.4f} "
               + (f"{m.mape:>8.3f}" if m.mape is not None else f"{'-':>8}")
               if m else f"{'-':>12} {'-':>12} {'-':>8}")
        )
    click.echo(f"final logic v{result.final_logic.version} -> {run_dir / 'final_logic.txt'}")


@main.command("forecast")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int)
@click.option("--backend", "backend_override", type=click.Choice(BACKENDS))
@click.option("--mode", type=click.Choice(MODES))
def forecast_cmd(config_path, out, seed, backend_override, mode):
    """One forecasting pass over the validation split (no loop, no reflection)."""
    raw = load_config_file(config_path)
    config = pipeline_config_from(
        raw, seed=seed, prompt_mode=PromptMode(mode) if mode else None
    )
    series, news, supplementary, scenario = _load_inputs(raw)
    backend = _backend_from(raw, scenario, backend_override)
    client = _agent_client(raw, scenario, None, config)
    try:
        state = build_state(series, news, supplementary, config, client, backend)
        _, val_tasks = split_tasks(
            state.tasks, config.validation_fraction, config.seed, config.validation_cap
        )
        result = evaluate_mode(state, val_tasks, config.prompt_mode, config)
    except StageError as e:
        _fail(f"[stage:{e.stage}] {e.cause}")
    except NewscastError as e:
        _fail(str(e))
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        for record in result.windows:
            fh.write(json.dumps({
                "task": record.task_id,
                "forecast_start": record.forecast_start.isoformat(),
                "actual": list(record.actual),
                "predicted": list(record.predicted),
            }) + "\n")
    m = result.metrics
    mape = f"{m.mape:.3f}%" if m.mape is not None else "omitted"
    click.echo(f"windows: {len(result.windows)}  rmse: {m.rmse:.4f}  mae: {m.mae:.4f}  mape: {mape}")


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path())
@click.option("--out", default=None, type=click.Path(), help="directory for report files")
def report(run_dir, out):
    """Summarize a finished run: metric tables and Fig-5-style curve data."""
    run_path = Path(run_dir)
    reports_file = run_path / "reports.jsonl"
    if not reports_file.exists():
        _fail(f"no reports.jsonl under {run_path}; is this a finished run?")
    out_path = Path(out) if out else run_path
    out_path.mkdir(parents=True, exist_ok=True)

    rows = [json.loads(line) for line in reports_file.read_text().splitlines() if line.strip()]
    with (out_path / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "logic_version", "dataset_size", "rmse", "mse", "mae", "mape"])
        for row in rows:
            m = row.get("metrics") or {}
            writer.writerow([
                row["iteration"], row["logic_version"], row["dataset_size"],
                m.get("rmse"), m.get("mse"), m.get("mae"), m.get("mape"),
            ])
    click.echo(f"{'iter':>4} {'RMSE':>12} {'MSE':>14} {'MAE':>12} {'MAPE%':>8}")
    for row in rows:
        m = row.get("metrics") or {}
        click.echo(
            f"{row['iteration']:>4} "
            f"{m.get('rmse', float('nan')):>12.4f} {m.get('mse', float('nan')):>14.4f} "
            f"{m.get('mae', float('nan')):>12.4f} "
            + (f"{m['mape']:>8.3f}" if m.get("mape") is not None else f"{'-':>8}")
        )

    ablation_file = run_path / "ablation.json"
    if ablation_file.exists():
        table = json.loads(ablation_file.read_text())
        click.echo(f"{'mode':<28}{'RMSE':>12}{'MSE':>14}{'MAE':>12}{'MAPE%':>8}")
        for row in table["rows"]:
            click.echo(
                f"{row['mode']:<28}{row['rmse']:>12.4f}{row['mse']:>14.4f}"
                f"{row['mae']:>12.4f}"
                + (f"{row['mape']:>8.3f}" if row.get("mape") is not None else f"{'-':>8}")
            )

    curves = _curves_from_predictions(run_path / "predictions.jsonl")
    if curves:
        with (out_path / "curves.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_index", "actual", "predicted_with_news", "predicted_without_news"])
            writer.writerows(curves)
        click.echo(f"curves: {len(curves)} points -> {out_path / 'curves.csv'}")
    elif not ablation_file.exists():
        click.echo("no with/without-news prediction pairs; run with --ablation for curve data")


def _curves_from_predictions(path: Path) -> list[tuple]:
    """Align filtered vs no-news predictions per task for actual-vs-predicted overlays."""
    if not path.exists():
        return []
    with_news: dict[str, dict] = {}
    without_news: dict[str, dict] = {}
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec["mode"] == PromptMode.TEXTUAL_FILTERED_NEWS.value:
            with_news[rec["task"]] = rec
        elif rec["mode"] == PromptMode.TEXTUAL_NO_NEWS.value:
            without_news[rec["task"]] = rec
    rows = []
    index = 0
    for task_id in sorted(set(with_news) & set(without_news)):
        a, b = with_news[task_id], without_news[task_id]
        for actual, with_n, without_n in zip(a["actual"], a["predicted"], b["predicted"]):
            rows.append((index, actual, with_n, without_n))
            index += 1
    return rows


if __name__ == "__main__":
    main()
