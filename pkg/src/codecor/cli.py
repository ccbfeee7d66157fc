"""Command-line entry points: solve one task, bench a dataset, score finals.

Config precedence: CLI flag > config file (JSON) > built-in default.
Diagnostics go to stderr; stdout carries only data.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import click

from .agents import AgentConfig, ModelSettings, extract_code_block, render_code_prompt
from .errors import (
    AuthError,
    CodecorError,
    ConfigError,
    MalformedRecordError,
    MalformedResponseError,
    NetworkError,
    PipelineStarvedError,
    ProtocolError,
    SandboxUnavailableError,
    TranscriptExhaustedError,
)
from .gateway import API_KEY_ENV, ChatRequest, OpenAICompatBackend, ScriptedBackend
from .harness import (
    DatasetRecord,
    RunReport,
    TaskScore,
    bleu,
    edit_distance,
    emit_report,
    load_dataset,
    read_finals,
    score_hidden,
    write_finals,
)
from .model import SourceDataset, Task
from .orchestrator import RunConfig, TaskRunRecord, record_to_json, solve_task
from .sandbox import ProcessSandbox, SandboxConfig

EXIT_CONFIG = 2
EXIT_STARVED = 3
EXIT_NETWORK = 4
EXIT_DATA = 5

KIND_CHOICES = {
    "humaneval": SourceDataset.HUMANEVAL,
    "humaneval-et": SourceDataset.HUMANEVAL_ET,
    "mbpp": SourceDataset.MBPP,
    "mbpp-et": SourceDataset.MBPP_ET,
    "custom": SourceDataset.CUSTOM,
}


@dataclass(frozen=True)
class CliConfig:
    backend: str = "openai-compat"
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    temperature_generate: float = 0.8
    temperature_score: float = 0.0
    max_tokens: int = 1024
    n_prompts: int = 3
    n_tests: int = 10
    n_snippets: int = 5
    parse_retry: int = 1
    max_repair_rounds: int = 3
    fallback_regen_attempts: int = 1
    similarity_threshold: float = 1.0
    interpreter_path: str = sys.executable
    per_case_timeout_ms: int = 5000
    total_timeout_ms: int = 60000
    transcript: str | None = None
    jobs: int = 1
    seed: int | None = None  # reserved; every tie-break in the pipeline is deterministic

    def run_config(self) -> RunConfig:
        return RunConfig(
            agent_cfg=AgentConfig(
                n_prompts=self.n_prompts,
                n_tests=self.n_tests,
                n_snippets=self.n_snippets,
                parse_retry=self.parse_retry,
            ),
            sandbox_cfg=self.sandbox_config(),
            settings=ModelSettings(
                model=self.model,
                temperature_generate=self.temperature_generate,
                temperature_score=self.temperature_score,
                max_tokens=self.max_tokens,
            ),
            max_repair_rounds=self.max_repair_rounds,
            fallback_regen_attempts=self.fallback_regen_attempts,
            similarity_threshold=self.similarity_threshold,
        )

    def sandbox_config(self) -> SandboxConfig:
        return SandboxConfig(
            interpreter_path=self.interpreter_path,
            per_case_timeout_ms=self.per_case_timeout_ms,
            total_timeout_ms=self.total_timeout_ms,
        )


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(CliConfig)}


def load_config_file(path: str) -> dict:
    try:
        values = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    except ValueError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    if not isinstance(values, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(values) - _CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return values


def resolve_config(config_path: str | None, **overrides) -> CliConfig:
    """Merge defaults, config file, and explicit CLI flags (None = not given)."""
    values: dict = {}
    if config_path:
        values.update(load_config_file(config_path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = CliConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}")
    if cfg.backend not in ("openai-compat", "transcript"):
        raise ConfigError(f"unknown backend {cfg.backend!r}")
    if cfg.backend == "transcript" and not cfg.transcript:
        raise ConfigError("backend 'transcript' requires --transcript PATH")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    try:
        cfg.run_config()
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}")
    return cfg


def make_backend(cfg: CliConfig):
    """Build the chat backend; validates credentials before any request."""
    if cfg.backend == "transcript":
        return ScriptedBackend.from_file(cfg.transcript)
    api_key = os.environ.get(API_KEY_ENV, "")
    if not api_key:
        raise ConfigError(f"{API_KEY_ENV} is not set (required for backend 'openai-compat')")
    return OpenAICompatBackend(base_url=cfg.base_url, api_key=api_key)


def _warn(message: str) -> None:
    click.echo(message, err=True)


@click.group()
def cli() -> None:
    """Self-reflective multi-agent code generation and its evaluation harness."""


_shared_options = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="JSON config file."),
    click.option("--backend", type=click.Choice(["openai-compat", "transcript"]), default=None),
    click.option("--transcript", type=click.Path(exists=True, dir_okay=False), default=None),
    click.option("--base-url", default=None),
    click.option("--model", default=None),
    click.option("--max-repair-rounds", type=int, default=None),
    click.option("--n-prompts", type=int, default=None),
    click.option("--n-tests", type=int, default=None),
    click.option("--n-snippets", type=int, default=None),
]


def shared_options(func):
    for option in reversed(_shared_options):
        func = option(func)
    return func


@cli.command("solve")
@click.option("--task", "-t", "task_text", default=None, help="Task description text.")
@click.option("--task-file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--task-id", default="custom/0")
@click.option("--entry-point", default="")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@shared_options
def cmd_solve(task_text, task_file, task_id, entry_point, report_path, config_path, **flags):
    """Solve one task; prints the final program on stdout."""
    if (task_text is None) == (task_file is None):
        raise click.UsageError("provide exactly one of --task or --task-file")
    if task_file is not None:
        task_text = Path(task_file).read_text(encoding="utf-8")
    cfg = resolve_config(config_path, **flags)
    backend = make_backend(cfg)
    task = Task(task_id=task_id, description=task_text, entry_point=entry_point)
    try:
        record = solve_task(task, cfg.run_config(), backend)
    except PipelineStarvedError as exc:
        if report_path and exc.record is not None:
            Path(report_path).write_text(record_to_json(exc.record), encoding="utf-8")
        raise
    if report_path:
        Path(report_path).write_text(record_to_json(record), encoding="utf-8")
    click.echo(record.final_code)


def _baseline_final(task: Task, cfg: CliConfig, backend) -> str:
    """Single-shot, no-agent generation used only for the report-side baseline."""
    request = ChatRequest(
        model=cfg.model,
        messages=render_code_prompt(task, task.description),
        temperature=cfg.temperature_generate,
        n=1,
        max_tokens=cfg.max_tokens,
    )
    try:
        return extract_code_block(backend.complete(request).completions[0])
    except CodecorError as exc:
        _warn(f"baseline generation failed for {task.task_id}: {exc}")
        return ""


@cli.command("bench")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--kind", type=click.Choice(sorted(KIND_CHOICES)), required=True)
@click.option("--limit", type=int, default=None, help="Run only the first N tasks.")
@click.option("--jobs", type=int, default=None)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default="report.jsonl")
@click.option("--records", "records_path", type=click.Path(dir_okay=False), default=None)
@click.option("--finals-dir", type=click.Path(file_okay=False), default=None)
@click.option("--compare-baseline", is_flag=True, default=False)
@shared_options
def cmd_bench(
    dataset_path,
    kind,
    limit,
    jobs,
    report_path,
    records_path,
    finals_dir,
    compare_baseline,
    config_path,
    **flags,
):
    """Run the pipeline over a dataset slice, score it, and emit the report."""
    if limit is not None and limit < 1:
        raise ConfigError("--limit must be >= 1")
    cfg = resolve_config(config_path, jobs=jobs, **flags)
    records = load_dataset(dataset_path, KIND_CHOICES[kind])
    if limit is not None:
        records = records[:limit]
    backend = make_backend(cfg)
    sandbox = ProcessSandbox(cfg.sandbox_config())
    report_file = Path(report_path)
    records_file = Path(records_path) if records_path else report_file.with_suffix(".records.jsonl")
    finals_directory = Path(finals_dir) if finals_dir else report_file.parent / "finals"

    started = time.monotonic()
    finals: dict[str, str] = {}
    runs: dict[str, TaskRunRecord | None] = {}

    def run_one(record: DatasetRecord) -> tuple[str, TaskRunRecord | None]:
        task = record.task
        try:
            return task.task_id, solve_task(task, cfg.run_config(), backend, sandbox)
        except PipelineStarvedError as exc:
            _warn(f"task {task.task_id}: pipeline starved")
            return task.task_id, exc.record
        except CodecorError as exc:
            _warn(f"task {task.task_id} failed: {exc}")
            return task.task_id, None

    if cfg.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_one, records))
    else:
        results = [run_one(record) for record in records]
    for task_id, run in results:
        runs[task_id] = run
        finals[task_id] = run.final_code if run is not None else ""

    report_file.parent.mkdir(parents=True, exist_ok=True)
    records_file.parent.mkdir(parents=True, exist_ok=True)
    with records_file.open("w", encoding="utf-8") as fh:
        for record in records:
            run = runs.get(record.task.task_id)
            if run is not None:
                fh.write(json.dumps(json.loads(record_to_json(run)), ensure_ascii=False) + "\n")
    write_finals(finals, finals_directory)

    scored = score_hidden(records, finals, sandbox, jobs=cfg.jobs)
    baseline_rate = None
    if compare_baseline:
        baseline_finals = {
            r.task.task_id: _baseline_final(r.task, cfg, backend) for r in records
        }
        baseline_scored = score_hidden(records, baseline_finals, sandbox, jobs=cfg.jobs)
        baseline_rate = sum(baseline_scored.values()) / len(records) if records else None

    per_task = []
    for record in records:
        task_id = record.task.task_id
        run = runs.get(task_id)
        final = finals.get(task_id, "")
        reference = record.reference_solution
        per_task.append(
            TaskScore(
                task_id=task_id,
                passed_hidden=int(scored.get(task_id, False)),
                edit_distance=edit_distance(final, reference) if reference is not None else None,
                bleu=bleu(final, reference) if reference is not None else None,
                wall_ms=run.wall_ms if run is not None else 0,
                llm_calls=run.counters.llm_calls if run is not None else 0,
                tokens=(run.counters.prompt_tokens + run.counters.completion_tokens) if run is not None else 0,
            )
        )
    report = RunReport(
        per_task=tuple(per_task),
        total_runtime_s=round(time.monotonic() - started, 3),
        baseline_pass_at_1=baseline_rate,
    )
    emit_report(report, report_file)
    _warn(f"report written to {report_file}; records to {records_file}; finals to {finals_directory}")
    click.echo(
        json.dumps(
            {
                "tasks": len(records),
                "pass_at_1": report.pass_at_1,
                "mean_edit_distance": report.mean_edit_distance,
                "mean_bleu": report.mean_bleu,
                "total_runtime_s": report.total_runtime_s,
                **({"baseline_pass_at_1": baseline_rate} if baseline_rate is not None else {}),
            },
            ensure_ascii=False,
        )
    )


@cli.command("score")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--kind", type=click.Choice(sorted(KIND_CHOICES)), required=True)
@click.option("--finals", "finals_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def cmd_score(dataset_path, kind, finals_dir, report_path, jobs, config_path):
    """Recompute Pass@1, edit distance, and BLEU with no LLM calls."""
    cfg = resolve_config(config_path, jobs=jobs)
    records = load_dataset(dataset_path, KIND_CHOICES[kind])
    finals, warnings = read_finals(records, finals_dir)
    for warning in warnings:
        _warn(warning)
    sandbox = ProcessSandbox(cfg.sandbox_config())
    started = time.monotonic()
    scored = score_hidden(records, finals, sandbox, jobs=cfg.jobs)
    per_task = []
    for record in records:
        task_id = record.task.task_id
        final = finals.get(task_id, "")
        reference = record.reference_solution
        per_task.append(
            TaskScore(
                task_id=task_id,
                passed_hidden=int(scored.get(task_id, False)),
                edit_distance=edit_distance(final, reference) if reference is not None else None,
                bleu=bleu(final, reference) if reference is not None else None,
                wall_ms=0,
                llm_calls=0,
                tokens=0,
            )
        )
    report = RunReport(per_task=tuple(per_task), total_runtime_s=round(time.monotonic() - started, 3))
    if report_path:
        emit_report(report, report_path)
    click.echo(
        json.dumps(
            {
                "tasks": len(records),
                "pass_at_1": report.pass_at_1,
                "mean_edit_distance": report.mean_edit_distance,
                "mean_bleu": report.mean_bleu,
            },
            ensure_ascii=False,
        )
    )


def main(argv=None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(130)
    except ConfigError as exc:
        _fail(exc, EXIT_CONFIG)
    except PipelineStarvedError as exc:
        _fail(exc, EXIT_STARVED)
    except (NetworkError, AuthError, MalformedResponseError, TranscriptExhaustedError) as exc:
        _fail(exc, EXIT_NETWORK)
    except (MalformedRecordError, SandboxUnavailableError, ProtocolError) as exc:
        _fail(exc, EXIT_DATA)
    except CodecorError as exc:
        _fail(exc, 1)
    else:
        sys.exit(0)


def _fail(exc: Exception, code: int) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


if __name__ == "__main__":
    main()
