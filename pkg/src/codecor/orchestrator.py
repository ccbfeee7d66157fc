"""End-to-end pipeline for one task.

Runs the five phases in order: plan generation and pruning, test generation
and pruning, code generation and pruning, execution with ranked-set
bookkeeping, and the bounded repair loop with the unchanged-failures
stopping rule. Every lineage ends up in the ranked set exactly once; the
head of the set is the final program.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import Iterator

from .agents import (
    AgentConfig,
    ModelSettings,
    coding_agent_generate,
    coding_agent_repair,
    plan_digest,
    prompt_agent_generate,
    render_advice_score_prompt,
    render_plan_score_prompt,
    render_test_classify_prompt,
    repair_agent_advise,
    scoring_request,
    test_agent_generate,
)
from .errors import (
    EmptyRankedSetError,
    GenerationEmptyError,
    PipelineStarvedError,
    ProtocolError,
)
from .gateway import ChatBackend, ChatRequest, ChatResponse
from .model import (
    CaseResult,
    CodeSnippet,
    CotPrompt,
    ExecutionReport,
    GeneratedTestCase,
    RankedCodeSet,
    RepairAdvice,
    Task,
    Verdict,
    failed_case_digest,
)
from .pruning import prune_code, prune_prompts, prune_repair_advice, prune_tests
from .sandbox import ProcessSandbox, SandboxConfig


@dataclass(frozen=True)
class RunConfig:
    agent_cfg: AgentConfig = AgentConfig()
    sandbox_cfg: SandboxConfig = SandboxConfig()
    settings: ModelSettings = ModelSettings()
    max_repair_rounds: int = 3
    fallback_regen_attempts: int = 1
    similarity_threshold: float = 1.0  # 1.0 reduces to failed-set equality

    def __post_init__(self) -> None:
        if self.max_repair_rounds < 0:
            raise ValueError("max_repair_rounds must be >= 0")
        if self.fallback_regen_attempts < 0:
            raise ValueError("fallback_regen_attempts must be >= 0")
        if not 0 < self.similarity_threshold <= 1:
            raise ValueError("similarity_threshold must be in (0, 1]")


@dataclass(frozen=True)
class TranscriptDigest:
    agent: str
    request_digest: str
    response_digest: str


@dataclass(frozen=True)
class Counters:
    llm_calls: int = 0
    repairs_performed: int = 0
    snippets_pruned: int = 0
    tests_pruned: int = 0
    prompts_pruned: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class TaskRunRecord:
    task_id: str
    final_code: str
    ranked: RankedCodeSet
    transcripts: tuple[TranscriptDigest, ...]
    counters: Counters
    wall_ms: int

    def __post_init__(self) -> None:
        if self.ranked and self.final_code != self.ranked.entries[0].snippet.source:
            raise ValueError("final_code must be the highest-ranked source")


def _digest(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _request_text(request: ChatRequest) -> str:
    return "\x1e".join(f"{m.role}\x1f{m.content}" for m in request.messages)


class RecordingGateway:
    """Wraps a backend to label calls per agent and tally calls and tokens."""

    def __init__(self, backend: ChatBackend) -> None:
        self._backend = backend
        self._lock = threading.Lock()
        self._label = threading.local()
        self.transcripts: list[TranscriptDigest] = []
        self.llm_calls = 0
        self.prompt_tokens = 0
        self.completion_tokens = 0

    @contextmanager
    def agent(self, name: str) -> Iterator[None]:
        previous = getattr(self._label, "name", None)
        self._label.name = name
        try:
            yield
        finally:
            self._label.name = previous

    def complete(self, request: ChatRequest) -> ChatResponse:
        label = getattr(self._label, "name", None) or "unlabeled"
        response = self._backend.complete(request)
        with self._lock:
            self.transcripts.append(
                TranscriptDigest(
                    agent=label,
                    request_digest=_digest(_request_text(request)),
                    response_digest=_digest("\x1e".join(response.completions)),
                )
            )
            self.llm_calls += 1
            self.prompt_tokens += response.prompt_tokens
            self.completion_tokens += response.completion_tokens
        return response


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def should_stop_repair(
    current_failed: frozenset[str],
    previous_failed: frozenset[str] | None,
    round_: int,
    cfg: RunConfig,
) -> bool:
    """Stop at the round bound or when failures stopped shrinking.

    With the default threshold of 1.0 "similar" means the failed id-sets are
    equal, i.e. the round made zero progress.
    """
    if not current_failed:
        raise ValueError("stop rule applies only to failing snippets")
    if round_ >= cfg.max_repair_rounds:
        return True
    if previous_failed is None:
        return False
    return _jaccard(current_failed, previous_failed) >= cfg.similarity_threshold


def select_final(ranked: RankedCodeSet) -> str:
    if not ranked:
        raise EmptyRankedSetError("ranked code set is empty")
    return ranked.entries[0].snippet.source


@dataclass
class _Lineage:
    snippet: CodeSnippet
    report: ExecutionReport


class _Tally:
    def __init__(self) -> None:
        self.repairs_performed = 0
        self.snippets_pruned = 0
        self.tests_pruned = 0
        self.prompts_pruned = 0


def solve_task(
    task: Task,
    cfg: RunConfig,
    backend: ChatBackend,
    sandbox=None,
) -> TaskRunRecord:
    """Run the full pipeline for one task and return its run record.

    Raises PipelineStarvedError (with the best-effort record attached) when
    no executable snippet survives any fallback.
    """
    sandbox = sandbox if sandbox is not None else ProcessSandbox(cfg.sandbox_cfg)
    recording = RecordingGateway(backend)
    tally = _Tally()
    start = time.monotonic()

    def plan_scorer(prompt: CotPrompt) -> str:
        request = scoring_request(render_plan_score_prompt(task, prompt.text), cfg.settings)
        return recording.complete(request).completions[0]

    def advice_scorer(advice: RepairAdvice) -> str:
        request = scoring_request(render_advice_score_prompt(task, advice.text), cfg.settings)
        return recording.complete(request).completions[0]

    def test_classifier(case: GeneratedTestCase) -> str:
        request = scoring_request(
            render_test_classify_prompt(task, case.assertion_text), cfg.settings
        )
        return recording.complete(request).completions[0]

    def finish(final_code: str, ranked: RankedCodeSet) -> TaskRunRecord:
        return TaskRunRecord(
            task_id=task.task_id,
            final_code=final_code,
            ranked=ranked,
            transcripts=tuple(recording.transcripts),
            counters=Counters(
                llm_calls=recording.llm_calls,
                repairs_performed=tally.repairs_performed,
                snippets_pruned=tally.snippets_pruned,
                tests_pruned=tally.tests_pruned,
                prompts_pruned=tally.prompts_pruned,
                prompt_tokens=recording.prompt_tokens,
                completion_tokens=recording.completion_tokens,
            ),
            wall_ms=int((time.monotonic() - start) * 1000),
        )

    attempts = cfg.fallback_regen_attempts + 1

    # Phase I: plan generation and pruning.
    digest: str | None = None
    for _ in range(attempts):
        with recording.agent("prompt"):
            try:
                pool = prompt_agent_generate(task, cfg.agent_cfg, recording, cfg.settings)
            except GenerationEmptyError:
                continue
            outcome = prune_prompts(pool, plan_scorer)
        tally.prompts_pruned += len(outcome.pruned)
        if outcome.kept:
            digest = plan_digest(outcome.kept)
            break
    if digest is None:
        digest = task.description  # run without the prompt agent

    # Phase II: test generation and pruning.
    tests: list[GeneratedTestCase] = []
    for _ in range(attempts):
        with recording.agent("test"):
            try:
                pool = test_agent_generate(task, digest, cfg.agent_cfg, recording, cfg.settings)
            except GenerationEmptyError:
                continue
            outcome = prune_tests(pool, task.entry_point, test_classifier)
        tally.tests_pruned += len(outcome.pruned)
        if outcome.kept:
            tests = list(outcome.kept)
            break
    # An empty pool degrades ranking to (repair round, origin index).

    # Phase III: code generation and syntax pruning.
    snippets: list[CodeSnippet] | None = None
    last_candidate = ""
    for _ in range(attempts):
        with recording.agent("coding"):
            try:
                pool = coding_agent_generate(task, digest, cfg.agent_cfg, recording, cfg.settings)
            except GenerationEmptyError:
                continue
        last_candidate = pool[-1].source
        outcome = prune_code(pool, sandbox.syntax_check)
        tally.snippets_pruned += len(outcome.pruned)
        if outcome.kept:
            snippets = list(outcome.kept)
            break
    if snippets is None:
        record = finish(final_code=last_candidate, ranked=RankedCodeSet())
        raise PipelineStarvedError(
            f"task {task.task_id}: no executable snippet after all fallbacks", record=record
        )

    def execute(snippet: CodeSnippet) -> ExecutionReport:
        try:
            return sandbox.run_tests(snippet, tests)
        except ProtocolError as exc:
            return ExecutionReport.from_cases(
                CaseResult(test_id=t.id, verdict=Verdict.ERROR, message=f"sandbox protocol error: {exc}")
                for t in tests
            )

    # Phase IV: execute round-zero snippets.
    ranked = RankedCodeSet()
    active: list[_Lineage] = []
    for snippet in snippets:
        report = execute(snippet)
        snippet = replace(snippet, last_report=report)
        if report.all_passed:
            ranked = ranked.insert(snippet, report)
        elif should_stop_repair(report.failed_set, None, snippet.repair_round, cfg):
            ranked = ranked.insert(snippet, report)
        else:
            active.append(_Lineage(snippet, report))

    # Phase V: breadth-first repair rounds until every lineage is ranked.
    while active:
        next_active: list[_Lineage] = []
        for lineage in active:
            with recording.agent("repair"):
                try:
                    advice = repair_agent_advise(
                        lineage.snippet, lineage.report, tests, task, cfg.agent_cfg, recording, cfg.settings
                    )
                except GenerationEmptyError:
                    advice = None
                if advice is not None:
                    advice = prune_repair_advice(advice, lineage.report, tests, advice_scorer)
            if advice is None:
                advice = RepairAdvice(
                    text=failed_case_digest(lineage.report, tests), is_fallback=True
                )
            with recording.agent("coding"):
                try:
                    repaired = coding_agent_repair(
                        lineage.snippet,
                        advice,
                        task,
                        cfg.agent_cfg,
                        recording,
                        cfg.settings,
                        max_repair_rounds=cfg.max_repair_rounds,
                    )
                except GenerationEmptyError:
                    repaired = None
            if repaired is None:
                ranked = ranked.insert(lineage.snippet, lineage.report)
                continue
            tally.repairs_performed += 1
            outcome = prune_code([repaired], sandbox.syntax_check)
            if not outcome.kept:
                tally.snippets_pruned += 1
                ranked = ranked.insert(lineage.snippet, lineage.report)
                continue
            repaired = outcome.kept[0]
            report = execute(repaired)
            repaired = replace(repaired, last_report=report)
            if report.all_passed:
                ranked = ranked.insert(repaired, report)
            elif should_stop_repair(
                report.failed_set, lineage.report.failed_set, repaired.repair_round, cfg
            ):
                ranked = ranked.insert(repaired, report)
            else:
                next_active.append(_Lineage(repaired, report))
        active = next_active

    return finish(final_code=select_final(ranked), ranked=ranked)


# ---------------------------------------------------------------------------
# Canonical record serialization (used by report files and golden fixtures)


def record_to_dict(record: TaskRunRecord, mask_timings: bool = False) -> dict:
    def case_dict(case: CaseResult) -> dict:
        return {
            "test_id": case.test_id,
            "verdict": case.verdict.value,
            "message": case.message,
            "duration_ms": 0 if mask_timings else case.duration_ms,
        }

    return {
        "task_id": record.task_id,
        "final_code": record.final_code,
        "ranked": [
            {
                "snippet": {
                    "source": entry.snippet.source,
                    "origin_index": entry.snippet.origin_index,
                    "repair_round": entry.snippet.repair_round,
                    "syntax_ok": entry.snippet.syntax_ok.value,
                },
                "report": {
                    "per_case": [case_dict(c) for c in entry.report.per_case],
                    "passed_count": entry.report.passed_count,
                    "failed": sorted(entry.report.failed_set),
                },
            }
            for entry in record.ranked.entries
        ],
        "transcripts": [
            [t.agent, t.request_digest, t.response_digest] for t in record.transcripts
        ],
        "counters": {
            "llm_calls": record.counters.llm_calls,
            "repairs_performed": record.counters.repairs_performed,
            "snippets_pruned": record.counters.snippets_pruned,
            "tests_pruned": record.counters.tests_pruned,
            "prompts_pruned": record.counters.prompts_pruned,
            "prompt_tokens": record.counters.prompt_tokens,
            "completion_tokens": record.counters.completion_tokens,
        },
        "wall_ms": 0 if mask_timings else record.wall_ms,
    }


def record_to_json(record: TaskRunRecord, mask_timings: bool = False) -> str:
    return json.dumps(record_to_dict(record, mask_timings=mask_timings), ensure_ascii=False, indent=2) + "\n"
