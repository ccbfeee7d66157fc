"""The four pipeline agents: prompt, test, coding, and repair.

Each agent is a deterministic prompt template plus a total parser over the
raw completions. Templates receive only the task description and entry
point; hidden dataset tests are never rendered into any prompt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .errors import GenerationEmptyError
from .gateway import ChatBackend, ChatMessage, ChatRequest
from .model import (
    CodeSnippet,
    CotPrompt,
    ExecutionReport,
    GeneratedTestCase,
    RepairAdvice,
    Task,
    failed_case_digest,
    normalize_assertion,
)

PROMPT_TEMPLATE_VERSION = "1"

SCORING_MAX_TOKENS = 64

PLAN_SEPARATOR = "\n\n"


@dataclass(frozen=True)
class AgentConfig:
    """Pool sizes and parse-retry budget for the generation agents."""

    n_prompts: int = 3
    n_tests: int = 10
    n_snippets: int = 5
    parse_retry: int = 1

    def __post_init__(self) -> None:
        if min(self.n_prompts, self.n_tests, self.n_snippets) < 1:
            raise ValueError("pool sizes must be >= 1")
        if self.parse_retry < 0:
            raise ValueError("parse_retry must be >= 0")


@dataclass(frozen=True)
class ModelSettings:
    """Backend model name and sampling defaults.

    Generation calls need diversity; scoring calls need stability.
    """

    model: str = "gpt-3.5-turbo"
    temperature_generate: float = 0.8
    temperature_score: float = 0.0
    max_tokens: int = 1024


# ---------------------------------------------------------------------------
# Templates


def render_plan_prompt(task: Task) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(
            "system",
            "You are the planning assistant in a code generation workflow. "
            "You decompose Python programming tasks into clear step-by-step plans.",
        ),
        ChatMessage(
            "user",
            f"Task:\n{task.description}\n\n"
            "Write a step-by-step plan for solving this task. "
            "Number each step on its own line, starting with 1. Do not write any code.",
        ),
    )


_CRITERIA_CLAUSE = (
    "four criteria: clarity (is it clear?), relevance (is it directly related "
    "to the task?), conciseness (is it concise and not overly complex?), and "
    "context (does it provide enough contextual information?). Reply with one "
    "bracketed score of four binary values in that order, for example [1, 1, 1, 1]."
)


def render_plan_score_prompt(task: Task, plan_text: str) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(
            "system",
            "You are a strict reviewer of step-by-step plans for Python programming tasks.",
        ),
        ChatMessage(
            "user",
            f"Task:\n{task.description}\n\nPlan:\n{plan_text}\n\n"
            f"Judge the plan on {_CRITERIA_CLAUSE}",
        ),
    )


def render_test_prompt(task: Task, plan_digest: str, n_tests: int) -> tuple[ChatMessage, ...]:
    target = f"the function {task.entry_point}" if task.entry_point else "the solution function"
    call_shape = f"{task.entry_point}(...)" if task.entry_point else "the function under test"
    return (
        ChatMessage(
            "system",
            "You are the test-writing assistant in a code generation workflow.",
        ),
        ChatMessage(
            "user",
            f"Task:\n{task.description}\n\nPlan:\n{plan_digest}\n\n"
            f"Write up to {n_tests} executable Python test cases for {target}. "
            f"Each test case must be a single assert statement on its own line calling {call_shape}. "
            "Output only the assert lines, with no prose and no code fences.",
        ),
    )


def render_test_classify_prompt(task: Task, assertion_text: str) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(
            "system",
            "You are the test-quality judge in a code generation workflow.",
        ),
        ChatMessage(
            "user",
            f"Task:\n{task.description}\n\nTest case:\n{assertion_text}\n\n"
            "Decide whether this test case is a valid check for the task: it must "
            "provide input data of the expected types within reasonable ranges and "
            "assert an expected result. Reply with exactly one word: Valid or Invalid.",
        ),
    )


_CODING_SYSTEM = ChatMessage(
    "system",
    "You are the coding assistant in a code generation workflow. "
    "You write complete, correct Python solutions.",
)


def render_code_prompt(task: Task, plan_digest: str) -> tuple[ChatMessage, ...]:
    entry_clause = f" Define the function {task.entry_point}." if task.entry_point else ""
    return (
        _CODING_SYSTEM,
        ChatMessage(
            "user",
            f"Task:\n{task.description}\n\nPlan:\n{plan_digest}\n\n"
            f"Write the complete Python solution.{entry_clause} "
            "Return the code in one fenced code block.",
        ),
    )


def render_repair_advice_prompt(task: Task, source: str, failure_digest: str) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(
            "system",
            "You are the repair advisor in a code generation workflow. "
            "You diagnose why code fails its test cases.",
        ),
        ChatMessage(
            "user",
            f"Task:\n{task.description}\n\nCode:\n{source}\n\n"
            f"Failed test cases and error messages:\n{failure_digest}\n\n"
            "Give one concise piece of repair advice that explains what is wrong "
            "and how to fix it. Do not write the full corrected code.",
        ),
    )


def render_advice_score_prompt(task: Task, advice_text: str) -> tuple[ChatMessage, ...]:
    return (
        ChatMessage(
            "system",
            "You are a strict reviewer of repair advice for failing Python code.",
        ),
        ChatMessage(
            "user",
            f"Task:\n{task.description}\n\nRepair advice:\n{advice_text}\n\n"
            f"Judge the advice on {_CRITERIA_CLAUSE}",
        ),
    )


def render_repair_code_prompt(task: Task, source: str, advice_text: str) -> tuple[ChatMessage, ...]:
    return (
        _CODING_SYSTEM,
        ChatMessage(
            "user",
            f"Task:\n{task.description}\n\nCurrent code:\n{source}\n\n"
            f"Repair guidance:\n{advice_text}\n\n"
            "Rewrite the complete corrected Python solution. "
            "Return the code in one fenced code block.",
        ),
    )


# ---------------------------------------------------------------------------
# Parsers

_STEP_RE = re.compile(r"(?m)^\s*(?:\d+[.):]|[-*])\s+\S")
_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)(?:\n?```|\Z)", re.DOTALL)


def parse_plan(completion: str) -> str | None:
    """A plan is usable iff it contains at least one enumerated step."""
    text = completion.strip()
    if text and _STEP_RE.search(text):
        return text
    return None


def extract_code_block(completion: str) -> str:
    """Contents of the first fenced block, or the whole completion without one."""
    match = _FENCE_RE.search(completion)
    if match:
        return match.group(1).strip("\n")
    return completion.strip("\n")


def parse_assertions(completion: str) -> list[str]:
    """Every line that starts with the ``assert`` token, fences stripped, deduplicated."""
    body = completion
    match = _FENCE_RE.search(completion)
    if match:
        body = match.group(1)
    seen: set[str] = set()
    out: list[str] = []
    for line in body.splitlines():
        candidate = line.strip()
        if not candidate.startswith("assert"):
            continue
        norm = normalize_assertion(candidate)
        if norm in seen:
            continue
        seen.add(norm)
        out.append(candidate)
    return out


def plan_digest(prompts: Sequence[CotPrompt]) -> str:
    """Selected plans joined into the single digest fed to downstream agents."""
    return PLAN_SEPARATOR.join(p.text for p in prompts)


# ---------------------------------------------------------------------------
# Agent operations


def _generation_request(
    messages: tuple[ChatMessage, ...], settings: ModelSettings, n: int = 1
) -> ChatRequest:
    return ChatRequest(
        model=settings.model,
        messages=messages,
        temperature=settings.temperature_generate,
        n=n,
        max_tokens=settings.max_tokens,
    )


def scoring_request(messages: tuple[ChatMessage, ...], settings: ModelSettings) -> ChatRequest:
    return ChatRequest(
        model=settings.model,
        messages=messages,
        temperature=settings.temperature_score,
        n=1,
        max_tokens=SCORING_MAX_TOKENS,
    )


def prompt_agent_generate(
    task: Task, cfg: AgentConfig, backend: ChatBackend, settings: ModelSettings
) -> list[CotPrompt]:
    """Generate up to ``n_prompts`` unscored step-by-step plans."""
    if not task.description.strip():
        raise ValueError("task description must be non-empty")
    messages = render_plan_prompt(task)
    for _ in range(cfg.parse_retry + 1):
        response = backend.complete(_generation_request(messages, settings, n=cfg.n_prompts))
        plans = [
            CotPrompt(text=parsed, origin_index=i)
            for i, completion in enumerate(response.completions)
            if (parsed := parse_plan(completion)) is not None
        ]
        if plans:
            return plans
    raise GenerationEmptyError("prompt agent produced no plan with enumerated steps")


def test_agent_generate(
    task: Task, digest: str, cfg: AgentConfig, backend: ChatBackend, settings: ModelSettings
) -> list[GeneratedTestCase]:
    """Generate up to ``n_tests`` unclassified single-assertion test cases."""
    messages = render_test_prompt(task, digest, cfg.n_tests)
    for _ in range(cfg.parse_retry + 1):
        response = backend.complete(_generation_request(messages, settings, n=1))
        assertions: list[str] = []
        for completion in response.completions:
            assertions.extend(parse_assertions(completion))
        seen: set[str] = set()
        cases: list[GeneratedTestCase] = []
        for text in assertions:
            norm = normalize_assertion(text)
            if norm in seen:
                continue
            seen.add(norm)
            cases.append(GeneratedTestCase.from_assertion(text))
            if len(cases) >= cfg.n_tests:
                break
        if cases:
            return cases
    raise GenerationEmptyError("test agent produced no assert lines")


def coding_agent_generate(
    task: Task, digest: str, cfg: AgentConfig, backend: ChatBackend, settings: ModelSettings
) -> list[CodeSnippet]:
    """Generate up to ``n_snippets`` round-zero snippets, one per completion."""
    messages = render_code_prompt(task, digest)
    for _ in range(cfg.parse_retry + 1):
        response = backend.complete(_generation_request(messages, settings, n=cfg.n_snippets))
        snippets = []
        for i, completion in enumerate(response.completions):
            source = extract_code_block(completion)
            if source.strip():
                snippets.append(CodeSnippet(source=source, origin_index=i))
        if snippets:
            return snippets
    raise GenerationEmptyError("coding agent produced no non-empty snippet")


def repair_agent_advise(
    snippet: CodeSnippet,
    report: ExecutionReport,
    tests: Sequence[GeneratedTestCase],
    task: Task,
    cfg: AgentConfig,
    backend: ChatBackend,
    settings: ModelSettings,
) -> RepairAdvice:
    """One piece of unscored repair advice for a failing snippet."""
    if not report.failed_set:
        raise ValueError("repair advice requested for a report with no failures")
    digest = failed_case_digest(report, tests)
    messages = render_repair_advice_prompt(task, snippet.source, digest)
    for _ in range(cfg.parse_retry + 1):
        response = backend.complete(_generation_request(messages, settings, n=1))
        text = response.completions[0].strip()
        if text:
            return RepairAdvice(text=text)
    raise GenerationEmptyError("repair agent produced no advice text")


def coding_agent_repair(
    snippet: CodeSnippet,
    advice: RepairAdvice,
    task: Task,
    cfg: AgentConfig,
    backend: ChatBackend,
    settings: ModelSettings,
    max_repair_rounds: int | None = None,
) -> CodeSnippet:
    """Regenerate a snippet from repair guidance; bumps the repair round."""
    if advice.score is None and not advice.is_fallback:
        raise ValueError("advice must be accepted or be the fallback digest")
    if advice.score is not None and not advice.score.accepted and not advice.is_fallback:
        raise ValueError("rejected advice must be replaced by the fallback digest")
    if max_repair_rounds is not None and snippet.repair_round >= max_repair_rounds:
        raise ValueError(f"snippet already at repair round bound {max_repair_rounds}")
    messages = render_repair_code_prompt(task, snippet.source, advice.text)
    for _ in range(cfg.parse_retry + 1):
        response = backend.complete(_generation_request(messages, settings, n=1))
        source = extract_code_block(response.completions[0])
        if source.strip():
            return CodeSnippet(
                source=source,
                origin_index=snippet.origin_index,
                repair_round=snippet.repair_round + 1,
            )
    raise GenerationEmptyError("coding agent produced no repaired snippet")
