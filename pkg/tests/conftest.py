"""Shared fixtures: an in-process sandbox stand-in and the replay fixtures."""

from __future__ import annotations

import pytest

from codecor.agents import AgentConfig, ModelSettings
from codecor.model import (
    CaseResult,
    CodeSnippet,
    ExecutionReport,
    GeneratedTestCase,
    SyntaxState,
    Task,
    TestClassification,
    Verdict,
)
from codecor.orchestrator import RunConfig
from codecor.sandbox import SyntaxCheckResult


class TinySandbox:
    """In-process sandbox double for trusted fixture code.

    Mirrors the driver script's verdict and message conventions so records
    produced with it are byte-identical (timings masked) to real-sandbox runs.
    """

    def __init__(self) -> None:
        self.run_calls = 0

    def syntax_check(self, source: str) -> SyntaxCheckResult:
        try:
            compile(source, "<snippet>", "exec")
            return SyntaxCheckResult(ok=True)
        except SyntaxError as exc:
            return SyntaxCheckResult(ok=False, message=exc.msg or str(exc), line=exc.lineno)
        except ValueError as exc:
            return SyntaxCheckResult(ok=False, message=str(exc))

    def run_tests(self, snippet: CodeSnippet, tests) -> ExecutionReport:
        if snippet.syntax_ok is not SyntaxState.OK:
            raise ValueError("run_tests requires a syntax-checked snippet")
        for test in tests:
            if test.classification is not TestClassification.VALID:
                raise ValueError(f"test {test.id} is not Valid")
        self.run_calls += 1
        namespace: dict = {"__name__": "__snippet__"}
        try:
            exec(compile(snippet.source, "<snippet>", "exec"), namespace)
        except BaseException as exc:  # noqa: BLE001 - verdict boundary
            message = f"{type(exc).__name__}: {exc}"
            return ExecutionReport.from_cases(
                CaseResult(test_id=t.id, verdict=Verdict.ERROR, message=message) for t in tests
            )
        cases = []
        for test in tests:
            try:
                exec(compile(test.assertion_text, f"<case {test.id}>", "exec"), namespace)
                cases.append(CaseResult(test_id=test.id, verdict=Verdict.PASS))
            except AssertionError as exc:
                cases.append(
                    CaseResult(
                        test_id=test.id,
                        verdict=Verdict.FAIL,
                        message=str(exc) or "assertion failed",
                    )
                )
            except BaseException as exc:  # noqa: BLE001
                cases.append(
                    CaseResult(
                        test_id=test.id,
                        verdict=Verdict.ERROR,
                        message=f"{type(exc).__name__}: {exc}",
                    )
                )
        return ExecutionReport.from_cases(cases)


@pytest.fixture
def tiny_sandbox() -> TinySandbox:
    return TinySandbox()


def make_task(
    task_id: str = "custom/0",
    description: str = "Write a function add_one(x) that returns x plus one.",
    entry_point: str = "add_one",
    hidden_tests: tuple[str, ...] = (),
) -> Task:
    return Task(
        task_id=task_id,
        description=description,
        entry_point=entry_point,
        hidden_tests=hidden_tests,
    )


def make_case(assertion_text: str, valid: bool = True) -> GeneratedTestCase:
    case = GeneratedTestCase.from_assertion(assertion_text)
    if valid:
        from dataclasses import replace

        case = replace(case, classification=TestClassification.VALID)
    return case


def make_report(passing: list[str], failing: list[str]) -> ExecutionReport:
    cases = [CaseResult(test_id=i, verdict=Verdict.PASS) for i in passing]
    cases += [
        CaseResult(test_id=i, verdict=Verdict.FAIL, message="assertion failed") for i in failing
    ]
    return ExecutionReport.from_cases(cases)


FIXTURE_TASK = Task(
    task_id="fixture/add-one",
    description="Write a function add_one(x) that returns x plus one.",
    entry_point="add_one",
    hidden_tests=("assert add_one(10) == 11",),
)

FIXTURE_RUN_CONFIG = RunConfig(
    agent_cfg=AgentConfig(n_prompts=1, n_tests=2, n_snippets=1, parse_retry=1),
    settings=ModelSettings(),
)
