"""Immutable domain types shared by every pipeline stage.

No I/O and no LLM traffic here; everything is a plain value that is safe to
copy across threads.
"""

from __future__ import annotations

import bisect
import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence


class SourceDataset(str, Enum):
    HUMANEVAL = "humaneval"
    HUMANEVAL_ET = "humaneval-et"
    MBPP = "mbpp"
    MBPP_ET = "mbpp-et"
    CUSTOM = "custom"

    @property
    def humaneval_family(self) -> bool:
        return self in (SourceDataset.HUMANEVAL, SourceDataset.HUMANEVAL_ET)

    @property
    def mbpp_family(self) -> bool:
        return self in (SourceDataset.MBPP, SourceDataset.MBPP_ET)


@dataclass(frozen=True)
class Task:
    """One programming problem.

    ``hidden_tests`` are dataset-provided programs used only for final
    scoring; they must never reach an agent prompt.
    """

    task_id: str
    description: str
    entry_point: str = ""
    hidden_tests: tuple[str, ...] = ()
    source_dataset: SourceDataset = SourceDataset.CUSTOM

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if self.source_dataset.humaneval_family and not self.entry_point:
            raise ValueError(f"task {self.task_id}: entry_point required for {self.source_dataset.value}")


@dataclass(frozen=True)
class ScoreVector:
    """Four binary judgments; only all-ones passes the gate."""

    clarity: int
    relevance: int
    conciseness: int
    context: int

    def __post_init__(self) -> None:
        for name in ("clarity", "relevance", "conciseness", "context"):
            bit = getattr(self, name)
            if bit not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1, got {bit!r}")

    @property
    def bits(self) -> tuple[int, int, int, int]:
        return (self.clarity, self.relevance, self.conciseness, self.context)

    @property
    def accepted(self) -> bool:
        return self.bits == (1, 1, 1, 1)


@dataclass(frozen=True)
class CotPrompt:
    """A step-by-step plan produced by the prompt agent."""

    text: str
    origin_index: int
    score: ScoreVector | None = None

    def __post_init__(self) -> None:
        if self.origin_index < 0:
            raise ValueError("origin_index must be >= 0")


class TestClassification(str, Enum):
    VALID = "valid"
    EMPTY_INPUT = "empty-input"
    INCOMPLETE_FORMAT = "incomplete-format"
    INVALID = "invalid"


def normalize_assertion(text: str) -> str:
    """Collapse whitespace so textual duplicates share one identity."""
    return " ".join(text.split())


def assertion_id(text: str) -> str:
    digest = hashlib.sha256(normalize_assertion(text).encode("utf-8")).hexdigest()
    return f"t{digest[:10]}"


@dataclass(frozen=True)
class GeneratedTestCase:
    """A single executable assertion with an optional validity judgment."""

    id: str
    assertion_text: str
    classification: TestClassification | None = None

    @classmethod
    def from_assertion(cls, text: str) -> "GeneratedTestCase":
        return cls(id=assertion_id(text), assertion_text=text.strip())


class SyntaxState(str, Enum):
    UNKNOWN = "unknown"
    OK = "ok"
    FAILED = "failed"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class CaseResult:
    test_id: str
    verdict: Verdict
    message: str = ""
    duration_ms: int = 0


@dataclass(frozen=True)
class ExecutionReport:
    """Per-case verdicts for one snippet against the selected test pool."""

    per_case: tuple[CaseResult, ...]
    passed_count: int
    failed_set: frozenset[str]

    def __post_init__(self) -> None:
        ids = [c.test_id for c in self.per_case]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate test ids in report")
        passed = sum(1 for c in self.per_case if c.verdict is Verdict.PASS)
        failed = frozenset(c.test_id for c in self.per_case if c.verdict is not Verdict.PASS)
        if passed != self.passed_count or failed != self.failed_set:
            raise ValueError("report counters inconsistent with per-case verdicts")

    @classmethod
    def from_cases(cls, cases: Iterable[CaseResult]) -> "ExecutionReport":
        per_case = tuple(cases)
        return cls(
            per_case=per_case,
            passed_count=sum(1 for c in per_case if c.verdict is Verdict.PASS),
            failed_set=frozenset(c.test_id for c in per_case if c.verdict is not Verdict.PASS),
        )

    @property
    def all_passed(self) -> bool:
        return not self.failed_set


EMPTY_REPORT = ExecutionReport(per_case=(), passed_count=0, failed_set=frozenset())


@dataclass(frozen=True)
class CodeSnippet:
    """Candidate program source with provenance and execution history."""

    source: str
    origin_index: int
    repair_round: int = 0
    syntax_ok: SyntaxState = SyntaxState.UNKNOWN
    last_report: ExecutionReport | None = None

    def __post_init__(self) -> None:
        if self.origin_index < 0 or self.repair_round < 0:
            raise ValueError("origin_index and repair_round must be >= 0")


@dataclass(frozen=True)
class RepairAdvice:
    """Repair-agent output, or the failed-case digest when pruned."""

    text: str
    score: ScoreVector | None = None
    is_fallback: bool = False


def failed_case_digest(report: ExecutionReport, tests: Sequence[GeneratedTestCase]) -> str:
    """Canonical substitution text: failed assertion texts plus error messages."""
    by_id = {t.id: t for t in tests}
    lines: list[str] = []
    for case in report.per_case:
        if case.verdict is Verdict.PASS:
            continue
        test = by_id.get(case.test_id)
        lines.append(test.assertion_text if test is not None else case.test_id)
        if case.message:
            lines.append(f"# {case.verdict.value}: {case.message}")
    return "\n".join(lines)


@dataclass(frozen=True)
class RankedEntry:
    snippet: CodeSnippet
    report: ExecutionReport


def ranking_key(entry: RankedEntry) -> tuple[int, int, int]:
    """Passed cases descending, repair round ascending, origin ascending."""
    return (-entry.report.passed_count, entry.snippet.repair_round, entry.snippet.origin_index)


@dataclass(frozen=True)
class RankedCodeSet:
    """Candidate store kept totally ordered by :func:`ranking_key`."""

    entries: tuple[RankedEntry, ...] = ()

    def __post_init__(self) -> None:
        keys = [ranking_key(e) for e in self.entries]
        if keys != sorted(keys):
            raise ValueError("ranked entries out of order")

    def insert(self, snippet: CodeSnippet, report: ExecutionReport) -> "RankedCodeSet":
        entry = RankedEntry(snippet, report)
        keys = [ranking_key(e) for e in self.entries]
        idx = bisect.bisect_right(keys, ranking_key(entry))
        return RankedCodeSet(self.entries[:idx] + (entry,) + self.entries[idx:])

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)
