"""The four pruning gates: score gates for plans and repair advice,
classification pruning for test cases, syntax pruning for code.

Every gate partitions its input pool; nothing is silently dropped.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Generic, Protocol, Sequence, TypeVar

from .errors import MalformedScoreError
from .model import (
    CodeSnippet,
    CotPrompt,
    ExecutionReport,
    GeneratedTestCase,
    RepairAdvice,
    ScoreVector,
    SyntaxState,
    TestClassification,
    failed_case_digest,
)

T = TypeVar("T")

SCORE_RETRIES = 1  # one retry on a malformed judge reply, then prune/fallback


class SyntaxCheckLike(Protocol):
    ok: bool
    message: str


class PruneReason(str, Enum):
    SCORE_GATE = "score-gate"
    EMPTY_INPUT = "empty-input"
    INCOMPLETE_FORMAT = "incomplete-format"
    INVALID = "invalid"
    SYNTAX_ERROR = "syntax-error"
    MALFORMED_SCORE = "malformed-score"


@dataclass(frozen=True)
class PruneOutcome(Generic[T]):
    kept: tuple[T, ...]
    pruned: tuple[tuple[T, PruneReason], ...]

    def __len__(self) -> int:
        return len(self.kept) + len(self.pruned)


_SCORE_RE = re.compile(r"\[\s*([01])\s*,\s*([01])\s*,\s*([01])\s*,\s*([01])\s*\]")


def parse_score_vector(text: str) -> ScoreVector:
    """First bracketed list of exactly four 0/1 values, mapped positionally."""
    match = _SCORE_RE.search(text)
    if match is None:
        raise MalformedScoreError(f"no four-bit bracketed score in {text[:80]!r}")
    bits = tuple(int(g) for g in match.groups())
    return ScoreVector(*bits)


def _score_with_retry(raw_scorer: Callable[[T], str], item: T) -> ScoreVector | None:
    """Parse the judge's reply, retrying once; None means malformed twice."""
    for _ in range(SCORE_RETRIES + 1):
        try:
            return parse_score_vector(raw_scorer(item))
        except MalformedScoreError:
            continue
    return None


def prune_prompts(
    pool: Sequence[CotPrompt], scorer: Callable[[CotPrompt], str]
) -> PruneOutcome[CotPrompt]:
    """Score each unscored plan and keep only all-ones vectors."""
    kept: list[CotPrompt] = []
    pruned: list[tuple[CotPrompt, PruneReason]] = []
    for prompt in pool:
        if prompt.score is not None:
            raise ValueError("prune_prompts expects unscored items")
        score = _score_with_retry(scorer, prompt)
        if score is None:
            pruned.append((prompt, PruneReason.MALFORMED_SCORE))
        elif score.accepted:
            kept.append(replace(prompt, score=score))
        else:
            pruned.append((replace(prompt, score=score), PruneReason.SCORE_GATE))
    return PruneOutcome(kept=tuple(kept), pruned=tuple(pruned))


def static_test_check(assertion_text: str, entry_point: str) -> PruneReason | None:
    """Deterministic, LLM-free checks; None means the case survives to the judge.

    With an empty entry point (freeform tasks) only the format checks apply.
    """
    text = assertion_text.strip()
    if not text.startswith("assert") or "\n" in text:
        return PruneReason.INCOMPLETE_FORMAT
    try:
        module = ast.parse(text)
    except SyntaxError:
        return PruneReason.INCOMPLETE_FORMAT
    if len(module.body) != 1 or not isinstance(module.body[0], ast.Assert):
        return PruneReason.INCOMPLETE_FORMAT
    if not entry_point:
        return None
    calls = [
        node
        for node in ast.walk(module)
        if isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id == entry_point
    ]
    if not calls:
        return PruneReason.INVALID
    if all(not call.args and not call.keywords for call in calls):
        return PruneReason.EMPTY_INPUT
    return None


_CLASSIFY_RE = re.compile(r"\b(invalid|valid)\b", re.IGNORECASE)


def parse_classification(text: str) -> bool | None:
    """True for Valid, False for Invalid, None when the reply names neither."""
    match = _CLASSIFY_RE.search(text)
    if match is None:
        return None
    return match.group(1).lower() == "valid"


def prune_tests(
    pool: Sequence[GeneratedTestCase],
    entry_point: str,
    classifier: Callable[[GeneratedTestCase], str],
) -> PruneOutcome[GeneratedTestCase]:
    """Two-stage gate: local static checks, then LLM classification of survivors."""
    kept: list[GeneratedTestCase] = []
    pruned: list[tuple[GeneratedTestCase, PruneReason]] = []
    for case in pool:
        if case.classification is not None:
            raise ValueError("prune_tests expects unclassified items")
        reason = static_test_check(case.assertion_text, entry_point)
        if reason is not None:
            classification = {
                PruneReason.EMPTY_INPUT: TestClassification.EMPTY_INPUT,
                PruneReason.INCOMPLETE_FORMAT: TestClassification.INCOMPLETE_FORMAT,
                PruneReason.INVALID: TestClassification.INVALID,
            }[reason]
            pruned.append((replace(case, classification=classification), reason))
            continue
        verdict: bool | None = None
        for _ in range(SCORE_RETRIES + 1):
            verdict = parse_classification(classifier(case))
            if verdict is not None:
                break
        if verdict is None:
            pruned.append((case, PruneReason.MALFORMED_SCORE))
        elif verdict:
            kept.append(replace(case, classification=TestClassification.VALID))
        else:
            pruned.append(
                (replace(case, classification=TestClassification.INVALID), PruneReason.INVALID)
            )
    return PruneOutcome(kept=tuple(kept), pruned=tuple(pruned))


def prune_code(
    pool: Sequence[CodeSnippet], syntax_check: Callable[[str], SyntaxCheckLike]
) -> PruneOutcome[CodeSnippet]:
    """Keep only snippets the target interpreter can parse."""
    kept: list[CodeSnippet] = []
    pruned: list[tuple[CodeSnippet, PruneReason]] = []
    for snippet in pool:
        if snippet.syntax_ok is not SyntaxState.UNKNOWN:
            raise ValueError("prune_code expects syntax-unknown items")
        result = syntax_check(snippet.source)
        if result.ok:
            kept.append(replace(snippet, syntax_ok=SyntaxState.OK))
        else:
            pruned.append((replace(snippet, syntax_ok=SyntaxState.FAILED), PruneReason.SYNTAX_ERROR))
    return PruneOutcome(kept=tuple(kept), pruned=tuple(pruned))


def prune_repair_advice(
    advice: RepairAdvice,
    report: ExecutionReport,
    tests: Sequence[GeneratedTestCase],
    scorer: Callable[[RepairAdvice], str],
) -> RepairAdvice:
    """Score the advice; on rejection the failed cases replace it.

    Never returns nothing: the output is always usable downstream.
    """
    if advice.score is not None:
        raise ValueError("prune_repair_advice expects unscored advice")
    if not report.failed_set:
        raise ValueError("repair pruning requires a non-empty failed set")
    score = _score_with_retry(scorer, advice)
    if score is not None and score.accepted:
        return replace(advice, score=score)
    return RepairAdvice(text=failed_case_digest(report, tests), is_fallback=True)
