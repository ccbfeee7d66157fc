"""Benchmark harness: dataset loading, hidden-test scoring, text metrics,
and run-report emission.

Hidden tests are stored verbatim at load time (so load/dump round-trips are
byte-faithful) and composed into executable programs only at scoring time.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import MalformedRecordError, ProtocolError
from .model import (
    CodeSnippet,
    GeneratedTestCase,
    SourceDataset,
    SyntaxState,
    Task,
    TestClassification,
)

# ---------------------------------------------------------------------------
# Text metrics


def edit_distance(a: str, b: str) -> int:
    """Character-level Levenshtein distance (two-row DP)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str) -> float:
    """Whitespace-tokenized BLEU-4 with brevity penalty.

    Uniform weights over orders 1..min(4, len(candidate)); a zero clipped
    count at order >= 2 gets add-one smoothing on numerator and denominator;
    a zero unigram match or an empty candidate is 0 by definition.
    """
    cand = candidate.split()
    ref = reference.split()
    if not cand:
        return 0.0
    max_order = min(4, len(cand))
    log_sum = 0.0
    for n in range(1, max_order + 1):
        counts = _ngrams(cand, n)
        ref_counts = _ngrams(ref, n)
        clipped = sum(min(count, ref_counts[gram]) for gram, count in counts.items())
        total = sum(counts.values())
        if clipped == 0:
            if n == 1:
                return 0.0
            clipped, total = 1, total + 1
        log_sum += math.log(clipped / total) / max_order
    brevity = min(1.0, math.exp(1.0 - len(ref) / len(cand)))
    return brevity * math.exp(log_sum)


# ---------------------------------------------------------------------------
# Dataset loading


@dataclass(frozen=True)
class DatasetRecord:
    task: Task
    reference_solution: str | None = None


def _require(obj: dict, keys: Sequence[str], line_no: int) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise MalformedRecordError(line_no, f"missing keys {missing}")


def first_function_name(source: str) -> str | None:
    """Name of the first function defined at any level of the module."""
    import ast

    try:
        tree = ast.parse(source)
    except SyntaxError:
        return None
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            return node.name
    return None


def load_dataset(path: str | Path, kind: SourceDataset) -> list[DatasetRecord]:
    """Read a JSON-lines dataset file into typed records."""
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise MalformedRecordError(line_no, f"not JSON: {exc}")
        if not isinstance(obj, dict):
            raise MalformedRecordError(line_no, "record is not an object")
        try:
            record = _record_from_obj(obj, kind, line_no)
        except (TypeError, ValueError) as exc:
            raise MalformedRecordError(line_no, str(exc))
        if record.task.task_id in seen:
            raise MalformedRecordError(line_no, f"duplicate task_id {record.task.task_id}")
        seen.add(record.task.task_id)
        records.append(record)
    return records


def _record_from_obj(obj: dict, kind: SourceDataset, line_no: int) -> DatasetRecord:
    if kind.humaneval_family:
        _require(obj, ("task_id", "prompt", "entry_point", "canonical_solution", "test"), line_no)
        if not str(obj["entry_point"]).strip():
            raise MalformedRecordError(line_no, "empty entry_point")
        task = Task(
            task_id=str(obj["task_id"]),
            description=obj["prompt"],
            entry_point=obj["entry_point"],
            hidden_tests=(obj["test"],),
            source_dataset=kind,
        )
        return DatasetRecord(task=task, reference_solution=obj["canonical_solution"])
    if kind.mbpp_family:
        _require(obj, ("task_id", "text", "code", "test_list"), line_no)
        entry = first_function_name(obj["code"])
        if entry is None:
            raise MalformedRecordError(line_no, "no function definition in code")
        task = Task(
            task_id=str(obj["task_id"]),
            description=obj["text"],
            entry_point=entry,
            hidden_tests=tuple(obj["test_list"]),
            source_dataset=kind,
        )
        return DatasetRecord(task=task, reference_solution=obj["code"])
    _require(obj, ("task_id", "description"), line_no)
    task = Task(
        task_id=str(obj["task_id"]),
        description=obj["description"],
        entry_point=obj.get("entry_point", ""),
        hidden_tests=tuple(obj.get("hidden_tests", ())),
        source_dataset=SourceDataset.CUSTOM,
    )
    return DatasetRecord(task=task, reference_solution=obj.get("reference"))


def dump_dataset(records: Sequence[DatasetRecord], kind: SourceDataset, path: str | Path) -> None:
    """Write records back out in the source schema (inverse of load_dataset)."""
    lines = []
    for record in records:
        task = record.task
        if kind.humaneval_family:
            obj = {
                "task_id": task.task_id,
                "prompt": task.description,
                "entry_point": task.entry_point,
                "canonical_solution": record.reference_solution,
                "test": task.hidden_tests[0],
            }
        elif kind.mbpp_family:
            obj = {
                "task_id": int(task.task_id) if task.task_id.isdigit() else task.task_id,
                "text": task.description,
                "code": record.reference_solution,
                "test_list": list(task.hidden_tests),
            }
        else:
            obj = {
                "task_id": task.task_id,
                "description": task.description,
                "entry_point": task.entry_point,
                "hidden_tests": list(task.hidden_tests),
                "reference": record.reference_solution,
            }
        lines.append(json.dumps(obj, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Hidden-test scoring


def hidden_programs(task: Task) -> tuple[str, ...]:
    """Executable form of the stored hidden tests.

    HumanEval-family test programs define check(candidate); the standard
    driver call is appended here, at scoring time.
    """
    if task.source_dataset.humaneval_family:
        return tuple(f"{t}\n\ncheck({task.entry_point})\n" for t in task.hidden_tests)
    return task.hidden_tests


def _score_one(task: Task, final: str | None, sandbox) -> bool:
    if final is None or not final.strip():
        return False
    if not sandbox.syntax_check(final).ok:
        return False
    programs = hidden_programs(task)
    if not programs:
        return True
    snippet = CodeSnippet(source=final, origin_index=0, syntax_ok=SyntaxState.OK)
    cases = [
        GeneratedTestCase(
            id=f"hidden-{i}", assertion_text=program, classification=TestClassification.VALID
        )
        for i, program in enumerate(programs)
    ]
    try:
        report = sandbox.run_tests(snippet, cases)
    except ProtocolError:
        return False
    return report.all_passed


def score_hidden(
    records: Sequence[DatasetRecord],
    finals: Mapping[str, str],
    sandbox,
    jobs: int = 1,
) -> dict[str, bool]:
    """Run each final program against its hidden tests; missing finals fail."""
    if jobs <= 1 or len(records) <= 1:
        return {
            r.task.task_id: _score_one(r.task, finals.get(r.task.task_id), sandbox)
            for r in records
        }
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = pool.map(
            lambda r: (r.task.task_id, _score_one(r.task, finals.get(r.task.task_id), sandbox)),
            records,
        )
        return dict(results)


def score_pass_at_1(
    records: Sequence[DatasetRecord], finals: Mapping[str, str], sandbox, jobs: int = 1
) -> float:
    """Fraction of tasks whose single final program passes every hidden test."""
    if not records:
        return 0.0
    scored = score_hidden(records, finals, sandbox, jobs=jobs)
    return sum(scored.values()) / len(records)


# ---------------------------------------------------------------------------
# Run reports


@dataclass(frozen=True)
class TaskScore:
    task_id: str
    passed_hidden: int
    edit_distance: int | None
    bleu: float | None
    wall_ms: int
    llm_calls: int
    tokens: int


@dataclass(frozen=True)
class RunReport:
    per_task: tuple[TaskScore, ...]
    total_runtime_s: float
    baseline_pass_at_1: float | None = None

    @property
    def pass_at_1(self) -> float | None:
        if not self.per_task:
            return None
        return sum(t.passed_hidden for t in self.per_task) / len(self.per_task)

    @property
    def mean_edit_distance(self) -> float | None:
        values = [t.edit_distance for t in self.per_task if t.edit_distance is not None]
        return sum(values) / len(values) if values else None

    @property
    def mean_bleu(self) -> float | None:
        values = [t.bleu for t in self.per_task if t.bleu is not None]
        return sum(values) / len(values) if values else None


def emit_report(report: RunReport, path: str | Path) -> Path:
    """One JSON line per task plus one aggregate line; rewrites are byte-identical."""
    lines = []
    for t in report.per_task:
        lines.append(
            json.dumps(
                {
                    "task_id": t.task_id,
                    "passed_hidden": t.passed_hidden,
                    "edit_distance": t.edit_distance,
                    "bleu": t.bleu,
                    "wall_ms": t.wall_ms,
                    "llm_calls": t.llm_calls,
                    "tokens": t.tokens,
                },
                ensure_ascii=False,
            )
        )
    aggregate = {
        "aggregate": True,
        "tasks": len(report.per_task),
        "pass_at_1": report.pass_at_1,
        "mean_edit_distance": report.mean_edit_distance,
        "mean_bleu": report.mean_bleu,
        "total_runtime_s": report.total_runtime_s,
    }
    if report.baseline_pass_at_1 is not None:
        aggregate["baseline_pass_at_1"] = report.baseline_pass_at_1
    lines.append(json.dumps(aggregate, ensure_ascii=False))
    out = Path(path)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


# ---------------------------------------------------------------------------
# Finals directory mapping (shared by bench writes and score reads)


def final_filename(task_id: str) -> str:
    return re.sub(r"[^\w.-]", "_", task_id) + ".py"


def write_finals(finals: Mapping[str, str], directory: str | Path) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for task_id, source in finals.items():
        (out / final_filename(task_id)).write_text(source, encoding="utf-8")


def read_finals(
    records: Sequence[DatasetRecord], directory: str | Path
) -> tuple[dict[str, str], list[str]]:
    """Finals keyed by task_id plus warnings for missing/unreadable files."""
    finals: dict[str, str] = {}
    warnings: list[str] = []
    base = Path(directory)
    for record in records:
        task_id = record.task.task_id
        path = base / final_filename(task_id)
        if not path.exists():
            warnings.append(f"missing final for {task_id}: {path}")
            continue
        try:
            finals[task_id] = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            warnings.append(f"unreadable final for {task_id}: {exc}")
    return finals, warnings
