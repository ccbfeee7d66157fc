"""Process-isolated execution of candidate programs against test cases.

The controller materializes the embedded driver script
(:mod:`codecor.sandbox_runner`) into a fresh temp directory, speaks the
line-oriented JSON protocol over the child's stdin/stdout, and enforces the
total time budget with an OS-level kill. Per-case watchdogs live in the
child. A child that dies mid-run triggers a one-process-per-case rerun of
the unreported cases.
"""

from __future__ import annotations

import importlib.resources
import json
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import ProtocolError, SandboxUnavailableError
from .model import (
    EMPTY_REPORT,
    CaseResult,
    CodeSnippet,
    ExecutionReport,
    GeneratedTestCase,
    SyntaxState,
    TestClassification,
    Verdict,
)

DEFAULT_ENV_ALLOWLIST = ("PATH", "LANG", "LC_ALL", "PYTHONIOENCODING")

_FALLBACK_GRACE_S = 2.0

_SYNTAX_CHECK_PROGRAM = (
    "import json, sys\n"
    "src = sys.stdin.read()\n"
    "try:\n"
    "    compile(src, '<snippet>', 'exec')\n"
    "    print(json.dumps({'ok': True}))\n"
    "except SyntaxError as e:\n"
    "    print(json.dumps({'ok': False, 'message': e.msg or str(e), 'line': e.lineno}))\n"
    "except ValueError as e:\n"
    "    print(json.dumps({'ok': False, 'message': str(e), 'line': None}))\n"
)


@dataclass(frozen=True)
class SandboxConfig:
    interpreter_path: str = sys.executable
    per_case_timeout_ms: int = 5000
    total_timeout_ms: int = 60000
    workdir: str | None = None  # base dir for the fresh per-execution temp dirs
    env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST

    def __post_init__(self) -> None:
        if self.per_case_timeout_ms <= 0 or self.total_timeout_ms <= 0:
            raise ValueError("timeouts must be > 0")


@dataclass(frozen=True)
class SyntaxCheckResult:
    ok: bool
    message: str = ""
    line: int | None = None


def runner_source() -> str:
    """Source text of the embedded driver script."""
    return (
        importlib.resources.files("codecor")
        .joinpath("sandbox_runner.py")
        .read_text(encoding="utf-8")
    )


class ProcessSandbox:
    """One isolated child process per execution; multiple sandboxes may coexist."""

    def __init__(self, config: SandboxConfig | None = None) -> None:
        self.config = config or SandboxConfig()

    # -- syntax checking ----------------------------------------------------

    def syntax_check(self, source: str) -> SyntaxCheckResult:
        """Parse the source in the target interpreter without executing it."""
        if self._is_current_interpreter():
            try:
                compile(source, "<snippet>", "exec")
                return SyntaxCheckResult(ok=True)
            except SyntaxError as exc:
                return SyntaxCheckResult(ok=False, message=exc.msg or str(exc), line=exc.lineno)
            except ValueError as exc:
                return SyntaxCheckResult(ok=False, message=str(exc))
        return self._syntax_check_subprocess(source)

    def _is_current_interpreter(self) -> bool:
        try:
            return os.path.realpath(self.config.interpreter_path) == os.path.realpath(sys.executable)
        except OSError:
            return False

    def _syntax_check_subprocess(self, source: str) -> SyntaxCheckResult:
        try:
            proc = subprocess.run(
                [self.config.interpreter_path, "-I", "-c", _SYNTAX_CHECK_PROGRAM],
                input=source,
                capture_output=True,
                text=True,
                timeout=max(self.config.per_case_timeout_ms / 1000.0, 5.0),
            )
        except FileNotFoundError as exc:
            raise SandboxUnavailableError(f"interpreter missing: {self.config.interpreter_path}") from exc
        except subprocess.TimeoutExpired as exc:
            raise SandboxUnavailableError("syntax check timed out") from exc
        try:
            body = json.loads(proc.stdout.strip().splitlines()[-1])
        except (ValueError, IndexError) as exc:
            raise SandboxUnavailableError(f"syntax checker failed: {proc.stderr[:200]}") from exc
        return SyntaxCheckResult(
            ok=bool(body["ok"]),
            message=body.get("message", ""),
            line=body.get("line"),
        )

    # -- execution ----------------------------------------------------------

    def run_tests(
        self, snippet: CodeSnippet, tests: Sequence[GeneratedTestCase]
    ) -> ExecutionReport:
        """Run every selected test case against the snippet in one child."""
        if snippet.syntax_ok is not SyntaxState.OK:
            raise ValueError("run_tests requires a syntax-checked snippet")
        for test in tests:
            if test.classification is not TestClassification.VALID:
                raise ValueError(f"test {test.id} is not Valid")
        ids = [t.id for t in tests]
        if len(ids) != len(set(ids)):
            raise ValueError("test ids must be unique")
        if not tests:
            return EMPTY_REPORT

        deadline = time.monotonic() + self.config.total_timeout_ms / 1000.0
        request = self._request_document(snippet.source, tests)
        rc, results, sentinel, bad_lines, killed = self._spawn(
            request, timeout_s=self.config.total_timeout_ms / 1000.0
        )

        if killed:
            return self._merge(tests, results, missing_verdict=Verdict.TIMEOUT, missing_message="total budget exceeded")
        if sentinel and not bad_lines and all(t.id in results for t in tests):
            unknown = set(results) - set(ids)
            if unknown:
                raise ProtocolError(f"runner reported unknown case ids: {sorted(unknown)}")
            return self._merge(tests, results)
        if rc == 0:
            raise ProtocolError(
                f"runner exited cleanly with a broken protocol "
                f"(sentinel={sentinel}, unparseable_lines={len(bad_lines)})"
            )
        # Child died mid-run: rerun each unreported case in its own process.
        return self._per_case_fallback(snippet, tests, results, rc, deadline)

    # -- internals ----------------------------------------------------------

    def _request_document(self, source: str, tests: Sequence[GeneratedTestCase]) -> str:
        return json.dumps(
            {
                "source": source,
                "entry_point": "",
                "cases": [{"id": t.id, "assertion_text": t.assertion_text} for t in tests],
                "per_case_timeout_ms": self.config.per_case_timeout_ms,
            },
            ensure_ascii=False,
        )

    def _child_env(self, tmpdir: str) -> dict[str, str]:
        env = {k: os.environ[k] for k in self.config.env_allowlist if k in os.environ}
        env.update(
            {
                "HOME": tmpdir,
                "TMPDIR": tmpdir,
                "PYTHONDONTWRITEBYTECODE": "1",
                "PYTHONIOENCODING": "utf-8",
            }
        )
        return env

    def _spawn(
        self, request: str, timeout_s: float
    ) -> tuple[int, dict[str, CaseResult], bool, list[str], bool]:
        """Run one child; returns (rc, results_by_id, sentinel_seen, bad_lines, killed)."""
        with tempfile.TemporaryDirectory(prefix="codecor-run-", dir=self.config.workdir) as tmpdir:
            runner_path = Path(tmpdir) / "runner.py"
            runner_path.write_text(runner_source(), encoding="utf-8")
            try:
                proc = subprocess.Popen(
                    [self.config.interpreter_path, "-I", str(runner_path)],
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    cwd=tmpdir,
                    env=self._child_env(tmpdir),
                    text=True,
                    encoding="utf-8",
                )
            except FileNotFoundError as exc:
                raise SandboxUnavailableError(
                    f"interpreter missing: {self.config.interpreter_path}"
                ) from exc
            killed = False
            try:
                stdout, _stderr = proc.communicate(input=request + "\n", timeout=timeout_s)
            except subprocess.TimeoutExpired:
                killed = True
                proc.kill()
                stdout, _stderr = proc.communicate()
        results: dict[str, CaseResult] = {}
        sentinel = False
        bad_lines: list[str] = []
        for line in (stdout or "").splitlines():
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except ValueError:
                bad_lines.append(line)
                continue
            if doc.get("event") == "done":
                sentinel = True
                continue
            try:
                results[doc["id"]] = CaseResult(
                    test_id=doc["id"],
                    verdict=Verdict(doc["verdict"]),
                    message=doc.get("message", ""),
                    duration_ms=int(doc.get("duration_ms", 0)),
                )
            except (KeyError, ValueError, TypeError):
                bad_lines.append(line)
        return proc.returncode, results, sentinel, bad_lines, killed

    def _per_case_fallback(
        self,
        snippet: CodeSnippet,
        tests: Sequence[GeneratedTestCase],
        results: dict[str, CaseResult],
        child_rc: int,
        deadline: float,
    ) -> ExecutionReport:
        merged = dict(results)
        per_case_s = self.config.per_case_timeout_ms / 1000.0
        for test in tests:
            if test.id in merged:
                continue
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                merged[test.id] = CaseResult(
                    test_id=test.id, verdict=Verdict.TIMEOUT, message="total budget exceeded"
                )
                continue
            request = self._request_document(snippet.source, [test])
            rc, single, sentinel, _bad, killed = self._spawn(
                request, timeout_s=min(per_case_s + _FALLBACK_GRACE_S, remaining)
            )
            if killed:
                merged[test.id] = CaseResult(
                    test_id=test.id,
                    verdict=Verdict.TIMEOUT,
                    message=f"timed out after {self.config.per_case_timeout_ms} ms",
                )
            elif sentinel and test.id in single:
                merged[test.id] = single[test.id]
            else:
                merged[test.id] = CaseResult(
                    test_id=test.id,
                    verdict=Verdict.ERROR,
                    message=f"sandbox child terminated (exit code {rc if rc else child_rc})",
                )
        return ExecutionReport.from_cases(merged[t.id] for t in tests)

    @staticmethod
    def _merge(
        tests: Sequence[GeneratedTestCase],
        results: dict[str, CaseResult],
        missing_verdict: Verdict = Verdict.ERROR,
        missing_message: str = "no verdict reported",
    ) -> ExecutionReport:
        cases = [
            results.get(
                t.id,
                CaseResult(test_id=t.id, verdict=missing_verdict, message=missing_message),
            )
            for t in tests
        ]
        return ExecutionReport.from_cases(cases)
