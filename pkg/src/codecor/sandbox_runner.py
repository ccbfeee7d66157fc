"""In-sandbox test driver.

Standalone stdlib-only script. The controller materializes this file into a
fresh temp directory and runs it with ``python -I``; it must never import
anything outside the standard library.

Wire protocol (UTF-8, one JSON document per line):
  stdin   {"source": str, "entry_point": str,
           "cases": [{"id": str, "assertion_text": str}, ...],
           "per_case_timeout_ms": int}
  stdout  {"id": str, "verdict": "pass|fail|error|timeout",
           "message": str, "duration_ms": int}   (one line per case,
          written as soon as the case finishes)
          {"event": "done"}                       (terminal sentinel)

Stdout belongs to the protocol; the snippet's own prints are captured into a
scratch buffer. Stderr is diagnostic only.
"""

from __future__ import annotations

import contextlib
import io
import json
import signal
import sys
import time
from typing import Iterator


class _CaseTimeout(BaseException):
    """Raised by the watchdog; BaseException so snippets cannot swallow it."""


_HAS_ITIMER = hasattr(signal, "setitimer") and hasattr(signal, "SIGALRM")


def _watchdog_fire(signum, frame):
    raise _CaseTimeout()


@contextlib.contextmanager
def _watchdog(timeout_ms: int):
    """Arm a per-case wall-clock alarm; the controller's kill is the backstop."""
    if not _HAS_ITIMER or timeout_ms <= 0:
        yield
        return
    signal.setitimer(signal.ITIMER_REAL, timeout_ms / 1000.0)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)


def _run_guarded(code, namespace, timeout_ms: int) -> tuple[str, str]:
    """Execute compiled code; returns (verdict, message)."""
    scratch = io.StringIO()
    try:
        with contextlib.redirect_stdout(scratch), contextlib.redirect_stderr(scratch):
            with _watchdog(timeout_ms):
                exec(code, namespace)
        return "pass", ""
    except _CaseTimeout:
        return "timeout", f"timed out after {timeout_ms} ms"
    except AssertionError as exc:
        return "fail", str(exc) or "assertion failed"
    except BaseException as exc:  # noqa: BLE001 - verdict boundary
        return "error", f"{type(exc).__name__}: {exc}"


def execute(request: dict) -> Iterator[dict]:
    """Yield one result document per case, in request order."""
    source = request["source"]
    cases = request["cases"]
    timeout_ms = int(request.get("per_case_timeout_ms", 0))
    if not cases:
        raise ValueError("cases must be non-empty")
    ids = [case["id"] for case in cases]
    if len(ids) != len(set(ids)):
        raise ValueError("case ids must be unique")

    namespace: dict = {"__name__": "__snippet__"}

    try:
        module_code = compile(source, "<snippet>", "exec")
    except SyntaxError as exc:
        load_verdict, load_message = "error", f"SyntaxError: {exc}"
    else:
        load_verdict, load_message = _run_guarded(module_code, namespace, timeout_ms)

    if load_verdict != "pass":
        for case in cases:
            yield {
                "id": case["id"],
                "verdict": load_verdict,
                "message": load_message,
                "duration_ms": 0,
            }
        return

    for case in cases:
        start = time.monotonic()
        try:
            case_code = compile(case["assertion_text"], f"<case {case['id']}>", "exec")
        except SyntaxError as exc:
            verdict, message = "error", f"SyntaxError: {exc}"
        else:
            verdict, message = _run_guarded(case_code, namespace, timeout_ms)
        yield {
            "id": case["id"],
            "verdict": verdict,
            "message": message,
            "duration_ms": int((time.monotonic() - start) * 1000),
        }


def main() -> int:
    if _HAS_ITIMER:
        signal.signal(signal.SIGALRM, _watchdog_fire)
    line = sys.stdin.readline()
    if not line.strip():
        print("empty request", file=sys.stderr)
        return 2
    try:
        request = json.loads(line)
    except ValueError as exc:
        print(f"bad request: {exc}", file=sys.stderr)
        return 2
    out = sys.stdout
    try:
        for result in execute(request):
            out.write(json.dumps(result, ensure_ascii=False) + "\n")
            out.flush()
    except (ValueError, KeyError, TypeError) as exc:
        print(f"bad request: {exc}", file=sys.stderr)
        return 2
    out.write(json.dumps({"event": "done"}) + "\n")
    out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
