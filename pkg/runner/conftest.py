"""Black-box harness for the in-sandbox driver script.

Materializes the driver into a scratch directory and speaks its wire
protocol over stdin/stdout, exactly as the controller does. Nothing here
imports the main package; the protocol is the only interface under test.
Point CODECOR_RUNNER_PATH at an alternative driver to test a different
build.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
DEFAULT_RUNNER = REPO_ROOT / "src" / "codecor" / "sandbox_runner.py"


def runner_source_path() -> Path:
    override = os.environ.get("CODECOR_RUNNER_PATH")
    path = Path(override) if override else DEFAULT_RUNNER
    if not path.exists():
        pytest.skip(f"driver script not found at {path}")
    return path


class ProtocolDriver:
    """One materialized driver script plus helpers to exchange documents."""

    def __init__(self, workdir: Path):
        self.workdir = workdir
        self.script = workdir / "runner.py"
        self.script.write_text(runner_source_path().read_text(encoding="utf-8"), encoding="utf-8")

    def run_raw(self, request_line: str, timeout_s: float = 30.0) -> subprocess.CompletedProcess:
        return subprocess.run(
            [sys.executable, "-I", str(self.script)],
            input=request_line + "\n",
            capture_output=True,
            text=True,
            cwd=self.workdir,
            timeout=timeout_s,
        )

    def run(
        self,
        source: str,
        cases: list[tuple[str, str]],
        per_case_timeout_ms: int = 3000,
        timeout_s: float = 30.0,
    ) -> tuple[subprocess.CompletedProcess, list[dict]]:
        request = json.dumps(
            {
                "source": source,
                "entry_point": "",
                "cases": [{"id": cid, "assertion_text": text} for cid, text in cases],
                "per_case_timeout_ms": per_case_timeout_ms,
            },
            ensure_ascii=False,
        )
        proc = self.run_raw(request, timeout_s=timeout_s)
        documents = [json.loads(line) for line in proc.stdout.splitlines() if line.strip()]
        return proc, documents


@pytest.fixture
def driver(tmp_path) -> ProtocolDriver:
    return ProtocolDriver(tmp_path)
