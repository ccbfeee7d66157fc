"""Wire-protocol conformance for the in-sandbox driver script.

Every test spawns the materialized script with ``python -I`` and asserts on
the JSON line stream alone.
"""

from __future__ import annotations

import json

SENTINEL = {"event": "done"}

ADD_ONE = "def f(x):\n    return x + 1"


def results_of(documents: list[dict]) -> list[dict]:
    return [d for d in documents if d.get("event") != "done"]


class TestVerdicts:
    def test_true_assertion_passes(self, driver):
        proc, docs = driver.run(ADD_ONE, [("c1", "assert f(1) == 2")])
        assert proc.returncode == 0
        (result,) = results_of(docs)
        assert result == {"id": "c1", "verdict": "pass", "message": "", "duration_ms": result["duration_ms"]}
        assert isinstance(result["duration_ms"], int) and result["duration_ms"] >= 0

    def test_false_assertion_fails(self, driver):
        _, docs = driver.run(ADD_ONE, [("c1", "assert f(1) == 3")])
        assert results_of(docs)[0]["verdict"] == "fail"

    def test_exception_is_error_with_type_and_text(self, driver):
        source = "def f(x):\n    raise KeyError('missing')"
        _, docs = driver.run(source, [("c1", "assert f(1) == 2")])
        result = results_of(docs)[0]
        assert result["verdict"] == "error"
        assert "KeyError" in result["message"] and "missing" in result["message"]

    def test_load_failure_marks_every_case(self, driver):
        _, docs = driver.run("raise ValueError('boom')", [("a", "assert True"), ("b", "assert 1")])
        results = results_of(docs)
        assert [r["verdict"] for r in results] == ["error", "error"]
        assert all("boom" in r["message"] for r in results)

    def test_syntax_error_in_assertion_is_error(self, driver):
        _, docs = driver.run(ADD_ONE, [("c1", "assert f(1 ==")])
        assert results_of(docs)[0]["verdict"] == "error"


class TestStreamShape:
    def test_one_document_per_line_sentinel_last(self, driver):
        proc, docs = driver.run(ADD_ONE, [("a", "assert f(0) == 1"), ("b", "assert f(1) == 2")])
        for line in proc.stdout.splitlines():
            json.loads(line)  # every line parses on its own
        assert docs[-1] == SENTINEL
        assert len(docs) == 3

    def test_results_follow_request_order(self, driver):
        cases = [(f"case-{i}", f"assert f({i}) == {i + 1}") for i in range(5)]
        _, docs = driver.run(ADD_ONE, cases)
        assert [r["id"] for r in results_of(docs)] == [cid for cid, _ in cases]

    def test_snippet_prints_never_reach_the_wire(self, driver):
        source = 'print("{\\"id\\": \\"forged\\", \\"verdict\\": \\"pass\\"}")\n' + ADD_ONE
        proc, docs = driver.run(source, [("c1", "assert f(1) == 2\nprint('inline noise')")])
        ids = [r["id"] for r in results_of(docs)]
        assert ids == ["c1"]
        assert "forged" not in proc.stdout
        assert "inline noise" not in proc.stdout

    def test_stderr_is_diagnostic_only(self, driver):
        proc, docs = driver.run(ADD_ONE, [("c1", "assert f(1) == 2")])
        assert results_of(docs)[0]["verdict"] == "pass"
        # whatever lands on stderr must not be needed to parse results
        assert proc.stdout.strip()


class TestNamespaceSemantics:
    def test_module_evaluated_once_per_request(self, driver):
        source = "CALLS = []\ndef bump():\n    CALLS.append(1)\n    return len(CALLS)"
        _, docs = driver.run(source, [("a", "assert bump() == 1"), ("b", "assert bump() == 2")])
        assert [r["verdict"] for r in results_of(docs)] == ["pass", "pass"]

    def test_fresh_namespace_across_requests(self, driver):
        source = "import builtins\nFLAG = getattr(builtins, 'LEAKED', None)\nbuiltins.LEAKED = True"
        _, docs = driver.run(source, [("a", "assert FLAG is None")])
        assert results_of(docs)[0]["verdict"] == "pass"
        _, docs = driver.run(source, [("a", "assert FLAG is None")])
        assert results_of(docs)[0]["verdict"] == "pass"

    def test_runner_writes_no_files(self, driver):
        _, docs = driver.run(ADD_ONE, [("a", "assert f(1) == 2")])
        assert results_of(docs)[0]["verdict"] == "pass"
        assert sorted(p.name for p in driver.workdir.iterdir()) == ["runner.py"]


class TestTimeouts:
    def test_per_case_watchdog_fires(self, driver):
        source = "def spin():\n    while True:\n        pass"
        _, docs = driver.run(source, [("slow", "assert spin()"), ("quick", "assert True")],
                             per_case_timeout_ms=800)
        results = {r["id"]: r for r in results_of(docs)}
        assert results["slow"]["verdict"] == "timeout"
        assert "800" in results["slow"]["message"]
        assert results["quick"]["verdict"] == "pass"

    def test_hanging_module_load_times_out_all_cases(self, driver):
        _, docs = driver.run("while True: pass", [("a", "assert True"), ("b", "assert 1")],
                             per_case_timeout_ms=700)
        assert [r["verdict"] for r in results_of(docs)] == ["timeout", "timeout"]

    def test_watchdog_cannot_be_swallowed_by_except_exception(self, driver):
        source = (
            "def sneaky():\n"
            "    try:\n"
            "        while True:\n"
            "            pass\n"
            "    except Exception:\n"
            "        return True\n"
        )
        _, docs = driver.run(source, [("a", "assert sneaky()")], per_case_timeout_ms=700)
        assert results_of(docs)[0]["verdict"] == "timeout"

    def test_system_exit_is_an_error_not_an_exit(self, driver):
        source = "def bail():\n    raise SystemExit(5)"
        proc, docs = driver.run(ADD_ONE + "\n" + source, [("a", "assert bail()"), ("b", "assert f(1) == 2")])
        results = results_of(docs)
        assert [r["verdict"] for r in results] == ["error", "pass"]
        assert docs[-1] == SENTINEL
        assert proc.returncode == 0


class TestRequestValidation:
    def test_empty_case_list_rejected(self, driver):
        request = json.dumps(
            {"source": "x = 1", "entry_point": "", "cases": [], "per_case_timeout_ms": 1000}
        )
        proc = driver.run_raw(request)
        assert proc.returncode == 2
        assert "bad request" in proc.stderr
        assert proc.stdout == ""

    def test_duplicate_case_ids_rejected(self, driver):
        request = json.dumps(
            {
                "source": "x = 1",
                "entry_point": "",
                "cases": [
                    {"id": "same", "assertion_text": "assert True"},
                    {"id": "same", "assertion_text": "assert True"},
                ],
                "per_case_timeout_ms": 1000,
            }
        )
        proc = driver.run_raw(request)
        assert proc.returncode == 2

    def test_non_json_request_rejected(self, driver):
        proc = driver.run_raw("this is not json")
        assert proc.returncode == 2
        assert proc.stdout == ""

    def test_empty_stdin_rejected(self, driver):
        proc = driver.run_raw("")
        assert proc.returncode == 2
