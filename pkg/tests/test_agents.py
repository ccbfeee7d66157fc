from __future__ import annotations

import pytest

from codecor import agents
from codecor.errors import GenerationEmptyError
from codecor.gateway import ScriptedBackend, TranscriptEntry
from codecor.model import CodeSnippet, RepairAdvice, ScoreVector, Task

from .conftest import make_case, make_report, make_task

CFG = agents.AgentConfig(n_prompts=3, n_tests=4, n_snippets=2, parse_retry=1)
SETTINGS = agents.ModelSettings()

HIDDEN_SENTINEL = "HIDDEN_TEST_SENTINEL_93c1"


def _scripted(*entries: TranscriptEntry) -> ScriptedBackend:
    return ScriptedBackend(list(entries))


class TestTemplates:
    def test_rendering_is_deterministic(self):
        task = make_task()
        assert agents.render_plan_prompt(task) == agents.render_plan_prompt(task)
        assert agents.render_code_prompt(task, "plan") == agents.render_code_prompt(task, "plan")

    def test_hidden_tests_never_rendered(self):
        task = Task(
            task_id="t/1",
            description="Return the decimal part of a floating-point number.",
            entry_point="truncate_number",
            hidden_tests=(f"assert truncate_number(1.5) == 0.5  # {HIDDEN_SENTINEL}",),
        )
        report = make_report(passing=[], failing=["t1"])
        renders = [
            agents.render_plan_prompt(task),
            agents.render_plan_score_prompt(task, "1. plan"),
            agents.render_test_prompt(task, "digest", 5),
            agents.render_test_classify_prompt(task, "assert truncate_number(3.5) == 0.5"),
            agents.render_code_prompt(task, "digest"),
            agents.render_repair_advice_prompt(task, "def f(): pass", "digest"),
            agents.render_advice_score_prompt(task, "advice"),
            agents.render_repair_code_prompt(task, "def f(): pass", "advice"),
        ]
        for messages in renders:
            for message in messages:
                assert HIDDEN_SENTINEL not in message.content


class TestParsers:
    @pytest.mark.parametrize(
        "text",
        [
            "1. subtract the integer part\n2. return the remainder",
            "- first step\n- second step",
            "Step plan:\n1) read input",
        ],
    )
    def test_parse_plan_accepts_enumerated_steps(self, text):
        assert agents.parse_plan(text) == text.strip()

    @pytest.mark.parametrize("text", ["", "just prose with no steps", "code: x = 1"])
    def test_parse_plan_rejects_unstructured(self, text):
        assert agents.parse_plan(text) is None

    def test_extract_first_fenced_block(self):
        completion = "```\ndef f(x):\n    return x\n```"
        assert agents.extract_code_block(completion) == "def f(x):\n    return x"

    def test_extract_first_of_two_blocks(self):
        completion = "```python\ndef a(): pass\n```\ntext\n```python\ndef b(): pass\n```"
        assert agents.extract_code_block(completion) == "def a(): pass"

    def test_extract_without_fence_returns_whole(self):
        assert agents.extract_code_block("def f(x):\n    return x") == "def f(x):\n    return x"

    def test_extract_unclosed_fence_takes_rest(self):
        assert agents.extract_code_block("```python\ndef f(): pass") == "def f(): pass"

    def test_parse_assertions_keeps_assert_lines_only(self):
        completion = "Here are tests:\nassert f(1) == 2\nprint('no')\n  assert f(2) == 3"
        assert agents.parse_assertions(completion) == ["assert f(1) == 2", "assert f(2) == 3"]

    def test_parse_assertions_dedupes_normalized(self):
        completion = "assert f(1) == 2\nassert  f(1)  ==  2"
        assert agents.parse_assertions(completion) == ["assert f(1) == 2"]

    def test_parse_assertions_strips_fences(self):
        completion = "```python\nassert f(1) == 2\n```"
        assert agents.parse_assertions(completion) == ["assert f(1) == 2"]


class TestPromptAgent:
    def test_replays_three_canned_plans(self):
        plans = ("1. a", "1. b\n2. c", "- d")
        backend = _scripted(TranscriptEntry("step-by-step plan", plans))
        out = agents.prompt_agent_generate(make_task(), CFG, backend, SETTINGS)
        assert [p.text for p in out] == list(plans)
        assert [p.origin_index for p in out] == [0, 1, 2]
        assert all(p.score is None for p in out)

    def test_fig3_style_task_renders_description(self):
        task = make_task(
            description="Write a function that returns the decimal part of a floating-point number.",
            entry_point="truncate_number",
        )
        backend = _scripted(
            TranscriptEntry("decimal part", ("1. Subtract the integer part.\n2. Return it.",))
        )
        out = agents.prompt_agent_generate(task, CFG, backend, SETTINGS)
        assert "Subtract the integer part" in out[0].text

    def test_unparseable_with_no_retry_budget_raises(self):
        cfg = agents.AgentConfig(n_prompts=1, parse_retry=0)
        backend = _scripted(TranscriptEntry("step-by-step plan", ("no steps here",)))
        with pytest.raises(GenerationEmptyError):
            agents.prompt_agent_generate(make_task(), cfg, backend, SETTINGS)

    def test_retry_consumes_second_entry(self):
        backend = _scripted(
            TranscriptEntry("step-by-step plan", ("prose only",)),
            TranscriptEntry("step-by-step plan", ("1. works",)),
        )
        out = agents.prompt_agent_generate(make_task(), CFG, backend, SETTINGS)
        assert out[0].text == "1. works"
        assert backend.remaining == 0

    def test_partial_parse_keeps_good_completions(self):
        backend = _scripted(TranscriptEntry("step-by-step plan", ("prose", "1. good", "junk")))
        out = agents.prompt_agent_generate(make_task(), CFG, backend, SETTINGS)
        assert [p.origin_index for p in out] == [1]


class TestTestAgent:
    def test_generates_truncate_number_case(self):
        task = make_task(
            description="Write a function that returns the decimal part of a floating-point number.",
            entry_point="truncate_number",
        )
        backend = _scripted(
            TranscriptEntry("Output only the assert lines", ("assert truncate_number(3.5) == 0.5",))
        )
        out = agents.test_agent_generate(task, "digest", CFG, backend, SETTINGS)
        assert [c.assertion_text for c in out] == ["assert truncate_number(3.5) == 0.5"]

    def test_duplicate_assertions_deduped(self):
        backend = _scripted(
            TranscriptEntry(
                "Output only the assert lines",
                ("assert add_one(1) == 2\nassert add_one(1) == 2",),
            )
        )
        out = agents.test_agent_generate(make_task(), "digest", CFG, backend, SETTINGS)
        assert len(out) == 1

    def test_caps_at_n_tests(self):
        lines = "\n".join(f"assert add_one({i}) == {i + 1}" for i in range(10))
        backend = _scripted(TranscriptEntry("Output only the assert lines", (lines,)))
        out = agents.test_agent_generate(make_task(), "digest", CFG, backend, SETTINGS)
        assert len(out) == CFG.n_tests

    def test_prose_only_raises_after_retries(self):
        backend = _scripted(
            TranscriptEntry("Output only the assert lines", ("no asserts",)),
            TranscriptEntry("Output only the assert lines", ("still none",)),
        )
        with pytest.raises(GenerationEmptyError):
            agents.test_agent_generate(make_task(), "digest", CFG, backend, SETTINGS)


class TestCodingAgent:
    def test_extracts_fenced_sources(self):
        backend = _scripted(
            TranscriptEntry(
                "Write the complete Python solution",
                ("```\ndef f(x):\n    return x\n```", "def g(x):\n    return x"),
            )
        )
        out = agents.coding_agent_generate(make_task(), "digest", CFG, backend, SETTINGS)
        assert out[0].source == "def f(x):\n    return x"
        assert out[1].source == "def g(x):\n    return x"
        assert [s.origin_index for s in out] == [0, 1]
        assert all(s.repair_round == 0 for s in out)


class TestRepairAgent:
    def test_advice_replayed_verbatim(self):
        advice_text = (
            "There is an unnecessary conditional check when comparing strings "
            "of the same length; remove it."
        )
        backend = _scripted(TranscriptEntry("Give one concise piece of repair advice", (advice_text,)))
        t1 = make_case("assert same_chars('ab', 'ab')")
        report = make_report(passing=[], failing=[t1.id])
        snippet = CodeSnippet(source="def same_chars(a, b): ...", origin_index=0)
        advice = agents.repair_agent_advise(
            snippet, report, [t1], make_task(entry_point="same_chars"), CFG, backend, SETTINGS
        )
        assert advice.text == advice_text
        assert advice.score is None and not advice.is_fallback

    def test_prompt_carries_source_failures_and_messages(self):
        captured = {}

        class Spy:
            def complete(self, request):
                captured["content"] = request.joined_content()
                return ScriptedBackend([TranscriptEntry("", ("advice",))]).complete(request)

        t1 = make_case("assert f(0) == 1")
        report = make_report(passing=[], failing=[t1.id])
        snippet = CodeSnippet(source="def f(x):\n    return 99", origin_index=0)
        agents.repair_agent_advise(snippet, report, [t1], make_task(entry_point="f"), CFG, Spy(), SETTINGS)
        assert "def f(x):" in captured["content"]
        assert "assert f(0) == 1" in captured["content"]
        assert "assertion failed" in captured["content"]

    def test_empty_failed_set_is_precondition_violation(self):
        report = make_report(passing=["a"], failing=[])
        snippet = CodeSnippet(source="x = 1", origin_index=0)
        with pytest.raises(ValueError):
            agents.repair_agent_advise(snippet, report, [], make_task(), CFG, _scripted(), SETTINGS)


class TestCodingAgentRepair:
    def _accepted_advice(self) -> RepairAdvice:
        return RepairAdvice(text="fix it", score=ScoreVector(1, 1, 1, 1))

    def test_round_counter_bumps(self):
        backend = _scripted(
            TranscriptEntry("Rewrite the complete corrected", ("```\ndef f(x):\n    return x + 1\n```",))
        )
        snippet = CodeSnippet(source="def f(x):\n    return x", origin_index=3)
        out = agents.coding_agent_repair(snippet, self._accepted_advice(), make_task(), CFG, backend, SETTINGS)
        assert out.repair_round == 1
        assert out.origin_index == 3
        assert out.source == "def f(x):\n    return x + 1"

    def test_at_round_bound_is_precondition_violation(self):
        snippet = CodeSnippet(source="x = 1", origin_index=0, repair_round=3)
        with pytest.raises(ValueError):
            agents.coding_agent_repair(
                snippet, self._accepted_advice(), make_task(), CFG, _scripted(), SETTINGS,
                max_repair_rounds=3,
            )

    def test_unaccepted_non_fallback_advice_rejected(self):
        snippet = CodeSnippet(source="x = 1", origin_index=0)
        with pytest.raises(ValueError):
            agents.coding_agent_repair(
                snippet, RepairAdvice(text="meh"), make_task(), CFG, _scripted(), SETTINGS
            )

    def test_fallback_advice_is_allowed(self):
        backend = _scripted(TranscriptEntry("Rewrite the complete corrected", ("x = 2",)))
        snippet = CodeSnippet(source="x = 1", origin_index=0)
        out = agents.coding_agent_repair(
            snippet, RepairAdvice(text="assert f(1) == 2", is_fallback=True),
            make_task(), CFG, backend, SETTINGS,
        )
        assert out.source == "x = 2"


def test_agents_module_never_touches_the_wire():
    # All traffic must flow through the gateway's complete().
    import codecor.agents as module

    source = open(module.__file__, encoding="utf-8").read()
    assert "import requests" not in source
    assert "urllib" not in source
