import json

import pytest
from hypothesis import given, strategies as st

from easytool.agent import (
    AgentConfig,
    AgentTrace,
    InstructionMode,
    Outcome,
    Subtask,
    TerminatedReason,
    build_deps,
    check_plan,
    classify_error,
    execute,
    execution_order,
    parse_call,
    plan,
    read_traces,
    run_agent,
    select_tool,
    tool_card,
    write_traces,
)
from easytool.errors import NoCandidatesLeft, PlanningFailed, SelectionFailed, UnmatchedPrompt
from easytool.providers import ScriptedProvider
from easytool.retrieval import HashEmbedding
from easytool.tools import ToolCall, arithmetic_executor

from agent_world import (
    ANSWER_RULE,
    always_fail,
    call,
    deps_for,
    diamond,
    fail_then_succeed,
    plan_rule,
    select_rule,
    world_docs,
)


class TestConfig:
    def test_defaults(self):
        c = AgentConfig()
        assert (c.max_trials, c.top_k, c.step_budget, c.instruction_mode) == (3, 5, 30, InstructionMode.EASYTOOL)

    @pytest.mark.parametrize("field", ["max_trials", "top_k", "step_budget"])
    @pytest.mark.parametrize("value", [0, -1, 1.5, True])
    def test_positive_ints(self, field, value):
        with pytest.raises(ValueError):
            AgentConfig(**{field: value})

    def test_round_trip(self):
        c = AgentConfig(2, 4, 9, "raw")
        assert AgentConfig.from_dict(c.to_dict()) == c

    def test_mode_names(self):
        assert InstructionMode.parse("RawDocumentation") is InstructionMode.RAW
        assert InstructionMode.parse("EASYTOOL") is InstructionMode.EASYTOOL
        with pytest.raises(ValueError):
            InstructionMode.parse("verbose")


class TestPlan:
    def test_parse_sorted(self):
        provider = ScriptedProvider([plan_rule("r", [{"id": 2, "text": "b", "depends_on": [1]}, {"id": 1, "text": "a"}])])
        assert plan("r", provider) == [Subtask(1, "a"), Subtask(2, "b", (1,))]

    def test_repaired(self):
        good = {"contains": ["Your previous output was invalid"], "response": '{"subtasks": [{"id": 1, "text": "a"}]}'}
        provider = ScriptedProvider([good, {"contains": ["Subtasks:"], "response": '{"subtasks": [{"id": 1, "text": "a", "depends_on": [1]}]}'}])
        assert plan("r", provider) == [Subtask(1, "a")]

    def test_failed(self):
        with pytest.raises(PlanningFailed):
            plan("r", ScriptedProvider([{"contains": "Subtasks:", "response": "I cannot"}]))
        with pytest.raises(PlanningFailed):
            plan("  ", ScriptedProvider([]))

    @pytest.mark.parametrize(
        "subtasks, fragment",
        [
            ([], "no subtasks"),
            ([Subtask(2, "a")], "ids must be"),
            ([Subtask(1, " ")], "no text"),
            ([Subtask(1, "a", (1,))], "itself"),
            ([Subtask(1, "a", (7,))], "unknown"),
            ([Subtask(1, "a", (2,)), Subtask(2, "b", (1,))], "cycle"),
        ],
    )
    def test_check_plan(self, subtasks, fragment):
        assert any(fragment in p for p in check_plan(subtasks))

    def test_execution_order_diamond(self):
        order = execution_order([Subtask(4, "d", (2, 3)), Subtask(3, "c", (1,)), Subtask(2, "b", (1,)), Subtask(1, "a")])
        assert [s.id for s in order] == [1, 2, 3, 4]


class TestSelection:
    def test_parse_call_aliases(self):
        assert parse_call('{"tool_name": "t", "api_name": "f", "parameters": {"a": 1}}') == ToolCall("t", "f", {"a": 1})
        assert parse_call('{"tool": "t", "function": "f"}').arguments == {}

    @pytest.mark.parametrize("text", ['{"function": "f"}', '{"tool": "t"}', '{"tool": "t", "function": "f", "arguments": [1]}'])
    def test_parse_call_rejects(self, text):
        with pytest.raises(ValueError):
            parse_call(text)

    def test_excluded_tool_is_rejected(self):
        with pytest.raises(ValueError, match="already failed"):
            parse_call('{"tool": "t", "function": "f"}', excluded={"t"})

    def test_no_candidates(self):
        with pytest.raises(NoCandidatesLeft):
            select_tool(Subtask(1, "x"), [("a", "a")], ScriptedProvider([]), excluded={"a"})

    def test_selection_failed(self):
        provider = ScriptedProvider([{"contains": "Call:", "response": "no idea"}])
        with pytest.raises(SelectionFailed):
            select_tool(Subtask(1, "x"), [("a", "a card")], provider)

    def test_cards(self):
        deps = deps_for([])
        assert tool_card("add_", InstructionMode.RAW, deps.raw_docs, {}).startswith("add_:\n{")
        assert tool_card("zzz", InstructionMode.RAW, {}, {}) == "zzz"


class TestExecution:
    executor = arithmetic_executor(world_docs())

    def test_classify(self):
        assert classify_error(ToolCall("nope_", "nope_", {}), self.executor) is Outcome.TOOL_NAME_ERROR
        assert classify_error(ToolCall("add_", "other", {}), self.executor) is Outcome.TOOL_NAME_ERROR
        assert classify_error(ToolCall("add_", "add_", {"numbers": [1]}), self.executor) is Outcome.PARAMETER_ERROR
        assert classify_error(ToolCall("add_", "add_", {"input": 1}), self.executor) is Outcome.PARAMETER_ERROR
        assert classify_error(ToolCall("add_", "add_", {"input": [1]}), self.executor) is None

    def test_execute_outcomes(self):
        assert execute(ToolCall("add_", "add_", {"input": [2, 1]}), self.executor).raw_result == "3.00"
        assert execute(ToolCall("add_", "add_", {}), self.executor).outcome is Outcome.PARAMETER_ERROR
        assert execute(ToolCall("add_", "add_", {"input": []}), self.executor).outcome is Outcome.EXECUTION_FAILURE


class TestLoop:
    def test_fail_then_succeed(self):
        trace = fail_then_succeed()
        assert trace.terminated_reason is TerminatedReason.ANSWERED
        first, second = trace.steps
        assert (first.attempt, first.outcome, first.call.tool_id) == (1, Outcome.PARAMETER_ERROR, "multiply_")
        assert (second.attempt, second.outcome, second.raw_result) == (2, Outcome.SUCCESS, "3.00")
        assert "multiply_" in first.candidates
        assert "multiply_" not in second.candidates
        assert trace.final_answer == "Done."

    def test_trials_exhausted(self):
        trace = always_fail()
        assert trace.terminated_reason is TerminatedReason.TRIALS_EXHAUSTED
        assert [s.attempt for s in trace.steps] == [1, 2, 3]
        assert len({s.call.tool_id for s in trace.steps}) == 3
        assert trace.final_answer is None

    def test_fewer_candidates_than_trials(self):
        trace = always_fail(AgentConfig(max_trials=3, top_k=2, instruction_mode="raw"))
        assert trace.terminated_reason is TerminatedReason.TRIALS_EXHAUSTED
        assert [s.call is None for s in trace.steps] == [False, False, True]
        assert trace.steps[-1].candidates == ()

    def test_budget(self):
        trace = always_fail(AgentConfig(step_budget=2, instruction_mode="raw"))
        assert trace.terminated_reason is TerminatedReason.BUDGET_EXHAUSTED
        assert len(trace.steps) == 2

    def test_planning_failed(self):
        deps = deps_for([{"contains": "Subtasks:", "response": "nope"}])
        trace = run_agent("x", AgentConfig(instruction_mode="raw"), deps)
        assert trace.terminated_reason is TerminatedReason.PLANNING_FAILED
        assert trace.steps == []

    def test_tool_outside_candidates(self):
        rules = [
            plan_rule("r", [{"id": 1, "text": "add 2 and 1"}]),
            select_rule("add 2 and 1", call("ghost_", [1]), "add_"),
            select_rule("add 2 and 1", call("add_", [2, 1])),
        ]
        trace = run_agent("r", AgentConfig(instruction_mode="raw"), deps_for(rules))
        # ghost_ is now excluded, so repeating it is rejected during selection.
        assert [s.outcome for s in trace.steps] == [Outcome.TOOL_NAME_ERROR, Outcome.EXECUTION_FAILURE, Outcome.EXECUTION_FAILURE]
        assert trace.steps[1].call is None
        assert trace.terminated_reason is TerminatedReason.TRIALS_EXHAUSTED

    def test_repeating_excluded_tool_is_a_failed_attempt(self):
        rules = [
            plan_rule("r", [{"id": 1, "text": "add 2 and 1"}]),
            select_rule("add 2 and 1", call("add_", [2, 1], key="numbers")),
        ]
        trace = run_agent("r", AgentConfig(instruction_mode="raw"), deps_for(rules))
        outcomes = [(s.call is None, s.outcome) for s in trace.steps]
        assert outcomes == [(False, Outcome.PARAMETER_ERROR), (True, Outcome.EXECUTION_FAILURE), (True, Outcome.EXECUTION_FAILURE)]
        assert trace.terminated_reason is TerminatedReason.TRIALS_EXHAUSTED

    def test_diamond(self):
        trace = diamond()
        assert trace.terminated_reason is TerminatedReason.ANSWERED
        assert [s.subtask_id for s in trace.steps] == [1, 2, 3, 4]
        assert trace.steps[-1].raw_result == "27.00"

    def test_dependency_results_reach_the_selector(self):
        seen = []

        class Spy(ScriptedProvider):
            def complete(self, prompt, decoding=None):
                seen.append(prompt)
                return super().complete(prompt)

        rules = [
            plan_rule("r", [{"id": 1, "text": "add 2 and 2"}, {"id": 2, "text": "add 5 to it", "depends_on": [1]}]),
            select_rule("add 2 and 2", call("add_", [2, 2])),
            select_rule("add 5 to it", call("add_", [4, 5])),
            ANSWER_RULE,
        ]
        docs = world_docs()
        deps = build_deps(docs, "raw", Spy(rules), arithmetic_executor(docs), HashEmbedding())
        run_agent("r", AgentConfig(instruction_mode="raw"), deps)
        select_two = [p for p in seen if "Subtask: add 5 to it" in p][0]
        assert "Results of earlier subtasks:\n- subtask 1: 4.00\n" in select_two

    def test_provider_errors_propagate(self):
        deps = deps_for([plan_rule("r", [{"id": 1, "text": "add 2 and 1"}])])
        with pytest.raises(UnmatchedPrompt):
            run_agent("r", AgentConfig(instruction_mode="raw"), deps)

    def test_replay_is_byte_identical(self):
        runs = {fail_then_succeed().to_jsonl() for _ in range(3)}
        assert len(runs) == 1

    def test_easytool_mode_needs_instructions(self):
        with pytest.raises(ValueError):
            build_deps(world_docs(), "easytool", ScriptedProvider([]), arithmetic_executor(), HashEmbedding())


class TestTraces:
    def test_header(self):
        header = json.loads(fail_then_succeed().to_jsonl().splitlines()[0])
        assert header["type"] == "trace"
        assert header["budget_unit"] == "tool_call_attempts"
        assert header["terminated_reason"] == "Answered"
        assert header["n_steps"] == 2

    def test_round_trip(self, tmp_path):
        traces = [fail_then_succeed(), always_fail()]
        path = tmp_path / "t.jsonl"
        write_traces(path, traces, meta={"seed": 0})
        again = read_traces(path)
        assert [t.to_jsonl() for t in again] == [t.to_jsonl() for t in traces]

    def test_successful_tools_and_path_text(self):
        trace = diamond()
        assert trace.successful_tools() == ["add_", "add_", "subtract_", "multiply_"]
        assert trace.path_text().endswith("final answer: Done.")

    def test_orphan_step(self):
        from easytool.agent import traces_from_records

        with pytest.raises(ValueError):
            traces_from_records([{"type": "step"}])


@st.composite
def dags(draw):
    n = draw(st.integers(1, 8))
    subtasks = []
    for i in range(1, n + 1):
        deps = draw(st.sets(st.integers(1, i - 1), max_size=3)) if i > 1 else set()
        subtasks.append(Subtask(i, f"s{i}", tuple(sorted(deps))))
    # Relabel so dependency edges do not always point to smaller ids.
    perm = draw(st.permutations(list(range(1, n + 1))))
    relabel = dict(zip(range(1, n + 1), perm))
    return [Subtask(relabel[s.id], s.text, tuple(relabel[d] for d in s.depends_on)) for s in subtasks]


@given(dags())
def test_execution_order_is_topological_and_smallest_first(subtasks):
    assert check_plan(subtasks) == []
    order = [s.id for s in execution_order(subtasks)]
    assert sorted(order) == sorted(s.id for s in subtasks)
    position = {sid: i for i, sid in enumerate(order)}
    by_id = {s.id: s for s in subtasks}
    for s in subtasks:
        assert all(position[d] < position[s.id] for d in s.depends_on)
    done = set()
    for sid in order:
        ready = [i for i in by_id if i not in done and set(by_id[i].depends_on) <= done]
        assert sid == min(ready)
        done.add(sid)
