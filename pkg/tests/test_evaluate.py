import itertools
import json
import math

import pytest
from hypothesis import given, strategies as st

from easytool.agent import AgentTrace, Outcome, Step, TerminatedReason
from easytool.errors import DomainError, EmptyInput, MissingGold
from easytool.evaluate import (
    GoldRecord,
    accuracy,
    compare_pairs,
    correct_path_rate,
    distractor_pool,
    evaluate,
    extract_number,
    is_subsequence,
    numeric_accuracy,
    parse_verdict,
    pass_rate,
    render_success_prompt,
    selection_accuracy_sweep,
    success_rate,
    tool_error_rate,
    win_rate,
)
from easytool.providers import ScriptedProvider
from easytool.retrieval import HashEmbedding, build_index
from easytool.tools import ToolCall

SUCCESS_TEMPLATE = (
    "Please check whether the response can reasonably and accurately answer the question. "
    "If it can, please output 'YES'; If not, please output 'NO'\n"
    "\n"
    "You need to give reasons first and then decide whether the response can reasonably and accurately "
    "answer the question. You must only output in a parsible JSON format. Two example outputs look like:\n"
    "\n"
    'Example 1: {"Reason": "The reason why you think the response can reasonably and accurately answer the question", "Choice": "Yes"}\n'
    '"Example 2: {"Reason": "The reason why you think the response cannot reasonably and accurately answer the question", "Choice": "No"}\n'
    "\n"
    "This is the user's question: {question}\n"
    "This is the response: {answer}\n"
    "Output: "
)

YES = '{"Reason": "fine", "Choice": "Yes"}'
NO = '{"Reason": "wrong", "Choice": "No"}'


def step(tool, outcome=Outcome.SUCCESS, subtask=1, attempt=1):
    call = ToolCall(tool, tool, {}) if tool is not None else None
    return Step(subtask, attempt, (), call, outcome, "r")


def trace(request="q", answer="a", tools=(), reason=None, steps=None):
    reason = reason or (TerminatedReason.ANSWERED if answer is not None else TerminatedReason.TRIALS_EXHAUSTED)
    return AgentTrace(request, [], steps if steps is not None else [step(t) for t in tools], answer, reason)


class TestPass:
    def test_rate(self):
        traces = [trace(), trace(answer=None), trace(reason=TerminatedReason.BUDGET_EXHAUSTED, answer=None), trace()]
        assert pass_rate(traces) == 50.0

    def test_empty(self):
        with pytest.raises(EmptyInput):
            pass_rate([])


class TestSuccess:
    def test_template_is_exact(self):
        assert render_success_prompt("{question}", "{answer}") == SUCCESS_TEMPLATE
        rendered = render_success_prompt("How hot is 30C?", "86 F {ok}")
        assert rendered == SUCCESS_TEMPLATE.replace("{question}", "How hot is 30C?").replace("{answer}", "86 F {ok}")

    def test_verdicts(self):
        assert parse_verdict(YES) is True
        assert parse_verdict('{"choice": " no "}') is False
        with pytest.raises(ValueError):
            parse_verdict('{"Choice": "maybe"}')

    def test_rate(self):
        judge = ScriptedProvider([{"contains": "response: good", "response": YES}, {"contains": "Output:", "response": NO}])
        traces = [trace(answer="good"), trace(answer="bad"), trace(answer=None), trace(answer="good")]
        assert success_rate(traces, judge) == 50.0

    def test_unparseable_judge_counts_as_failure(self):
        judge = ScriptedProvider([{"contains": "Output:", "response": "hmm"}])
        assert success_rate([trace()], judge) == 0.0


class TestWin:
    judge_prefers_short = ScriptedProvider(
        [
            {"regex": r"Solution path 1:\nfinal answer: short", "response": '{"Choice": "1"}'},
            {"contains": "Output:", "response": '{"Choice": "2"}'},
        ]
    )

    def test_order_is_undone(self):
        a, b = trace(answer="short"), trace(answer="long", tools=["x"])
        verdicts = compare_pairs([(a, b)] * 8, self.judge_prefers_short, seed=3)
        assert len({v.a_first for v in verdicts}) == 2
        assert all(v.score_a == 1.0 and v.decided_by == "judge" for v in verdicts)

    def test_seeded(self):
        a, b = trace(answer="short"), trace(answer="long", tools=["x"])
        first = [v.a_first for v in compare_pairs([(a, b)] * 10, self.judge_prefers_short, seed=7)]
        assert first == [v.a_first for v in compare_pairs([(a, b)] * 10, self.judge_prefers_short, seed=7)]

    def test_shortcuts(self):
        answered, unanswered = trace(answer="x"), trace(answer=None)
        v1, v2, v3 = compare_pairs([(answered, unanswered), (unanswered, answered), (answered, trace(answer="x"))], ScriptedProvider([]))
        assert (v1.score_a, v1.decided_by) == (1.0, "answered")
        assert (v2.score_a, v2.decided_by) == (0.0, "answered")
        assert (v3.score_a, v3.decided_by) == (0.5, "identical")

    def test_refusal_is_flagged_tie(self):
        judge = ScriptedProvider([{"contains": "Output:", "response": '{"Choice": "both"}'}])
        (v,) = compare_pairs([(trace(answer="a"), trace(answer="b"))], judge)
        assert v.flagged and v.score_a == 0.5

    def test_rate(self):
        a, b = trace(answer="short"), trace(answer="long", tools=["x"])
        assert win_rate([(a, b), (b, a), (a, a), (a, trace(answer=None))], self.judge_prefers_short) == 62.5


def all_subsequences(seq):
    """Every subsequence of ``seq``, found by enumerating index masks."""
    n = len(seq)
    return {tuple(seq[i] for i in range(n) if mask >> i & 1) for mask in range(1 << n)}


def test_subsequence_matches_exhaustive_oracle():
    seqs = [s for n in range(7) for s in itertools.product("abc", repeat=n)]
    assert len(seqs) == 1093
    for generated in seqs:
        subs = all_subsequences(generated)
        for gold in seqs:
            assert is_subsequence(gold, generated) == (gold in subs)


class TestPaths:
    def test_rate(self):
        golds = [GoldRecord("q", ["a", "b"]), GoldRecord("q", ["a", "b"])]
        traces = [trace(tools=["a", "x", "b"]), trace(tools=["b", "a"])]
        assert correct_path_rate(traces, golds) == 50.0

    def test_failed_calls_are_not_on_the_path(self):
        t = trace(steps=[step("a", Outcome.PARAMETER_ERROR), step("b")])
        assert correct_path_rate([t], [GoldRecord("q", ["a"])]) == 0.0

    def test_needs_gold(self):
        with pytest.raises(MissingGold):
            correct_path_rate([trace()], [GoldRecord("q", gold_answer=1)])
        with pytest.raises(ValueError):
            correct_path_rate([trace()], [])

    def test_gold_record(self):
        with pytest.raises(MissingGold):
            GoldRecord("q")
        g = GoldRecord("q", ["a"], 3, ["b", "a"])
        assert GoldRecord.from_dict(json.loads(json.dumps(g.to_dict()))) == g


class TestNumeric:
    @pytest.mark.parametrize(
        "text, value",
        [("The answer is 1,234.5.", 1234.5), ("-3 then 7", 7.0), ("x = .5", 0.5), ("1e3", 1000.0), ("none", None), (True, None), (4, 4.0)],
    )
    def test_extract(self, text, value):
        assert extract_number(text) == value

    def test_boundary(self):
        assert numeric_accuracy(100.05, 100)
        assert numeric_accuracy("about 100.1", 100)
        assert not numeric_accuracy(100.2, 100)
        assert numeric_accuracy(-99.95, -100)
        assert numeric_accuracy("0", 0)
        assert not numeric_accuracy(1e-12, 0)
        assert not numeric_accuracy("no number", 5)

    @pytest.mark.parametrize("gold", [math.inf, math.nan, "5", True])
    def test_gold_domain(self, gold):
        with pytest.raises(DomainError):
            numeric_accuracy(1, gold)

    def test_accuracy(self):
        golds = [GoldRecord("q", gold_answer=3), GoldRecord("q", gold_answer="Paris")]
        assert accuracy([trace(answer="3.00"), trace(answer=" paris ")], golds) == 100.0
        assert accuracy([trace(answer=None), trace(answer="Lyon")], golds) == 0.0


class TestToolErrors:
    def test_per_call(self):
        t1 = trace(steps=[step("a", Outcome.TOOL_NAME_ERROR), step("b"), step(None, Outcome.EXECUTION_FAILURE)])
        t2 = trace(steps=[step("a", Outcome.PARAMETER_ERROR), step("c", Outcome.EXECUTION_FAILURE)])
        result = tool_error_rate([t1, t2])
        assert result.rate == 50.0
        assert result.denominator == 4
        assert result.breakdown == {"ToolNameError": 1, "ParameterError": 1}
        assert result.errors == 2

    def test_per_task(self):
        t1 = trace(steps=[step("a", Outcome.TOOL_NAME_ERROR), step("a", Outcome.PARAMETER_ERROR)])
        result = tool_error_rate([t1, trace(tools=["b"]), trace(tools=["b"]), trace(steps=[])], per_task=True)
        assert result.rate == 25.0 and result.denominator == 4

    def test_no_calls(self):
        with pytest.raises(EmptyInput):
            tool_error_rate([trace(steps=[])])


class TestSweep:
    embedder = HashEmbedding()
    tools = [
        ("celsius", "convert a temperature from celsius to fahrenheit"),
        ("fahrenheit", "convert a temperature from fahrenheit to celsius"),
        ("kelvin", "convert a temperature to kelvin"),
        ("miles", "convert a distance from kilometres to miles"),
        ("sum", "add a list of numbers"),
    ]
    index = build_index(tools, embedder)

    def test_pool(self):
        assert distractor_pool(self.index, "celsius", 3) == ["celsius", "fahrenheit", "kelvin"]
        assert distractor_pool(self.index, "sum", 1) == ["sum"]

    def test_sweep(self):
        # The selector always picks "fahrenheit" when it is offered, else the first candidate listed.
        selector = ScriptedProvider(
            [
                {"contains": "fahrenheit: convert a temperature from fahrenheit", "response": '{"tool": "fahrenheit"}'},
                {"regex": r"Candidate tools:\n(\w+):", "response": '{"tool": "?"}'},
            ]
        )
        points = selection_accuracy_sweep([("to fahrenheit", "celsius")], [1, 2, 5], self.index, self.embedder, selector, seed=1)
        assert [p.pool_size for p in points] == [1, 2, 5]
        assert points[0].accuracy == 100.0
        assert points[1].accuracy == 0.0 and points[2].accuracy == 0.0
        assert all(0 <= pos < p.pool_size for p in points for pos in p.gold_positions)

    def test_bad_sizes(self):
        selector = ScriptedProvider([])
        with pytest.raises(ValueError):
            selection_accuracy_sweep([("q", "sum")], [6], self.index, self.embedder, selector)
        with pytest.raises(ValueError):
            selection_accuracy_sweep([("q", "nope")], [1], self.index, self.embedder, selector)


class TestReport:
    def test_default_metrics(self):
        report = evaluate([trace(tools=["a"]), trace(answer=None, steps=[step("a", Outcome.PARAMETER_ERROR)])])
        data = report.to_dict()
        assert data["pass_rate"] == 50.0
        assert data["tool_error_rate"] == 50.0
        assert data["success_rate"] is None

    def test_all_metrics(self):
        judge = ScriptedProvider([{"contains": "This is the response", "response": YES}, {"contains": "Output:", "response": '{"Choice": "1"}'}])
        traces = [trace(answer="3", tools=["a"])]
        golds = [GoldRecord("q", ["a"], 3)]
        report = evaluate(traces, golds, metrics=("pass", "success", "win", "cp", "acc", "err"), judge=judge, against=[trace(answer=None)])
        assert (report.success_rate, report.win_rate, report.cp_rate, report.accuracy) == (100.0, 100.0, 100.0, 100.0)
        assert report.to_dict()["win_pairs"][0]["decided_by"] == "answered"

    def test_validation(self):
        with pytest.raises(ValueError):
            evaluate([trace()], metrics=["bleu"])
        with pytest.raises(ValueError):
            evaluate([trace()], metrics=["success"])
        with pytest.raises(MissingGold):
            evaluate([trace()], metrics=["acc"])


@given(st.lists(st.sampled_from("abc"), max_size=6), st.lists(st.sampled_from("abc"), max_size=8))
def test_subsequence_properties(gold, generated):
    result = is_subsequence(gold, generated)
    assert is_subsequence(gold, gold)
    assert is_subsequence([], generated)
    if result:
        assert is_subsequence(gold, generated + ["a"])
        assert is_subsequence(gold[:-1], generated)


@given(st.floats(min_value=-1e6, max_value=1e6).filter(lambda x: abs(x) > 1e-6), st.floats(-0.0009, 0.0009))
def test_within_tolerance_accepted(gold, rel):
    assert numeric_accuracy(gold * (1 + rel), gold)


@given(st.floats(min_value=-1e6, max_value=1e6).filter(lambda x: abs(x) > 1e-6), st.floats(0.0011, 1.0))
def test_outside_tolerance_rejected(gold, rel):
    assert not numeric_accuracy(gold * (1 + rel), gold)
