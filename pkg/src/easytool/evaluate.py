"""Metrics over agent traces and gold data."""
from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .agent import AgentTrace, Outcome, TerminatedReason
from .errors import DomainError, EmptyInput, MissingGold, RepairExhausted
from .prompts import PromptSet, default_prompts, render
from .providers import CompletionProvider, as_repairing, parse_brace_object
from .retrieval import EmbeddingProvider, RetrievalIndex, rank_order

ERROR_KINDS = (Outcome.TOOL_NAME_ERROR, Outcome.PARAMETER_ERROR)
NUMERIC_TOLERANCE = 0.001


@dataclass(frozen=True)
class GoldRecord:
    request: str
    gold_tool_path: tuple[str, ...] | None = None
    gold_answer: Any = None
    relevant_tools: frozenset[str] | None = None

    def __post_init__(self):
        if self.gold_tool_path is not None:
            object.__setattr__(self, "gold_tool_path", tuple(self.gold_tool_path))
        if self.relevant_tools is not None:
            object.__setattr__(self, "relevant_tools", frozenset(self.relevant_tools))
        if self.gold_tool_path is None and self.gold_answer is None and self.relevant_tools is None:
            raise MissingGold(f"gold record for {self.request!r} has no gold field")

    def to_dict(self) -> dict:
        return {
            "request": self.request,
            "gold_tool_path": list(self.gold_tool_path) if self.gold_tool_path is not None else None,
            "gold_answer": self.gold_answer,
            "relevant_tools": sorted(self.relevant_tools) if self.relevant_tools is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GoldRecord":
        return cls(
            request=data["request"],
            gold_tool_path=data.get("gold_tool_path"),
            gold_answer=data.get("gold_answer"),
            relevant_tools=data.get("relevant_tools"),
        )


def _pct(count: float, total: int) -> float:
    return 100.0 * count / total


def _nonempty(items, what: str) -> list:
    items = list(items)
    if not items:
        raise EmptyInput(f"{what} is empty")
    return items


def pass_rate(traces: Iterable[AgentTrace]) -> float:
    traces = _nonempty(traces, "trace list")
    return _pct(sum(t.terminated_reason is TerminatedReason.ANSWERED for t in traces), len(traces))


# judged success

def render_success_prompt(question: str, answer: str, prompts: PromptSet | None = None) -> str:
    prompts = prompts or default_prompts()
    return render(prompts["judge_success"], question=question, answer=answer)


def parse_verdict(output: str) -> bool:
    data = parse_brace_object(output)
    choice = data.get("Choice", data.get("choice"))
    if not isinstance(choice, str) or choice.strip().lower() not in ("yes", "no"):
        raise ValueError('"Choice" must be "Yes" or "No"')
    return choice.strip().lower() == "yes"


def judge_success(trace: AgentTrace, judge: CompletionProvider, prompts: PromptSet | None = None) -> bool:
    """True when the judge accepts the trace's final answer.

    No final answer, or a verdict that stays unparseable after repairs, counts
    as a failure.
    """
    if trace.final_answer is None:
        return False
    prompt = render_success_prompt(trace.request, trace.final_answer, prompts)
    try:
        return as_repairing(judge).complete_parsed(prompt, parse_verdict)
    except RepairExhausted:
        return False


def success_rate(traces: Iterable[AgentTrace], judge: CompletionProvider, prompts: PromptSet | None = None) -> float:
    traces = _nonempty(traces, "trace list")
    return _pct(sum(judge_success(t, judge, prompts) for t in traces), len(traces))


# pairwise preference

@dataclass(frozen=True)
class PairVerdict:
    """One judged pair: which trace was shown first, the score of A, and how it was decided."""

    a_first: bool
    score_a: float
    decided_by: str
    flagged: bool = False

    def to_dict(self) -> dict:
        return {"a_first": self.a_first, "score_a": self.score_a, "decided_by": self.decided_by, "flagged": self.flagged}


def _parse_preference(output: str) -> int:
    data = parse_brace_object(output)
    choice = str(data.get("Choice", data.get("choice", ""))).strip()
    if choice not in ("1", "2"):
        raise ValueError('"Choice" must be "1" or "2"')
    return int(choice)


def compare_pairs(
    pairs: Sequence[tuple[AgentTrace, AgentTrace]],
    judge: CompletionProvider,
    seed: int = 0,
    prompts: PromptSet | None = None,
) -> list[PairVerdict]:
    """Judge every ``(A, B)`` pair, presenting them in a seeded random order.

    Identical paths tie at 0.5 without a judge call, and an answered trace beats
    an unanswered one. A judge that never picks a side also scores 0.5 and the
    pair is flagged.
    """
    prompts = prompts or default_prompts()
    rng = random.Random(seed)
    verdicts = []
    for a, b in pairs:
        a_first = rng.random() < 0.5
        if (a.final_answer is None) != (b.final_answer is None):
            verdicts.append(PairVerdict(a_first, 1.0 if a.final_answer is not None else 0.0, "answered"))
            continue
        path_a, path_b = a.path_text(), b.path_text()
        if path_a == path_b:
            verdicts.append(PairVerdict(a_first, 0.5, "identical"))
            continue
        first, second = (path_a, path_b) if a_first else (path_b, path_a)
        prompt = render(prompts["judge_win"], question=a.request, path_1=first, path_2=second)
        try:
            choice = as_repairing(judge).complete_parsed(prompt, _parse_preference)
        except RepairExhausted:
            verdicts.append(PairVerdict(a_first, 0.5, "refused", flagged=True))
            continue
        a_won = (choice == 1) == a_first
        verdicts.append(PairVerdict(a_first, 1.0 if a_won else 0.0, "judge"))
    return verdicts


def win_rate(
    pairs: Sequence[tuple[AgentTrace, AgentTrace]],
    judge: CompletionProvider,
    seed: int = 0,
    prompts: PromptSet | None = None,
) -> float:
    """Percentage of pairs the judge decides in favour of A (ties count half)."""
    pairs = _nonempty(pairs, "pair list")
    verdicts = compare_pairs(pairs, judge, seed, prompts)
    return _pct(math.fsum(v.score_a for v in verdicts), len(verdicts))


# tool paths

def is_subsequence(gold: Sequence, generated: Sequence) -> bool:
    """True when ``gold`` appears in ``generated`` in order, gaps allowed."""
    remaining = iter(generated)
    return all(any(item == g for item in remaining) for g in gold)


def correct_path_rate(traces: Sequence[AgentTrace], golds: Sequence[GoldRecord]) -> float:
    traces = _nonempty(traces, "trace list")
    if len(traces) != len(golds):
        raise ValueError(f"{len(traces)} traces but {len(golds)} gold records")
    hits = 0
    for trace, gold in zip(traces, golds):
        if gold.gold_tool_path is None:
            raise MissingGold(f"no gold tool path for {gold.request!r}")
        hits += is_subsequence(gold.gold_tool_path, trace.successful_tools())
    return _pct(hits, len(traces))


# numeric answers

_NUMBER = re.compile(r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?|[-+]?\.\d+(?:[eE][-+]?\d+)?")


def extract_number(text: Any) -> float | None:
    """The last number in ``text`` (thousands separators removed), or None."""
    if isinstance(text, bool):
        return None
    if isinstance(text, (int, float)):
        return float(text)
    if text is None:
        return None
    matches = _NUMBER.findall(str(text))
    if not matches:
        return None
    value = float(matches[-1].replace(",", ""))
    return value if math.isfinite(value) else None


def numeric_accuracy(answer: Any, gold: float) -> bool:
    """Whether ``answer`` is within 0.1% of ``gold``; a gold of zero needs an exact answer."""
    if isinstance(gold, bool) or not isinstance(gold, (int, float)) or not math.isfinite(gold):
        raise DomainError(f"gold answer must be a finite number, got {gold!r}")
    value = extract_number(answer)
    if value is None:
        return False
    if gold == 0:
        return value == 0
    return abs(value - gold) <= NUMERIC_TOLERANCE * abs(gold)


def answer_matches(answer: Any, gold: Any) -> bool:
    """Numeric gold answers use the tolerance; other golds need a case-insensitive exact match."""
    if isinstance(gold, (int, float)) and not isinstance(gold, bool):
        return numeric_accuracy(answer, gold)
    if answer is None:
        return False
    return str(answer).strip().lower() == str(gold).strip().lower()


def accuracy(traces: Sequence[AgentTrace], golds: Sequence[GoldRecord]) -> float:
    traces = _nonempty(traces, "trace list")
    if len(traces) != len(golds):
        raise ValueError(f"{len(traces)} traces but {len(golds)} gold records")
    hits = 0
    for trace, gold in zip(traces, golds):
        if gold.gold_answer is None:
            raise MissingGold(f"no gold answer for {gold.request!r}")
        hits += answer_matches(trace.final_answer, gold.gold_answer)
    return _pct(hits, len(traces))


# tool errors

@dataclass(frozen=True)
class ToolErrorRate:
    rate: float
    breakdown: dict[str, int]
    denominator: int
    per_task: bool = False

    @property
    def errors(self) -> int:
        return sum(self.breakdown.values())


def tool_error_rate(traces: Iterable[AgentTrace], per_task: bool = False) -> ToolErrorRate:
    """Tool name and parameter errors relative to all tool calls.

    With ``per_task`` the rate is the share of traces holding at least one such
    error. Steps where no call was produced are not tool calls.
    """
    traces = _nonempty(traces, "trace list")
    breakdown = {kind.value: 0 for kind in ERROR_KINDS}
    calls = 0
    tasks_with_error = 0
    for trace in traces:
        found = False
        for step in trace.steps:
            if step.call is None:
                continue
            calls += 1
            if step.outcome in ERROR_KINDS:
                breakdown[step.outcome.value] += 1
                found = True
        tasks_with_error += found
    if per_task:
        return ToolErrorRate(_pct(tasks_with_error, len(traces)), breakdown, len(traces), per_task=True)
    if calls == 0:
        raise EmptyInput("the traces contain no tool calls")
    return ToolErrorRate(_pct(sum(breakdown.values()), calls), breakdown, calls)


# selection accuracy against pool size

@dataclass(frozen=True)
class SweepPoint:
    pool_size: int
    accuracy: float
    n: int
    gold_positions: tuple[int, ...]

    @property
    def gold_first_rate(self) -> float:
        return _pct(sum(p == 0 for p in self.gold_positions), len(self.gold_positions))

    def to_dict(self) -> dict:
        return {
            "pool_size": self.pool_size,
            "accuracy": self.accuracy,
            "n": self.n,
            "gold_positions": list(self.gold_positions),
        }


def distractor_pool(index: RetrievalIndex, gold_tool: str, size: int) -> list[str]:
    """The gold tool plus the ``size - 1`` tools whose descriptions are closest to its own."""
    others = [tool_id for tool_id in index.tool_ids if tool_id != gold_tool]
    scores = index.scores(index.entry(gold_tool).vector)
    by_id = dict(zip(index.tool_ids, scores))
    order = rank_order(others, [by_id[t] for t in others])
    return [gold_tool] + [others[i] for i in order[: size - 1]]


def _parse_pick(output: str) -> str:
    data = parse_brace_object(output)
    tool = data.get("tool", data.get("tool_name"))
    if not isinstance(tool, str) or not tool:
        raise ValueError('the reply needs a "tool" name')
    return tool


def selection_accuracy_sweep(
    cases: Sequence[tuple[str, str]],
    pool_sizes: Sequence[int],
    index: RetrievalIndex,
    embedder: EmbeddingProvider,
    selector: CompletionProvider,
    seed: int = 0,
    cards: Mapping[str, str] | None = None,
    prompts: PromptSet | None = None,
) -> list[SweepPoint]:
    """Selection accuracy for each pool size over ``(request, gold_tool)`` cases.

    Each pool is shuffled with a generator seeded by ``seed``; the gold
    position after shuffling is recorded. A pool of one is correct without
    asking the selector.
    """
    if embedder.id != index.provider_id:
        raise ValueError(f"index was built with {index.provider_id!r}, not {embedder.id!r}")
    cases = _nonempty(cases, "case list")
    for _, gold in cases:
        if gold not in index:
            raise ValueError(f"gold tool {gold!r} is not in the index")
    prompts = prompts or default_prompts()
    rng = random.Random(seed)
    points = []
    for size in pool_sizes:
        if size < 1 or size > len(index):
            raise ValueError(f"pool size {size} outside 1..{len(index)}")
        hits = 0
        positions = []
        for request, gold in cases:
            pool = distractor_pool(index, gold, size)
            rng.shuffle(pool)
            positions.append(pool.index(gold))
            if size == 1:
                hits += 1
                continue
            shown = "\n".join(
                (cards or {}).get(tool_id) or f"{tool_id}: {index.entry(tool_id).description}" for tool_id in pool
            )
            prompt = render(prompts["pick_tool"], candidates=shown, request=request)
            try:
                picked = as_repairing(selector).complete_parsed(prompt, _parse_pick)
            except RepairExhausted:
                continue
            hits += picked == gold
        points.append(SweepPoint(size, _pct(hits, len(cases)), len(cases), tuple(positions)))
    return points


# report

@dataclass
class EvaluationReport:
    pass_rate: float
    tool_error_rate: float
    error_breakdown: dict[str, int]
    n: int
    success_rate: float | None = None
    win_rate: float | None = None
    cp_rate: float | None = None
    accuracy: float | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("pass_rate", "tool_error_rate", "success_rate", "win_rate", "cp_rate", "accuracy"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} {value} outside [0, 100]")

    def to_dict(self) -> dict:
        data = {
            "pass_rate": self.pass_rate,
            "success_rate": self.success_rate,
            "win_rate": self.win_rate,
            "cp_rate": self.cp_rate,
            "accuracy": self.accuracy,
            "tool_error_rate": self.tool_error_rate,
            "error_breakdown": dict(self.error_breakdown),
            "n": self.n,
        }
        data.update(self.extras)
        return data


METRICS = ("pass", "success", "win", "cp", "acc", "err")


def evaluate(
    traces: Sequence[AgentTrace],
    golds: Sequence[GoldRecord] | None = None,
    metrics: Iterable[str] = ("pass", "err"),
    judge: CompletionProvider | None = None,
    against: Sequence[AgentTrace] | None = None,
    per_task_errors: bool = False,
    seed: int = 0,
    prompts: PromptSet | None = None,
) -> EvaluationReport:
    """Compute the requested metrics into one report.

    Pass rate and the tool error rate are always filled in. ``win`` compares
    ``traces`` against the same-length ``against`` list.
    """
    metrics = set(metrics)
    unknown = metrics - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}; choose from {', '.join(METRICS)}")
    traces = _nonempty(traces, "trace list")
    if metrics & {"success", "win"} and judge is None:
        raise ValueError("success and win metrics need a judge provider")
    if metrics & {"cp", "acc"} and golds is None:
        raise MissingGold("cp and acc metrics need gold records")
    has_calls = any(step.call is not None for t in traces for step in t.steps)
    if has_calls or per_task_errors:
        errors = tool_error_rate(traces, per_task=per_task_errors)
        error_rate, breakdown = errors.rate, errors.breakdown
    else:
        error_rate, breakdown = 0.0, {kind.value: 0 for kind in ERROR_KINDS}
    report = EvaluationReport(pass_rate=pass_rate(traces), tool_error_rate=error_rate, error_breakdown=breakdown, n=len(traces))
    if "success" in metrics:
        report.success_rate = success_rate(traces, judge, prompts)
    if "win" in metrics:
        if against is None or len(against) != len(traces):
            raise ValueError("win rate needs a comparison trace list of the same length")
        verdicts = compare_pairs(list(zip(traces, against)), judge, seed, prompts)
        report.win_rate = _pct(math.fsum(v.score_a for v in verdicts), len(verdicts))
        report.extras["win_pairs"] = [v.to_dict() for v in verdicts]
    if "cp" in metrics:
        report.cp_rate = correct_path_rate(traces, golds)
    if "acc" in metrics:
        report.accuracy = accuracy(traces, golds)
    return report
