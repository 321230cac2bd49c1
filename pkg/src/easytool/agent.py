"""Plan, retrieve, select and execute, with failure-driven reselection."""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .docs import ToolDocumentation, argument_problems, serialize_doc
from .errors import (
    ExecutionFailure,
    NoCandidatesLeft,
    PlanningFailed,
    RepairExhausted,
    SelectionFailed,
)
from .instruct import ToolInstruction
from .io import META_KEY, dumps_record, is_meta
from .prompts import PromptSet, default_prompts, render
from .providers import CompletionProvider, as_repairing, parse_brace_object
from .retrieval import EmbeddingProvider, RetrievalIndex, build_index, top_k
from .tools import ToolCall, ToolExecutor

BUDGET_UNIT = "tool_call_attempts"


class InstructionMode(str, Enum):
    RAW = "RawDocumentation"
    EASYTOOL = "EasyToolInstruction"

    @classmethod
    def parse(cls, value) -> "InstructionMode":
        if isinstance(value, cls):
            return value
        aliases = {"raw": cls.RAW, "easytool": cls.EASYTOOL}
        key = str(value)
        return aliases.get(key.lower()) or cls(key)


class Outcome(str, Enum):
    SUCCESS = "Success"
    TOOL_NAME_ERROR = "ToolNameError"
    PARAMETER_ERROR = "ParameterError"
    EXECUTION_FAILURE = "ExecutionFailure"


class TerminatedReason(str, Enum):
    ANSWERED = "Answered"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    TRIALS_EXHAUSTED = "TrialsExhausted"
    PLANNING_FAILED = "PlanningFailed"


@dataclass(frozen=True)
class AgentConfig:
    max_trials: int = 3
    top_k: int = 5
    step_budget: int = 30
    instruction_mode: InstructionMode = InstructionMode.EASYTOOL

    def __post_init__(self):
        for name in ("max_trials", "top_k", "step_budget"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        object.__setattr__(self, "instruction_mode", InstructionMode.parse(self.instruction_mode))

    def to_dict(self) -> dict:
        return {
            "max_trials": self.max_trials,
            "top_k": self.top_k,
            "step_budget": self.step_budget,
            "instruction_mode": self.instruction_mode.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AgentConfig":
        known = {k: data[k] for k in ("max_trials", "top_k", "step_budget", "instruction_mode") if k in data}
        return cls(**known)


@dataclass(frozen=True)
class Subtask:
    id: int
    text: str
    depends_on: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "depends_on": list(self.depends_on)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Subtask":
        return cls(int(data["id"]), str(data["text"]), tuple(int(d) for d in data.get("depends_on") or ()))


@dataclass(frozen=True)
class Step:
    subtask_id: int
    attempt: int
    candidates: tuple[str, ...]
    call: ToolCall | None
    outcome: Outcome
    raw_result: str | None = None

    def to_dict(self) -> dict:
        return {
            "subtask_id": self.subtask_id,
            "attempt": self.attempt,
            "candidates": list(self.candidates),
            "call": self.call.to_dict() if self.call is not None else None,
            "outcome": self.outcome.value,
            "raw_result": self.raw_result,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Step":
        call = data.get("call")
        return cls(
            subtask_id=int(data["subtask_id"]),
            attempt=int(data["attempt"]),
            candidates=tuple(data.get("candidates") or ()),
            call=ToolCall.from_dict(call) if call else None,
            outcome=Outcome(data["outcome"]),
            raw_result=data.get("raw_result"),
        )


@dataclass
class AgentTrace:
    request: str
    subtasks: list[Subtask] = field(default_factory=list)
    steps: list[Step] = field(default_factory=list)
    final_answer: str | None = None
    terminated_reason: TerminatedReason | None = None
    config: AgentConfig = field(default_factory=AgentConfig)

    def successful_tools(self) -> list[str]:
        """Tool ids of successful calls, in execution order."""
        return [s.call.tool_id for s in self.steps if s.outcome is Outcome.SUCCESS and s.call is not None]

    def header(self) -> dict:
        return {
            "type": "trace",
            "request": self.request,
            "config": self.config.to_dict(),
            "budget_unit": BUDGET_UNIT,
            "subtasks": [s.to_dict() for s in self.subtasks],
            "final_answer": self.final_answer,
            "terminated_reason": self.terminated_reason.value if self.terminated_reason else None,
            "n_steps": len(self.steps),
        }

    def to_records(self) -> list[dict]:
        return [self.header()] + [{"type": "step", **s.to_dict()} for s in self.steps]

    def to_jsonl(self) -> str:
        return "".join(dumps_record(r) + "\n" for r in self.to_records())

    def path_text(self) -> str:
        """Readable rendering of the solution path, used by the pairwise judge."""
        lines = []
        for step in self.steps:
            call = json.dumps(step.call.to_dict(), ensure_ascii=False) if step.call else "no call"
            lines.append(f"subtask {step.subtask_id} attempt {step.attempt}: {call} -> {step.outcome.value}: {step.raw_result}")
        lines.append(f"final answer: {self.final_answer}")
        return "\n".join(lines)


def traces_from_records(records: Iterable[Mapping]) -> list[AgentTrace]:
    """Rebuild traces from header and step records (metadata headers are skipped)."""
    traces: list[AgentTrace] = []
    for record in records:
        if is_meta(record):
            continue
        kind = record.get("type")
        if kind == "trace":
            reason = record.get("terminated_reason")
            traces.append(
                AgentTrace(
                    request=record["request"],
                    subtasks=[Subtask.from_dict(s) for s in record.get("subtasks", [])],
                    final_answer=record.get("final_answer"),
                    terminated_reason=TerminatedReason(reason) if reason else None,
                    config=AgentConfig.from_dict(record.get("config", {})),
                )
            )
        elif kind == "step":
            if not traces:
                raise ValueError("step record before any trace header")
            traces[-1].steps.append(Step.from_dict({k: v for k, v in record.items() if k != "type"}))
        else:
            raise ValueError(f"unknown trace record type {kind!r}")
    return traces


def write_traces(path: str | Path, traces: Sequence[AgentTrace], meta: dict | None = None) -> None:
    parts = [dumps_record({META_KEY: meta}) + "\n"] if meta is not None else []
    parts.extend(t.to_jsonl() for t in traces)
    Path(path).write_text("".join(parts), encoding="utf-8")


def read_traces(path: str | Path) -> list[AgentTrace]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return traces_from_records(json.loads(line) for line in lines if line.strip())


# planning

def check_plan(subtasks: Sequence[Subtask]) -> list[str]:
    """Problems with a plan: empty, ids not 1..n, unknown or self dependencies, cycles."""
    if not subtasks:
        return ["the plan has no subtasks"]
    problems = []
    ids = [s.id for s in subtasks]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        problems.append(f"subtask ids must be 1..{len(ids)}, got {ids}")
    known = set(ids)
    for s in subtasks:
        if not s.text.strip():
            problems.append(f"subtask {s.id} has no text")
        for dep in s.depends_on:
            if dep == s.id:
                problems.append(f"subtask {s.id} depends on itself")
            elif dep not in known:
                problems.append(f"subtask {s.id} depends on unknown subtask {dep}")
    if not problems and len(execution_order(subtasks)) != len(subtasks):
        problems.append("the dependencies form a cycle")
    return problems


def execution_order(subtasks: Sequence[Subtask]) -> list[Subtask]:
    """Topological order, lowest ready id first; subtasks on a cycle are left out."""
    by_id = {s.id: s for s in subtasks}
    waiting = {s.id: set(s.depends_on) & set(by_id) for s in subtasks}
    dependents: dict[int, list[int]] = {i: [] for i in by_id}
    for sid, deps in waiting.items():
        for dep in deps:
            dependents[dep].append(sid)
    ready = [sid for sid, deps in waiting.items() if not deps]
    heapq.heapify(ready)
    order = []
    while ready:
        sid = heapq.heappop(ready)
        order.append(by_id[sid])
        for child in dependents[sid]:
            waiting[child].discard(sid)
            if not waiting[child]:
                heapq.heappush(ready, child)
    return order


def _parse_plan(output: str) -> list[Subtask]:
    data = parse_brace_object(output)
    raw = data.get("subtasks")
    if not isinstance(raw, list):
        raise ValueError('expected {"subtasks": [...]}')
    subtasks = []
    for item in raw:
        if not isinstance(item, dict) or "id" not in item or "text" not in item:
            raise ValueError("each subtask needs an id and a text")
        deps = item.get("depends_on") or []
        if not isinstance(deps, list):
            raise ValueError("depends_on must be a list of subtask ids")
        try:
            subtasks.append(Subtask(int(item["id"]), str(item["text"]), tuple(int(d) for d in deps)))
        except (TypeError, ValueError):
            raise ValueError("subtask ids must be integers") from None
    problems = check_plan(subtasks)
    if problems:
        raise ValueError("; ".join(problems))
    return sorted(subtasks, key=lambda s: s.id)


def plan(request: str, provider: CompletionProvider, prompts: PromptSet | None = None) -> list[Subtask]:
    if not request or not request.strip():
        raise PlanningFailed("the request is empty")
    prompts = prompts or default_prompts()
    prompt = render(prompts["plan"], request=request)
    try:
        return as_repairing(provider).complete_parsed(prompt, _parse_plan)
    except RepairExhausted as exc:
        raise PlanningFailed(f"no valid plan: {exc}") from exc


# retrieval and selection

def retrieve_candidates(subtask: Subtask, index: RetrievalIndex, k: int, provider: EmbeddingProvider) -> list[str]:
    """Top-k tool ids for the subtask text, used verbatim as the query."""
    return top_k(index, subtask.text, k, provider).ids


def tool_card(tool_id: str, mode: InstructionMode, raw_docs: Mapping[str, str], instructions: Mapping[str, ToolInstruction]) -> str:
    """How one candidate is shown to the selector: raw documentation or the compact instruction."""
    if mode is InstructionMode.EASYTOOL and tool_id in instructions:
        return instructions[tool_id].to_json()
    if tool_id in raw_docs:
        return f"{tool_id}:\n{raw_docs[tool_id]}"
    return tool_id


_TOOL_KIND = {InstructionMode.RAW: "Tool documentation", InstructionMode.EASYTOOL: "Tool instructions"}


def render_select_prompt(
    subtask: Subtask,
    cards: Sequence[str],
    mode: InstructionMode,
    context: str = "",
    prompts: PromptSet | None = None,
) -> str:
    prompts = prompts or default_prompts()
    return render(
        prompts["select"],
        tool_kind=_TOOL_KIND[mode],
        candidates="\n".join(cards),
        context=context,
        subtask=subtask.text,
    )


def _first_present(data: Mapping, *keys):
    for key in keys:
        if key in data:
            return data[key]
    return None


def parse_call(output: str, excluded: Iterable[str] = ()) -> ToolCall:
    data = parse_brace_object(output)
    tool = _first_present(data, "tool", "tool_name", "tool_id")
    function = _first_present(data, "function", "function_name", "api_name")
    arguments = _first_present(data, "arguments", "parameters", "args")
    if not isinstance(tool, str) or not tool:
        raise ValueError('the call needs a "tool" name')
    if not isinstance(function, str) or not function:
        raise ValueError('the call needs a "function" name')
    if arguments is None:
        arguments = {}
    if not isinstance(arguments, dict):
        raise ValueError('"arguments" must be an object')
    if tool in set(excluded):
        raise ValueError(f"tool {tool!r} already failed for this subtask; choose another")
    return ToolCall(tool, function, {str(k): v for k, v in arguments.items()})


def select_tool(
    subtask: Subtask,
    candidates: Sequence[tuple[str, str]],
    provider: CompletionProvider,
    excluded: Iterable[str] = (),
    mode: InstructionMode = InstructionMode.EASYTOOL,
    context: str = "",
    prompts: PromptSet | None = None,
) -> ToolCall:
    """Ask the provider for a call among ``(tool_id, card)`` candidates not in ``excluded``.

    The returned call may still name a tool outside the candidates; the caller
    records that as a tool name error.
    """
    excluded = set(excluded)
    remaining = [(tool_id, card) for tool_id, card in candidates if tool_id not in excluded]
    if not remaining:
        raise NoCandidatesLeft(f"no candidate tools left for subtask {subtask.id}")
    prompt = render_select_prompt(subtask, [card for _, card in remaining], mode, context, prompts)
    try:
        return as_repairing(provider).complete_parsed(prompt, lambda out: parse_call(out, excluded))
    except RepairExhausted as exc:
        raise SelectionFailed(f"no usable call for subtask {subtask.id}: {exc}") from exc


# execution

def classify_error(call: ToolCall, registry) -> Outcome | None:
    """ToolNameError for an unknown (tool, function), else ParameterError for invalid arguments, else None."""
    try:
        spec = registry.lookup(call.tool_id, call.function_name)
    except LookupError:
        return Outcome.TOOL_NAME_ERROR
    if argument_problems(spec, call.arguments):
        return Outcome.PARAMETER_ERROR
    return None


@dataclass(frozen=True)
class ExecutionResult:
    outcome: Outcome
    raw_result: str | None

    @property
    def ok(self) -> bool:
        return self.outcome is Outcome.SUCCESS


def execute(call: ToolCall, executor: ToolExecutor) -> ExecutionResult:
    """Validate the call against the registry, then run it. Failures become outcomes."""
    error = classify_error(call, executor)
    if error is Outcome.TOOL_NAME_ERROR:
        return ExecutionResult(error, f"unknown function {call.tool_id}.{call.function_name}")
    if error is Outcome.PARAMETER_ERROR:
        problems = argument_problems(executor.lookup(call.tool_id, call.function_name), call.arguments)
        return ExecutionResult(error, "; ".join(problems))
    try:
        return ExecutionResult(Outcome.SUCCESS, executor.execute(call))
    except ExecutionFailure as exc:
        return ExecutionResult(Outcome.EXECUTION_FAILURE, str(exc))


# the loop

@dataclass
class AgentDeps:
    """Everything one agent session needs.

    ``selector`` and ``answerer`` default to ``planner``. ``raw_docs`` holds
    the original documentation text per tool and ``instructions`` the
    generated instructions; the configured mode decides which is shown.
    """

    planner: CompletionProvider
    embedder: EmbeddingProvider
    index: RetrievalIndex
    executor: ToolExecutor
    raw_docs: Mapping[str, str] = field(default_factory=dict)
    instructions: Mapping[str, ToolInstruction] = field(default_factory=dict)
    selector: CompletionProvider | None = None
    answerer: CompletionProvider | None = None
    prompts: PromptSet | None = None

    def __post_init__(self):
        self.selector = self.selector or self.planner
        self.answerer = self.answerer or self.planner
        self.prompts = self.prompts or default_prompts()


def build_deps(
    docs: Sequence[ToolDocumentation],
    mode: InstructionMode,
    planner: CompletionProvider,
    executor: ToolExecutor,
    embedder: EmbeddingProvider,
    instructions: Sequence[ToolInstruction] = (),
    raw_docs: Mapping[str, str] | None = None,
    **providers: Any,
) -> AgentDeps:
    """Wire an agent over ``docs``.

    The index holds the generated descriptions in EasyTool mode and the
    original tool descriptions otherwise. Raw documentation defaults to the
    canonical JSON of each document.
    """
    mode = InstructionMode.parse(mode)
    by_tool = {ins.tool_name: ins for ins in instructions}
    if raw_docs is None:
        raw_docs = {doc.tool_name: serialize_doc(doc, indent=2) for doc in docs}
    if mode is InstructionMode.EASYTOOL:
        missing = [doc.tool_name for doc in docs if doc.tool_name not in by_tool]
        if missing:
            raise ValueError(f"no instruction for tools {missing}")
        entries = [(doc.tool_name, by_tool[doc.tool_name].description) for doc in docs]
    else:
        entries = [(doc.tool_name, doc.tool_description or doc.tool_name) for doc in docs]
    index = build_index(entries, embedder)
    return AgentDeps(
        planner=planner,
        embedder=embedder,
        index=index,
        executor=executor,
        raw_docs=raw_docs,
        instructions=by_tool,
        **providers,
    )


def _dependency_context(subtask: Subtask, results: Mapping[int, str]) -> str:
    if not subtask.depends_on:
        return ""
    lines = ["Results of earlier subtasks:"]
    lines.extend(f"- subtask {dep}: {results[dep]}" for dep in subtask.depends_on if dep in results)
    return "\n".join(lines) + "\n"


def synthesize_answer(request: str, subtasks: Sequence[Subtask], results: Mapping[int, str], provider: CompletionProvider, prompts: PromptSet | None = None) -> str:
    prompts = prompts or default_prompts()
    lines = "\n".join(f"{s.id}. {s.text}: {results[s.id]}" for s in subtasks)
    return provider.complete(render(prompts["answer"], request=request, results=lines)).strip()


def run_agent(request: str, config: AgentConfig, deps: AgentDeps) -> AgentTrace:
    """Run one request to completion.

    Subtasks run one at a time in dependency order. A failed attempt goes back
    to selection with that tool excluded, up to ``config.max_trials`` attempts
    per subtask. The step budget counts tool-call attempts. The outcome is
    recorded in ``terminated_reason``; provider infrastructure errors propagate.
    """
    trace = AgentTrace(request=request, config=config)
    try:
        trace.subtasks = plan(request, deps.planner, deps.prompts)
    except PlanningFailed:
        trace.terminated_reason = TerminatedReason.PLANNING_FAILED
        return trace
    mode = config.instruction_mode
    results: dict[int, str] = {}
    for subtask in execution_order(trace.subtasks):
        candidates = retrieve_candidates(subtask, deps.index, config.top_k, deps.embedder)
        cards = [(tool_id, tool_card(tool_id, mode, deps.raw_docs, deps.instructions)) for tool_id in candidates]
        context = _dependency_context(subtask, results)
        excluded: set[str] = set()
        solved = False
        for attempt in range(1, config.max_trials + 1):
            if len(trace.steps) >= config.step_budget:
                trace.terminated_reason = TerminatedReason.BUDGET_EXHAUSTED
                return trace
            offered = tuple(tool_id for tool_id in candidates if tool_id not in excluded)
            if not offered:
                trace.steps.append(Step(subtask.id, attempt, offered, None, Outcome.EXECUTION_FAILURE, "no candidate tools left"))
                break
            try:
                call = select_tool(subtask, cards, deps.selector, excluded, mode, context, deps.prompts)
            except SelectionFailed as exc:
                trace.steps.append(Step(subtask.id, attempt, offered, None, Outcome.EXECUTION_FAILURE, str(exc)))
                continue
            if call.tool_id not in offered:
                result = ExecutionResult(Outcome.TOOL_NAME_ERROR, f"tool {call.tool_id!r} is not among the candidates")
            else:
                result = execute(call, deps.executor)
            trace.steps.append(Step(subtask.id, attempt, offered, call, result.outcome, result.raw_result))
            if result.ok:
                results[subtask.id] = result.raw_result
                solved = True
                break
            excluded.add(call.tool_id)
        if not solved:
            trace.terminated_reason = TerminatedReason.TRIALS_EXHAUSTED
            return trace
    trace.final_answer = synthesize_answer(request, trace.subtasks, results, deps.answerer, deps.prompts)
    trace.terminated_reason = TerminatedReason.ANSWERED
    return trace
