"""A small offline benchmark: twenty calculator tools, scripted models, known answers.

The scripted selector is deliberately unreliable when the prompt carries the
long raw documentation, so running both instruction modes shows, in a
controlled way, how much concise instructions help the agent loop.
"""
from __future__ import annotations

import math
from functools import reduce
from importlib import resources
from pathlib import Path

from .agent import AgentConfig, AgentTrace, InstructionMode, build_deps, run_agent
from .docs import ToolDocumentation, parse_document
from .evaluate import GoldRecord, accuracy, pass_rate
from .instruct import ToolInstruction, build_instruction
from .io import read_jsonl
from .providers import ScriptedProvider
from .retrieval import HashEmbedding
from .tools import LocalExecutor, _integers, _numbers


def desk_path(name: str) -> Path:
    return Path(str(resources.files("easytool").joinpath("data", "desk", name)))


HANDLERS = {
    "add_": lambda a: sum(_numbers(a)),
    "subtract_": lambda a: reduce(lambda x, y: x - y, _numbers(a)),
    "multiply_": lambda a: reduce(lambda x, y: x * y, _numbers(a)),
    "divide_": lambda a: reduce(lambda x, y: x / y, _numbers(a)),
    "power_": lambda a: _numbers(a)[0] ** _numbers(a)[1],
    "sqrt_": lambda a: math.sqrt(_numbers(a)[0]),
    "log_": lambda a: math.log(_numbers(a)[0], _numbers(a)[1]),
    "ln_": lambda a: math.log(_numbers(a)[0]),
    "lcm_": lambda a: reduce(math.lcm, _integers(a)),
    "gcd_": lambda a: reduce(math.gcd, _integers(a)),
    "remainder_": lambda a: _numbers(a)[0] % _numbers(a)[1],
    "choose_": lambda a: math.comb(*_integers(a)[:2]),
    "permutate_": lambda a: math.perm(*_integers(a)[:2]),
    "celsius_to_fahrenheit": lambda a: a["celsius"] * 9 / 5 + 32,
    "fahrenheit_to_celsius": lambda a: (a["fahrenheit"] - 32) * 5 / 9,
    "km_to_miles": lambda a: a["km"] / 1.609344,
    "miles_to_km": lambda a: a["miles"] * 1.609344,
    "percent_of": lambda a: a["value"] * a["percent"] / 100,
    "mean_": lambda a: sum(_numbers(a)) / len(_numbers(a)),
    "max_": lambda a: max(_numbers(a)),
}


def desk_raw_documents() -> dict[str, str]:
    """Tool name to the raw documentation record, as shown to the selector in raw mode."""
    raw = {}
    for line in desk_path("tools.jsonl").read_text(encoding="utf-8").splitlines():
        if line.strip():
            raw[parse_document(line).tool_name] = line
    return raw


def desk_documents() -> list[ToolDocumentation]:
    return [parse_document(text) for text in desk_raw_documents().values()]


def desk_executor(docs: list[ToolDocumentation] | None = None) -> LocalExecutor:
    docs = docs if docs is not None else desk_documents()
    handlers = {(doc.tool_name, f.name): HANDLERS[f.name] for doc in docs for f in doc.functions}
    return LocalExecutor(docs, handlers)


def desk_instructions(docs: list[ToolDocumentation] | None = None) -> list[ToolInstruction]:
    docs = docs if docs is not None else desk_documents()
    provider = ScriptedProvider.from_file(desk_path("refine.json"))
    executor = desk_executor(docs)
    return [build_instruction(doc, provider, executor) for doc in docs]


def desk_gold() -> list[GoldRecord]:
    return [GoldRecord.from_dict(r) for r in read_jsonl(desk_path("gold.jsonl"))]


def run_desk(mode: InstructionMode | str, config: AgentConfig | None = None) -> list[AgentTrace]:
    """Run every gold request in one instruction mode with the scripted agent models."""
    mode = InstructionMode.parse(mode)
    config = config or AgentConfig()
    config = AgentConfig(config.max_trials, config.top_k, config.step_budget, mode)
    docs = desk_documents()
    deps = build_deps(
        docs,
        mode,
        ScriptedProvider.from_file(desk_path("agent.json")),
        desk_executor(docs),
        HashEmbedding(),
        instructions=desk_instructions(docs),
        raw_docs=desk_raw_documents(),
    )
    return [run_agent(gold.request, config, deps) for gold in desk_gold()]


def desk_summary() -> dict:
    gold = desk_gold()
    summary = {}
    for mode in InstructionMode:
        traces = run_desk(mode)
        summary[mode.value] = {"pass_rate": pass_rate(traces), "accuracy": accuracy(traces, gold)}
    return summary
