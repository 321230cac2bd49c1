"""Tool calls, registries and local executors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Callable, Iterable, Mapping, Protocol, runtime_checkable

from .docs import FunctionSpec, ToolDocumentation
from .errors import ExecutionFailure


@dataclass(frozen=True)
class ToolCall:
    tool_id: str
    function_name: str
    arguments: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if any(not isinstance(k, str) for k in self.arguments):
            raise TypeError("ToolCall argument names must be strings")

    def to_dict(self) -> dict:
        return {"tool_id": self.tool_id, "function_name": self.function_name, "arguments": self.arguments}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ToolCall":
        return cls(data["tool_id"], data["function_name"], dict(data.get("arguments") or {}))


@runtime_checkable
class ToolExecutor(Protocol):
    def lookup(self, tool_id: str, function_name: str) -> FunctionSpec:
        """Return the schema for a function, raising LookupError when unknown."""

    def execute(self, call: ToolCall) -> str:
        """Run the call and return its result, raising ExecutionFailure on failure."""


class Registry:
    """Function schemas keyed by ``(tool_id, function_name)``."""

    def __init__(self, docs: Iterable[ToolDocumentation] = ()):
        self._docs: dict[str, ToolDocumentation] = {}
        for doc in docs:
            if doc.tool_name in self._docs:
                raise ValueError(f"duplicate tool {doc.tool_name!r} in registry")
            self._docs[doc.tool_name] = doc

    def __contains__(self, tool_id: str) -> bool:
        return tool_id in self._docs

    def __len__(self) -> int:
        return len(self._docs)

    @property
    def tool_ids(self) -> list[str]:
        return list(self._docs)

    def document(self, tool_id: str) -> ToolDocumentation:
        return self._docs[tool_id]

    def lookup(self, tool_id: str, function_name: str) -> FunctionSpec:
        doc = self._docs.get(tool_id)
        func = doc.function(function_name) if doc is not None else None
        if func is None:
            raise LookupError(f"no function {function_name!r} in tool {tool_id!r}")
        return func


Handler = Callable[[dict], Any]


class LocalExecutor(Registry):
    """Executes calls with in-process Python handlers.

    Handlers receive the argument mapping and return the result; anything they
    raise is reported as :class:`ExecutionFailure`. Numbers are rendered with
    two decimals, other results with ``str``.
    """

    exclusive = False

    def __init__(self, docs: Iterable[ToolDocumentation], handlers: Mapping[tuple[str, str], Handler]):
        super().__init__(docs)
        self.handlers = dict(handlers)

    def execute(self, call: ToolCall) -> str:
        handler = self.handlers.get((call.tool_id, call.function_name))
        if handler is None:
            raise ExecutionFailure(f"no handler for {call.tool_id}.{call.function_name}")
        try:
            result = handler(dict(call.arguments))
        except ExecutionFailure:
            raise
        except Exception as exc:
            raise ExecutionFailure(f"{call.function_name} failed: {exc}") from exc
        return format_result(result)


def format_result(result: Any) -> str:
    if isinstance(result, bool):
        return str(result).lower()
    if isinstance(result, (int, float)):
        return f"{result:.2f}"
    return str(result)


def _numbers(args: dict) -> list[float]:
    values = args.get("input")
    if not isinstance(values, (list, tuple)) or not values:
        raise ValueError("input must be a non-empty list of numbers")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
        raise ValueError("input must contain numbers only")
    return list(values)


def _integers(args: dict) -> list[int]:
    values = _numbers(args)
    if any(float(v) != int(v) for v in values):
        raise ValueError("input must contain integers")
    return [int(v) for v in values]


def _log(args: dict) -> float:
    values = _numbers(args)
    return math.log(values[0], values[1]) if len(values) > 1 else math.log10(values[0])


ARITHMETIC_OPERATIONS: dict[str, Handler] = {
    "add_": lambda a: sum(_numbers(a)),
    "subtract_": lambda a: reduce(lambda x, y: x - y, _numbers(a)),
    "multiply_": lambda a: reduce(lambda x, y: x * y, _numbers(a)),
    "divide_": lambda a: reduce(lambda x, y: x / y, _numbers(a)),
    "power_": lambda a: reduce(lambda x, y: x**y, _numbers(a)),
    "sqrt_": lambda a: math.sqrt(_numbers(a)[0]),
    "log_": _log,
    "ln_": lambda a: math.log(_numbers(a)[0]),
    "lcm_": lambda a: reduce(math.lcm, _integers(a)),
    "gcd_": lambda a: reduce(math.gcd, _integers(a)),
    "remainder_": lambda a: reduce(lambda x, y: x % y, _numbers(a)),
    "choose_": lambda a: math.comb(*_integers(a)[:2]),
    "permutate_": lambda a: math.perm(*_integers(a)[:2]),
}


def arithmetic_executor(docs: Iterable[ToolDocumentation] | None = None) -> LocalExecutor:
    """Executor for the thirteen FuncQA-style arithmetic tools.

    Each tool is one function whose ``input`` parameter is a list of numbers.
    Without ``docs`` the bundled signature file is used.
    """
    if docs is None:
        from .fixtures import funcqa_documents

        docs = funcqa_documents()
    docs = list(docs)
    handlers = {}
    for doc in docs:
        for func in doc.functions:
            if func.name in ARITHMETIC_OPERATIONS:
                handlers[(doc.tool_name, func.name)] = ARITHMETIC_OPERATIONS[func.name]
    return LocalExecutor(docs, handlers)


class DryRunExecutor(Registry):
    """Accepts every schema-valid call without contacting anything.

    The result echoes the call, which is enough to exercise the agent loop
    over documentation whose live endpoints are out of reach.
    """

    exclusive = False

    def execute(self, call: ToolCall) -> str:
        self.lookup(call.tool_id, call.function_name)
        args = ", ".join(f"{k}={v!r}" for k, v in sorted(call.arguments.items()))
        return f"{call.tool_id}.{call.function_name}({args}) accepted"
