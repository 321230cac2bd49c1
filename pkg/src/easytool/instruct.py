"""Two-stage instruction generation: a concise tool description, then one
usage guideline per function, each checked against the function's schema.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

from .docs import FunctionSpec, ParameterSpec, SourceFormat, ToolDocumentation, argument_problems, serialize_doc
from .errors import (
    DescriptionRejected,
    ExecutionFailure,
    GuidelineRejected,
    InstructionIncomplete,
    RepairExhausted,
)
from .prompts import PromptSet, default_prompts, render
from .providers import CompletionProvider, as_repairing, parse_brace_object, repair_prompt
from .tools import ToolCall, ToolExecutor

logger = logging.getLogger(__name__)

_METHOD_PATH = re.compile(r"^[A-Z]+\s+(/\S*)$")


@dataclass(frozen=True)
class UsageExample:
    scenario: str
    parameters: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"Scenario": self.scenario, "Parameters": self.parameters}


@dataclass(frozen=True)
class FunctionGuideline:
    function_name: str
    purpose: str
    required_parameters: tuple[ParameterSpec, ...]
    optional_parameters: tuple[ParameterSpec, ...]
    example: UsageExample
    tool_usage: str | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.function_name, "description": self.purpose}
        if self.tool_usage is not None:
            out["tool_usage"] = self.tool_usage
        out["required_parameters"] = [p.to_dict() for p in self.required_parameters]
        out["optional_parameters"] = [p.to_dict() for p in self.optional_parameters]
        out["Example"] = self.example.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "FunctionGuideline":
        example = data.get("Example") or {}
        return cls(
            function_name=data["name"],
            purpose=data.get("description") or "",
            required_parameters=tuple(ParameterSpec.from_dict(p) for p in data.get("required_parameters") or ()),
            optional_parameters=tuple(ParameterSpec.from_dict(p) for p in data.get("optional_parameters") or ()),
            example=UsageExample(example.get("Scenario", ""), dict(example.get("Parameters") or {})),
            tool_usage=data.get("tool_usage"),
        )


@dataclass(frozen=True)
class ToolInstruction:
    tool_name: str
    description: str
    function_guidelines: tuple[FunctionGuideline, ...]

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError("instruction description must be non-empty")
        object.__setattr__(self, "function_guidelines", tuple(self.function_guidelines))

    def guideline(self, function_name: str) -> FunctionGuideline | None:
        for g in self.function_guidelines:
            if g.function_name == function_name:
                return g
        return None

    def to_dict(self) -> dict:
        return {
            "tool_name": self.tool_name,
            "description": self.description,
            "function_guidelines": [g.to_dict() for g in self.function_guidelines],
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ToolInstruction":
        return cls(
            tool_name=data["tool_name"],
            description=data["description"],
            function_guidelines=tuple(FunctionGuideline.from_dict(g) for g in data.get("function_guidelines") or ()),
        )


@dataclass(frozen=True)
class ValidationReport:
    function_name: str
    executed: bool
    parameter_schema_ok: bool
    execution_ok: bool | None = None
    failure_reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.parameter_schema_ok and self.execution_ok is not False

    def to_dict(self) -> dict:
        return {
            "function_name": self.function_name,
            "executed": self.executed,
            "parameter_schema_ok": self.parameter_schema_ok,
            "execution_ok": self.execution_ok,
            "failure_reason": self.failure_reason,
        }


def _name_variants(name: str) -> list[str]:
    variants = [name]
    match = _METHOD_PATH.match(name)
    if match:
        variants.append(match.group(1))
    return variants


def mentions(text: str, name: str) -> bool:
    """Whether ``text`` names ``name`` (case-insensitive; REST names may drop the verb)."""
    folded = text.casefold()
    return any(v.casefold() in folded for v in _name_variants(name))


def description_problems(description: str, doc: ToolDocumentation) -> list[str]:
    if not description.strip():
        return ["the description is empty"]
    problems = []
    if not mentions(description, doc.tool_name):
        problems.append(f"the description must mention the tool name '{doc.tool_name}'")
    missing = [f.name for f in doc.functions if not mentions(description, f.name)]
    if missing:
        problems.append("the description must describe every function; missing: " + ", ".join(f"'{m}'" for m in missing))
    return problems


def render_description_prompt(doc: ToolDocumentation, demos: Sequence[Mapping] | None = None, prompts: PromptSet | None = None) -> str:
    """Stage one prompt: task instruction, demonstrations, then the documentation and the cue.

    ``demos`` defaults to the bundled demonstration; pass ``[]`` for none.
    """
    prompts = prompts or default_prompts()
    if demos is None:
        demos = prompts.demos.get("description", [])
    examples = "".join(render(prompts["description_example"], **demo) for demo in demos)
    if examples:
        examples = examples.rstrip("\n")
    return render(prompts["description"], examples=examples, documentation=serialize_doc(doc))


def generate_description(doc: ToolDocumentation, provider: CompletionProvider, prompts: PromptSet | None = None) -> str:
    prompt = render_description_prompt(doc, prompts=prompts)

    def _parse(output: str) -> str:
        text = output.strip()
        problems = description_problems(text, doc)
        if problems:
            raise ValueError("; ".join(problems))
        return text

    try:
        return as_repairing(provider).complete_parsed(prompt, _parse)
    except RepairExhausted as exc:
        raise DescriptionRejected(f"{doc.tool_name}: {exc}") from exc


def _first_line(text: str) -> str:
    return text.strip().splitlines()[0].strip()


def function_purpose(doc_desc: str, func: FunctionSpec) -> str:
    """What one function does: its own description, else the sentence of the tool description naming it."""
    if func.description.strip():
        return _first_line(func.description)
    for sentence in re.split(r"(?<=[.!?])\s+", doc_desc.strip()):
        if mentions(sentence, func.name):
            return sentence.strip()
    return doc_desc.strip()


def _tool_name_from(doc_desc: str) -> str | None:
    match = re.match(r"\s*'([^']+)'", doc_desc)
    return match.group(1) if match else None


def _parameter_list(func: FunctionSpec) -> str:
    return json.dumps(
        {
            "required_parameters": [p.to_dict() for p in func.required_parameters],
            "optional_parameters": [p.to_dict() for p in func.optional_parameters],
        },
        ensure_ascii=False,
    )


def render_guideline_prompt(doc_desc: str, func: FunctionSpec, tool_name: str | None = None, prompts: PromptSet | None = None) -> str:
    """Stage two prompt for one function.

    ``tool_name`` defaults to the quoted name leading ``doc_desc``.
    """
    prompts = prompts or default_prompts()
    tool = tool_name or _tool_name_from(doc_desc) or "the tool"
    examples = "".join(render(prompts["guideline_example"], **demo) for demo in prompts.demos.get("guideline", []))
    return render(
        prompts["guideline"],
        examples=examples.rstrip("\n"),
        tool_purpose=doc_desc.strip(),
        function_purpose=f"'{func.name}' in '{tool}': {function_purpose(doc_desc, func)}",
        parameters=_parameter_list(func),
        function=f"'{func.name}'",
        tool=f"'{tool}'",
    )


def _lookup_key(data: Mapping, name: str):
    for key in data:
        if isinstance(key, str) and key.casefold() == name:
            return key
    return None


def example_problems(example: UsageExample, func: FunctionSpec) -> list[str]:
    """Violations of the usage-example contract (declared keys, required coverage)."""
    problems = []
    for key in example.parameters:
        if func.parameter(key) is None:
            problems.append(f"'{key}' is not a parameter of '{func.name}'")
    for param in func.required_parameters:
        if param.default is None and param.name not in example.parameters:
            problems.append(f"required parameter '{param.name}' is missing")
    if not func.parameters and example.parameters:
        problems.append('the function has no parameters, so "Parameters" must be {}')
    return problems


def parse_usage_example(output: str, func: FunctionSpec) -> UsageExample:
    """Read a ``{"Scenario": ..., "Parameters": {...}}`` completion; ValueError when invalid."""
    data = parse_brace_object(output)
    scenario_key = _lookup_key(data, "scenario")
    params_key = _lookup_key(data, "parameters")
    if scenario_key is None or not isinstance(data[scenario_key], str) or not data[scenario_key].strip():
        raise ValueError('the output needs a non-empty "Scenario" string')
    if params_key is None:
        raise ValueError('the output needs a "Parameters" object')
    params = data[params_key]
    if params is None:
        params = {}
    if not isinstance(params, dict):
        raise ValueError('"Parameters" must be a JSON object')
    example = UsageExample(data[scenario_key].strip(), params)
    problems = example_problems(example, func)
    if problems:
        raise ValueError("; ".join(problems))
    return example


def _guideline(doc_desc: str, func: FunctionSpec, example: UsageExample) -> FunctionGuideline:
    return FunctionGuideline(
        function_name=func.name,
        purpose=function_purpose(doc_desc, func),
        required_parameters=func.required_parameters,
        optional_parameters=func.optional_parameters,
        example=example,
    )


def generate_guideline(
    doc_desc: str,
    func: FunctionSpec,
    provider: CompletionProvider,
    tool_name: str | None = None,
    prompts: PromptSet | None = None,
    feedback: tuple[str, str] | None = None,
) -> FunctionGuideline:
    """Ask for one usage scenario and wrap it in a guideline.

    Parameter lists always come from ``func``. ``feedback`` is an optional
    ``(previous_output, reason)`` pair used when regenerating a guideline that
    failed validation.
    """
    prompt = render_guideline_prompt(doc_desc, func, tool_name=tool_name, prompts=prompts)
    if feedback is not None:
        prompt = repair_prompt(prompt, *feedback)
    try:
        example = as_repairing(provider).complete_parsed(prompt, lambda out: parse_usage_example(out, func))
    except RepairExhausted as exc:
        raise GuidelineRejected(f"{func.name}: {exc}") from exc
    return _guideline(doc_desc, func, example)


def validate_guideline(
    g: FunctionGuideline,
    spec: FunctionSpec,
    executor: ToolExecutor | None = None,
    tool_id: str | None = None,
) -> ValidationReport:
    """Type-check the example against ``spec`` and, given an executor, run it.

    Every required parameter must be present in the example, as must be the
    schema lists copied from ``spec``. Failures are reported, never raised.
    """
    problems = argument_problems(spec, g.example.parameters)
    if g.required_parameters != spec.required_parameters or g.optional_parameters != spec.optional_parameters:
        problems.append("parameter lists differ from the function schema")
    if problems:
        return ValidationReport(g.function_name, executed=False, parameter_schema_ok=False, failure_reason="; ".join(problems))
    if executor is None:
        return ValidationReport(g.function_name, executed=False, parameter_schema_ok=True)
    call = ToolCall(tool_id or g.function_name, g.function_name, dict(g.example.parameters))
    try:
        executor.execute(call)
    except ExecutionFailure as exc:
        return ValidationReport(g.function_name, True, True, execution_ok=False, failure_reason=str(exc))
    return ValidationReport(g.function_name, True, True, execution_ok=True)


def build_instruction(
    doc: ToolDocumentation,
    provider: CompletionProvider,
    executor: ToolExecutor | None = None,
    prompts: PromptSet | None = None,
) -> ToolInstruction:
    """Description, then a validated guideline per function.

    A guideline that is rejected or fails validation is regenerated once with
    the failure fed back. If any function still lacks a valid guideline,
    :class:`InstructionIncomplete` carries the partial instruction.
    """
    description = generate_description(doc, provider, prompts=prompts)
    guidelines = []
    failed = []
    for func in doc.functions:
        feedback = None
        guideline = None
        for attempt in range(2):
            try:
                candidate = generate_guideline(description, func, provider, doc.tool_name, prompts, feedback=feedback)
            except GuidelineRejected as exc:
                cause = exc.__cause__
                last = getattr(cause, "last_output", None) or ""
                feedback = (last, str(exc))
                logger.info("guideline for %s rejected (attempt %d): %s", func.name, attempt + 1, exc)
                continue
            report = validate_guideline(candidate, func, executor, tool_id=doc.tool_name)
            if report.ok:
                guideline = candidate
                break
            feedback = (json.dumps(candidate.example.to_dict(), ensure_ascii=False), report.failure_reason or "validation failed")
            logger.info("guideline for %s failed validation (attempt %d): %s", func.name, attempt + 1, report.failure_reason)
        if guideline is None:
            failed.append(func.name)
            continue
        if doc.source_format is SourceFormat.REST and func.invocation_template:
            guideline = replace(guideline, tool_usage=func.invocation_template)
        guidelines.append(guideline)

    instruction = ToolInstruction(doc.tool_name, description, tuple(guidelines))
    if failed:
        raise InstructionIncomplete(
            f"{doc.tool_name}: no valid guideline for {', '.join(failed)}", partial=instruction, failed=failed
        )
    return instruction


def instruction_problems(instruction: ToolInstruction, doc: ToolDocumentation) -> list[str]:
    """Invariant check of a finished instruction against its source document."""
    problems = description_problems(instruction.description, doc)
    names = [g.function_name for g in instruction.function_guidelines]
    if sorted(names) != sorted(f.name for f in doc.functions):
        problems.append("guidelines do not correspond one-to-one with the document's functions")
    for g in instruction.function_guidelines:
        func = doc.function(g.function_name)
        if func is None:
            continue
        if g.required_parameters != func.required_parameters or g.optional_parameters != func.optional_parameters:
            problems.append(f"parameter lists of '{g.function_name}' differ from the source")
        problems.extend(example_problems(g.example, func))
    return problems
