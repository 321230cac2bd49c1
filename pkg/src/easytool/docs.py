"""Normalized tool documentation and the parsers that produce it.

Three source shapes are understood:

* RapidAPI-style JSON (``tool_name`` / ``api_list``), as shipped with ToolBench;
* REST endpoint catalogs, one ``METHOD /path - description`` entry per line;
* bare function signatures such as ``add_(input: List) -> Number``.

Everything the normalized schema does not model is kept, verbatim and as a
string, in :attr:`ToolDocumentation.raw_extras`.
"""
from __future__ import annotations

import ast
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import DocumentWarning, MalformedDocument, MissingField, UnrecognizedFormat


class SourceFormat(str, Enum):
    RAPIDAPI = "RapidApiJson"
    REST = "RestEndpointCatalog"
    BARE = "BareFunction"


class ValueType(str, Enum):
    STRING = "STRING"
    NUMBER = "NUMBER"
    BOOLEAN = "BOOLEAN"
    LIST = "LIST"
    OBJECT = "OBJECT"


_TYPE_ALIASES = {
    "string": ValueType.STRING,
    "str": ValueType.STRING,
    "text": ValueType.STRING,
    "number": ValueType.NUMBER,
    "integer": ValueType.NUMBER,
    "int": ValueType.NUMBER,
    "float": ValueType.NUMBER,
    "double": ValueType.NUMBER,
    "numeric": ValueType.NUMBER,
    "boolean": ValueType.BOOLEAN,
    "bool": ValueType.BOOLEAN,
    "list": ValueType.LIST,
    "array": ValueType.LIST,
    "tuple": ValueType.LIST,
    "sequence": ValueType.LIST,
    "object": ValueType.OBJECT,
    "dict": ValueType.OBJECT,
    "map": ValueType.OBJECT,
    "mapping": ValueType.OBJECT,
    "json": ValueType.OBJECT,
}

HTTP_METHODS = ("GET", "POST", "PUT", "PATCH", "DELETE", "HEAD", "OPTIONS")

_REST_LINE = re.compile(r"^(?P<method>[A-Za-z]+)\s+(?P<path>/[^\s:]*)\s*(?:[-:]\s+)?(?P<desc>.*)$")
_SIGNATURE_LINE = re.compile(r"^[A-Za-z_]\w*\s*\(.*\)\s*(->\s*.+)?$")
_PLACEHOLDER = re.compile(r"\{([^{}/]+)\}")


def resolve_type(name: Any) -> ValueType | None:
    """Map a source type label (``"NUMBER"``, ``"List[int]"``, ``"str"``) to a ValueType.

    Returns None for labels that have no mapping.
    """
    if isinstance(name, ValueType):
        return name
    if not isinstance(name, str):
        return None
    label = name.strip().split("[", 1)[0].split(".")[-1].strip().lower()
    return _TYPE_ALIASES.get(label)


def conforms(value: Any, value_type: ValueType) -> bool:
    """Whether a literal is an acceptable value for ``value_type``."""
    if value_type is ValueType.STRING:
        return isinstance(value, str)
    if value_type is ValueType.NUMBER:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if value_type is ValueType.BOOLEAN:
        return isinstance(value, bool)
    if value_type is ValueType.LIST:
        return isinstance(value, (list, tuple))
    return isinstance(value, dict)


_MISSING = object()


def _coerce_default(value: Any, value_type: ValueType) -> Any:
    """Coerce a source default to ``value_type``; returns ``_MISSING`` when it cannot."""
    if value is None:
        return _MISSING
    if value_type is ValueType.STRING:
        if isinstance(value, str):
            return value
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, (int, float)):
            return str(value)
        return json.dumps(value, ensure_ascii=False)
    if conforms(value, value_type):
        return list(value) if isinstance(value, tuple) else value
    if not isinstance(value, str) or not value.strip():
        return _MISSING
    text = value.strip()
    if value_type is ValueType.NUMBER:
        try:
            return int(text)
        except ValueError:
            pass
        try:
            number = float(text)
        except ValueError:
            return _MISSING
        return number if math.isfinite(number) else _MISSING
    if value_type is ValueType.BOOLEAN:
        lowered = text.lower()
        if lowered in ("true", "false"):
            return lowered == "true"
        return _MISSING
    try:
        decoded = json.loads(text)
    except json.JSONDecodeError:
        return _MISSING
    return decoded if conforms(decoded, value_type) else _MISSING


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    value_type: ValueType = ValueType.STRING
    description: str = ""
    default: Any = None

    def __post_init__(self):
        if not self.name:
            raise MalformedDocument("parameter name must be non-empty")
        if not isinstance(self.value_type, ValueType):
            object.__setattr__(self, "value_type", ValueType(self.value_type))
        if self.default is not None and not conforms(self.default, self.value_type):
            raise MalformedDocument(
                f"default {self.default!r} of parameter {self.name!r} is not a {self.value_type.value}"
            )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "type": self.value_type.value,
            "description": self.description,
            "default": self.default,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ParameterSpec":
        try:
            return cls(
                name=data["name"],
                value_type=ValueType(data["type"]),
                description=data.get("description") or "",
                default=data.get("default"),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedDocument(f"bad parameter record {data!r}: {exc}") from exc


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    description: str = ""
    required_parameters: tuple[ParameterSpec, ...] = ()
    optional_parameters: tuple[ParameterSpec, ...] = ()
    invocation_template: str | None = None

    def __post_init__(self):
        if not self.name:
            raise MalformedDocument("function name must be non-empty")
        object.__setattr__(self, "required_parameters", tuple(self.required_parameters))
        object.__setattr__(self, "optional_parameters", tuple(self.optional_parameters))
        names = [p.name for p in self.parameters]
        if len(names) != len(set(names)):
            raise MalformedDocument(f"duplicate parameter names in function {self.name!r}")

    @property
    def parameters(self) -> tuple[ParameterSpec, ...]:
        return self.required_parameters + self.optional_parameters

    def parameter(self, name: str) -> ParameterSpec | None:
        for param in self.parameters:
            if param.name == name:
                return param
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "required_parameters": [p.to_dict() for p in self.required_parameters],
            "optional_parameters": [p.to_dict() for p in self.optional_parameters],
            "invocation_template": self.invocation_template,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FunctionSpec":
        if not isinstance(data, Mapping) or "name" not in data:
            raise MalformedDocument(f"bad function record {data!r}")
        return cls(
            name=data["name"],
            description=data.get("description") or "",
            required_parameters=tuple(ParameterSpec.from_dict(p) for p in data.get("required_parameters") or ()),
            optional_parameters=tuple(ParameterSpec.from_dict(p) for p in data.get("optional_parameters") or ()),
            invocation_template=data.get("invocation_template"),
        )


@dataclass(frozen=True)
class ToolDocumentation:
    tool_name: str
    tool_description: str
    source_format: SourceFormat
    functions: tuple[FunctionSpec, ...]
    raw_extras: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.tool_name:
            raise MissingField("tool_name must be non-empty")
        object.__setattr__(self, "source_format", SourceFormat(self.source_format))
        object.__setattr__(self, "functions", tuple(self.functions))
        if not self.functions:
            raise MissingField(f"tool {self.tool_name!r} declares no functions")
        names = [f.name for f in self.functions]
        if len(names) != len(set(names)):
            raise MalformedDocument(f"duplicate function names in tool {self.tool_name!r}")
        if self.source_format is SourceFormat.BARE and any(f.invocation_template is None for f in self.functions):
            raise MalformedDocument("bare-function documents need an invocation template per function")
        if any(not isinstance(v, str) for v in self.raw_extras.values()):
            raise MalformedDocument("raw_extras values must be strings")

    def function(self, name: str) -> FunctionSpec | None:
        for func in self.functions:
            if func.name == name:
                return func
        return None

    def to_dict(self) -> dict:
        return {
            "tool_name": self.tool_name,
            "tool_description": self.tool_description,
            "source_format": self.source_format.value,
            "functions": [f.to_dict() for f in self.functions],
            "raw_extras": dict(self.raw_extras),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ToolDocumentation":
        try:
            source_format = SourceFormat(data["source_format"])
        except (KeyError, ValueError) as exc:
            raise MalformedDocument(f"bad source_format: {exc}") from exc
        return cls(
            tool_name=data.get("tool_name") or "",
            tool_description=data.get("tool_description") or "",
            source_format=source_format,
            functions=tuple(FunctionSpec.from_dict(f) for f in data.get("functions") or ()),
            raw_extras=dict(data.get("raw_extras") or {}),
        )


def is_canonical(data: Any) -> bool:
    return isinstance(data, Mapping) and "source_format" in data and "functions" in data


def serialize_doc(doc: ToolDocumentation, indent: int | None = None) -> str:
    """Canonical JSON for ``doc``; keys follow the schema order."""
    return json.dumps(doc.to_dict(), ensure_ascii=False, indent=indent)


def parse_canonical(raw_text: str) -> ToolDocumentation:
    try:
        data = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    if not is_canonical(data):
        raise MalformedDocument("not a normalized document")
    return ToolDocumentation.from_dict(data)


def _meaningful_lines(raw_text: str) -> list[str]:
    return [line for line in raw_text.splitlines() if line.strip() and not line.lstrip().startswith("#")]


def _header_name(raw_text: str) -> str | None:
    for line in raw_text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            return stripped.lstrip("#").strip() or None
        return None
    return None


def detect_format(raw_text: str) -> SourceFormat:
    """Decide which parser understands ``raw_text``.

    Structural JSON checks run first, then the HTTP-verb prefix, then the
    signature pattern; the first match wins.
    """
    text = raw_text.strip() if raw_text else ""
    if not text:
        raise UnrecognizedFormat("empty document")
    if text.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = None
        if isinstance(data, dict):
            if is_canonical(data):
                try:
                    return SourceFormat(data["source_format"])
                except ValueError:
                    pass
            if "api_list" in data or "tool_name" in data:
                return SourceFormat.RAPIDAPI
    lines = _meaningful_lines(text)
    if lines:
        first = lines[0].strip()
        match = _REST_LINE.match(first)
        if match and match["method"].upper() in HTTP_METHODS:
            return SourceFormat.REST
        if _SIGNATURE_LINE.match(first):
            return SourceFormat.BARE
    raise UnrecognizedFormat("no detector matched the document")


def _extra_value(value: Any) -> str:
    return value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)


def _rapidapi_parameter(raw: Any, prefix: str, extras: dict[str, str]) -> ParameterSpec:
    if not isinstance(raw, Mapping):
        raise MalformedDocument(f"parameter entry must be an object, got {raw!r}")
    name = raw.get("name") or raw.get("param_name")
    if not name:
        raise MissingField(f"parameter without a name under {prefix}")
    key = f"{prefix}.{name}"
    for extra_key, value in raw.items():
        if extra_key not in ("name", "type", "description", "default"):
            extras[f"{key}.{extra_key}"] = _extra_value(value)
    source_type = raw.get("type")
    value_type = resolve_type(source_type)
    if value_type is None:
        warnings.warn(f"unknown type {source_type!r} for parameter {key}; using STRING", DocumentWarning, stacklevel=4)
        value_type = ValueType.STRING
        extras[f"{key}.type"] = _extra_value(source_type)
    default = _coerce_default(raw.get("default"), value_type)
    if default is _MISSING:
        if raw.get("default") is not None:
            if not (isinstance(raw["default"], str) and not raw["default"].strip()):
                warnings.warn(
                    f"default {raw['default']!r} of {key} is not a {value_type.value}; dropped",
                    DocumentWarning,
                    stacklevel=4,
                )
            extras[f"{key}.default"] = _extra_value(raw["default"])
        default = None
    description = raw.get("description")
    return ParameterSpec(
        name=str(name),
        value_type=value_type,
        description="" if description is None else str(description),
        default=default,
    )


def parse_rapidapi(raw_text: str) -> ToolDocumentation:
    """Parse a RapidAPI/ToolBench JSON document.

    Normalized documents (the output of :func:`serialize_doc`) are accepted too.
    """
    try:
        data = json.loads(raw_text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedDocument("top level must be a JSON object")
    if is_canonical(data):
        return ToolDocumentation.from_dict(data)

    if data.get("tool_name"):
        name_key = "tool_name"
    elif data.get("name"):
        name_key = "name"
    elif data.get("title"):
        name_key = "title"
    else:
        raise MissingField("document has no tool name")
    api_list = data.get("api_list")
    if not api_list:
        raise MissingField("document has no api_list entries")
    if not isinstance(api_list, list):
        raise MalformedDocument("api_list must be a list")

    extras: dict[str, str] = {}
    for key, value in data.items():
        if key not in (name_key, "tool_description", "api_list"):
            extras[key] = _extra_value(value)

    functions = []
    seen = set()
    for api in api_list:
        if not isinstance(api, Mapping):
            raise MalformedDocument(f"api_list entry must be an object, got {api!r}")
        fname = api.get("name") or api.get("api_name")
        if not fname:
            raise MissingField("api_list entry without a name")
        fname = str(fname)
        if fname in seen:
            raise MalformedDocument(f"duplicate api name {fname!r}")
        seen.add(fname)
        prefix = f"functions.{fname}"
        name_field = "name" if api.get("name") else "api_name"
        for key, value in api.items():
            if key not in (name_field, "description", "required_parameters", "optional_parameters"):
                extras[f"{prefix}.{key}"] = _extra_value(value)
        required = [_rapidapi_parameter(p, f"{prefix}.required_parameters", extras) for p in api.get("required_parameters") or ()]
        optional = [_rapidapi_parameter(p, f"{prefix}.optional_parameters", extras) for p in api.get("optional_parameters") or ()]
        description = api.get("description")
        functions.append(
            FunctionSpec(
                name=fname,
                description="" if description is None else str(description),
                required_parameters=tuple(required),
                optional_parameters=tuple(optional),
            )
        )

    description = data.get("tool_description")
    return ToolDocumentation(
        tool_name=str(data[name_key]),
        tool_description="" if description is None else str(description),
        source_format=SourceFormat.RAPIDAPI,
        functions=tuple(functions),
        raw_extras=extras,
    )


def path_placeholders(path: str) -> list[str]:
    """Placeholder names in a REST path, first occurrence order, without repeats."""
    names: list[str] = []
    for name in _PLACEHOLDER.findall(path):
        name = name.strip()
        if name and name not in names:
            names.append(name)
    return names


def parse_rest_catalog(raw_text: str, tool_name: str | None = None) -> ToolDocumentation:
    """Parse a catalog of ``METHOD /path - description`` entries.

    Indented lines continue the previous entry's description. A leading
    ``# Name`` line names the tool; other ``#`` lines are comments.
    """
    if not raw_text or not raw_text.strip():
        raise MalformedDocument("empty catalog")
    name = tool_name or _header_name(raw_text) or "rest_api"
    entries: list[list[str]] = []
    for lineno, line in enumerate(raw_text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line[0].isspace():
            if not entries:
                raise MalformedDocument(f"line {lineno}: continuation before any entry")
            entries[-1][2] = f"{entries[-1][2]} {line.strip()}".strip()
            continue
        match = _REST_LINE.match(line.strip())
        if not match or match["method"].upper() not in HTTP_METHODS:
            raise MalformedDocument(f"line {lineno}: expected 'METHOD /path - description', got {line.strip()!r}")
        entries.append([match["method"].upper(), match["path"], match["desc"].strip()])

    functions = []
    seen = set()
    for method, path, description in entries:
        template = f"{method} {path}"
        if template in seen:
            raise MalformedDocument(f"duplicate endpoint {template!r}")
        seen.add(template)
        if not description:
            raise MalformedDocument(f"endpoint {template!r} has no description")
        required = tuple(ParameterSpec(name=p, value_type=ValueType.STRING) for p in path_placeholders(path))
        functions.append(
            FunctionSpec(name=template, description=description, required_parameters=required, invocation_template=template)
        )
    if not functions:
        raise MalformedDocument("catalog has no endpoints")
    return ToolDocumentation(
        tool_name=name,
        tool_description="",
        source_format=SourceFormat.REST,
        functions=tuple(functions),
    )


def _parse_signature(line: str, extras: dict[str, str]) -> FunctionSpec:
    try:
        module = ast.parse(f"def {line}: pass")
    except SyntaxError as exc:
        raise MalformedDocument(f"not a function signature: {line!r}") from exc
    if len(module.body) != 1 or not isinstance(module.body[0], ast.FunctionDef):
        raise MalformedDocument(f"not a function signature: {line!r}")
    node = module.body[0]
    args = node.args
    if args.vararg or args.kwarg:
        raise MalformedDocument(f"variadic parameters are not supported: {line!r}")
    positional = args.posonlyargs + args.args
    defaults: list[Any] = [_MISSING] * (len(positional) - len(args.defaults)) + list(args.defaults)
    pairs = list(zip(positional, defaults)) + [
        (arg, _MISSING if default is None else default) for arg, default in zip(args.kwonlyargs, args.kw_defaults)
    ]

    required, optional = [], []
    for arg, default_node in pairs:
        label = ast.unparse(arg.annotation) if arg.annotation is not None else None
        value_type = resolve_type(label)
        if value_type is None:
            warnings.warn(
                f"unknown type {label!r} for parameter {arg.arg} of {node.name}; using STRING",
                DocumentWarning,
                stacklevel=3,
            )
            value_type = ValueType.STRING
            if label is not None:
                extras[f"functions.{node.name}.{arg.arg}.type"] = label
        if default_node is _MISSING:
            required.append(ParameterSpec(arg.arg, value_type))
            continue
        try:
            literal = ast.literal_eval(default_node)
        except ValueError as exc:
            raise MalformedDocument(f"default of {arg.arg} is not a literal: {line!r}") from exc
        default = _coerce_default(literal, value_type)
        optional.append(ParameterSpec(arg.arg, value_type, default=None if default is _MISSING else default))
    if node.returns is not None:
        extras[f"functions.{node.name}.returns"] = ast.unparse(node.returns)
    return FunctionSpec(
        name=node.name,
        required_parameters=tuple(required),
        optional_parameters=tuple(optional),
        invocation_template=line,
    )


def parse_bare_function(raw_text: str, tool_name: str | None = None) -> ToolDocumentation:
    """Parse one signature per line, e.g. ``add_(input: List) -> Number``."""
    lines = _meaningful_lines(raw_text or "")
    if not lines:
        raise MalformedDocument("no function signatures found")
    extras: dict[str, str] = {}
    functions = []
    seen = set()
    for line in lines:
        func = _parse_signature(line.strip(), extras)
        if func.name in seen:
            raise MalformedDocument(f"duplicate function {func.name!r}")
        seen.add(func.name)
        functions.append(func)
    name = tool_name or _header_name(raw_text)
    if not name:
        name = functions[0].name if len(functions) == 1 else "functions"
    return ToolDocumentation(
        tool_name=name,
        tool_description="",
        source_format=SourceFormat.BARE,
        functions=tuple(functions),
        raw_extras=extras,
    )


_PARSERS = {
    SourceFormat.RAPIDAPI: parse_rapidapi,
    SourceFormat.REST: parse_rest_catalog,
    SourceFormat.BARE: parse_bare_function,
}

FORMAT_NAMES = {
    "rapidapi": SourceFormat.RAPIDAPI,
    "rest": SourceFormat.REST,
    "bare": SourceFormat.BARE,
}


def parse_document(raw_text: str, fmt: str | SourceFormat = "auto") -> ToolDocumentation:
    """Parse ``raw_text`` with the parser for ``fmt`` (``"auto"`` detects it).

    Normalized JSON is always accepted, whatever ``fmt`` says.
    """
    stripped = (raw_text or "").strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError:
            data = None
        if is_canonical(data):
            return ToolDocumentation.from_dict(data)
    if fmt == "auto":
        source_format = detect_format(raw_text)
    elif isinstance(fmt, SourceFormat):
        source_format = fmt
    else:
        try:
            source_format = FORMAT_NAMES[fmt]
        except KeyError:
            raise UnrecognizedFormat(f"unknown format name {fmt!r}") from None
    return _PARSERS[source_format](raw_text)


def split_by_function(doc: ToolDocumentation) -> list[ToolDocumentation]:
    """One single-function document per function of ``doc``.

    FuncQA treats each arithmetic operation and RestBench each endpoint as its
    own tool; this produces that view from a multi-function file.
    """
    if len(doc.functions) == 1:
        return [doc]
    shared = {k: v for k, v in doc.raw_extras.items() if not k.startswith("functions.")}
    parts = []
    for func in doc.functions:
        own = {k: v for k, v in doc.raw_extras.items() if k.startswith(f"functions.{func.name}.")}
        parts.append(
            ToolDocumentation(
                tool_name=func.name,
                tool_description=func.description or doc.tool_description,
                source_format=doc.source_format,
                functions=(func,),
                raw_extras={**shared, **own},
            )
        )
    return parts


def argument_problems(func: FunctionSpec, arguments: Mapping[str, Any]) -> list[str]:
    """Every way ``arguments`` violates ``func``'s schema; empty when they conform.

    Required parameters must be supplied even when the source lists a default
    for them: RapidAPI uses that field for sample values, not fallbacks.
    """
    problems = []
    if not isinstance(arguments, Mapping):
        return [f"arguments must be an object, got {type(arguments).__name__}"]
    for key, value in arguments.items():
        param = func.parameter(key) if isinstance(key, str) else None
        if param is None:
            problems.append(f"unknown parameter {key!r}")
        elif not conforms(value, param.value_type):
            problems.append(f"parameter {key!r} expects {param.value_type.value}, got {type(value).__name__}")
    for param in func.required_parameters:
        if param.name not in arguments:
            problems.append(f"missing required parameter {param.name!r}")
    return problems


def documents_from_records(records: Iterable[str], fmt: str = "auto") -> list[ToolDocumentation]:
    return [parse_document(record, fmt) for record in records]
