"""Completion providers: scripted replay, an HTTP chat-completion client, and a repair loop."""
from __future__ import annotations

import ast
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence, TypeVar, runtime_checkable

from .errors import ProviderError, RepairExhausted, UnmatchedPrompt

logger = logging.getLogger(__name__)

T = TypeVar("T")

MAX_REPAIRS = 2


@dataclass(frozen=True)
class DecodingConfig:
    temperature: float = 0.0
    max_tokens: int | None = None


@runtime_checkable
class CompletionProvider(Protocol):
    id: str

    def complete(self, prompt: str, decoding: DecodingConfig = DecodingConfig()) -> str: ...


@dataclass(frozen=True)
class ScriptRule:
    """One ``(prompt matcher, response)`` pair.

    Every matcher field that is set must hold: ``contains`` (all substrings
    present), ``excludes`` (none present), ``regex`` (``re.search``),
    ``equals`` and the length bounds.
    """

    response: str
    contains: tuple[str, ...] = ()
    excludes: tuple[str, ...] = ()
    regex: str | None = None
    equals: str | None = None
    min_length: int | None = None
    max_length: int | None = None

    def matches(self, prompt: str) -> bool:
        if self.equals is not None and prompt != self.equals:
            return False
        if any(s not in prompt for s in self.contains):
            return False
        if any(s in prompt for s in self.excludes):
            return False
        if self.regex is not None and not re.search(self.regex, prompt, re.S):
            return False
        if self.min_length is not None and len(prompt) < self.min_length:
            return False
        if self.max_length is not None and len(prompt) > self.max_length:
            return False
        return True

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptRule":
        def _strings(value):
            if value is None:
                return ()
            return (value,) if isinstance(value, str) else tuple(value)

        response = data["response"]
        if not isinstance(response, str):
            response = json.dumps(response, ensure_ascii=False)
        return cls(
            response=response,
            contains=_strings(data.get("contains")),
            excludes=_strings(data.get("excludes")),
            regex=data.get("regex"),
            equals=data.get("equals"),
            min_length=data.get("min_length"),
            max_length=data.get("max_length"),
        )


class ScriptedProvider:
    """Deterministic replay: the first rule matching the prompt supplies the answer.

    A prompt that no rule matches raises :class:`UnmatchedPrompt`; fixtures are
    expected to cover every prompt a run produces.
    """

    def __init__(self, rules: Sequence[ScriptRule | dict], id: str = "scripted"):
        self.rules = tuple(r if isinstance(r, ScriptRule) else ScriptRule.from_dict(r) for r in rules)
        self.id = id

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = data["rules"] if isinstance(data, dict) else data
        return cls(rules, id=f"scripted:{Path(path).name}")

    def complete(self, prompt: str, decoding: DecodingConfig = DecodingConfig()) -> str:
        for rule in self.rules:
            if rule.matches(prompt):
                return rule.response
        snippet = prompt[-300:].replace("\n", "\\n")
        raise UnmatchedPrompt(f"{self.id}: no rule matches prompt ending {snippet!r}")


class NetworkProvider:
    """Chat-completion client for an OpenAI-compatible endpoint.

    The credential is read from the environment variable named by
    ``api_key_env`` at call time, never stored in configuration.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        client: Any = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._client = client
        self.id = f"network:{model}"

    def _http(self):
        if self._client is None:
            import httpx

            self._client = httpx.Client(timeout=self.timeout)
        return self._client

    def complete(self, prompt: str, decoding: DecodingConfig = DecodingConfig()) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decoding.temperature,
        }
        if decoding.max_tokens is not None:
            body["max_tokens"] = decoding.max_tokens
        try:
            response = self._http().post(self.endpoint, json=body, headers=headers)
            response.raise_for_status()
            payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except Exception as exc:  # transport, HTTP status and payload-shape failures alike
            raise ProviderError(f"{self.id}: {exc}") from exc


def extract_brace_block(text: str) -> str | None:
    """The first balanced ``{...}`` block in ``text``, ignoring braces inside strings."""
    if not text:
        return None
    start = text.find("{")
    while start != -1:
        depth = 0
        quote = None
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if quote:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == quote:
                    quote = None
                continue
            if ch in "\"'":
                quote = ch
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def parse_brace_object(text: str) -> dict:
    """Parse the first brace block of a completion as JSON (Python literals as fallback).

    Raises ValueError describing the problem when nothing usable is found.
    """
    block = extract_brace_block(text)
    if block is None:
        raise ValueError("no JSON object found in the output")
    try:
        value = json.loads(block)
    except json.JSONDecodeError as exc:
        try:
            value = ast.literal_eval(block)
        except (ValueError, SyntaxError):
            raise ValueError(f"output is not valid JSON: {exc}") from None
    if not isinstance(value, dict):
        raise ValueError("output is not a JSON object")
    return value


def repair_prompt(prompt: str, output: str, reason: str) -> str:
    return (
        f"{prompt}{output}\n\n"
        f"Your previous output was invalid: {reason}\n"
        "Answer again, following the instructions exactly.\n"
    )


@dataclass
class RepairingProvider:
    """Wraps a provider with a bounded parse-and-repair loop.

    ``complete_parsed`` asks for a completion, hands it to ``parse`` and, when
    ``parse`` raises ValueError, re-asks with the violation appended to the
    prompt, at most ``max_repairs`` times.
    """

    inner: CompletionProvider
    max_repairs: int = MAX_REPAIRS
    decoding: DecodingConfig = field(default_factory=DecodingConfig)

    @property
    def id(self) -> str:
        return self.inner.id

    def complete(self, prompt: str, decoding: DecodingConfig | None = None) -> str:
        return self.inner.complete(prompt, decoding or self.decoding)

    def complete_parsed(self, prompt: str, parse: Callable[[str], T], decoding: DecodingConfig | None = None) -> T:
        reasons = []
        current = prompt
        output = None
        for attempt in range(self.max_repairs + 1):
            output = self.complete(current, decoding)
            try:
                return parse(output)
            except ValueError as exc:
                reasons.append(str(exc))
                logger.debug("attempt %d rejected: %s", attempt + 1, exc)
                current = repair_prompt(prompt, output, str(exc))
        raise RepairExhausted(
            f"output still invalid after {self.max_repairs} repairs: {reasons[-1]}",
            last_output=output,
            reasons=reasons,
        )


def as_repairing(provider: CompletionProvider) -> RepairingProvider:
    return provider if isinstance(provider, RepairingProvider) else RepairingProvider(provider)


def provider_from_spec(spec: str, **network_options) -> CompletionProvider:
    """Build a provider from a CLI spec: ``scripted:<fixture.json>`` or ``network``."""
    kind, _, arg = spec.partition(":")
    if kind == "scripted":
        if not arg:
            raise ValueError("scripted provider needs a fixture path: scripted:<path>")
        return ScriptedProvider.from_file(arg)
    if kind == "network":
        missing = [k for k in ("endpoint", "model") if not network_options.get(k)]
        if missing:
            raise ValueError(f"network provider needs {', '.join(missing)} in the configuration")
        return NetworkProvider(**network_options)
    raise ValueError(f"unknown provider kind {kind!r}")
