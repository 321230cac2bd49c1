"""Prompt templates stored as editable text files with ``{placeholder}`` slots."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

_SLOT = re.compile(r"\{(\w+)\}")

TEMPLATE_NAMES = (
    "description",
    "description_example",
    "guideline",
    "guideline_example",
    "plan",
    "select",
    "answer",
    "judge_success",
    "judge_win",
    "pick_tool",
)


def render(template: str, **values: Any) -> str:
    """Fill ``{name}`` slots whose name is in ``values``; leave every other brace alone.

    Substitution is a single pass, so braces inside the inserted values are
    never expanded.
    """

    def _fill(match: re.Match) -> str:
        key = match.group(1)
        return str(values[key]) if key in values else match.group(0)

    return _SLOT.sub(_fill, template)


def _bundled(name: str) -> str:
    return resources.files("easytool").joinpath("data", "prompts", name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptSet:
    templates: dict[str, str]
    demos: dict[str, list[dict]]

    def __getitem__(self, name: str) -> str:
        return self.templates[name]


def load_prompts(prompt_dir: str | Path | None = None) -> PromptSet:
    """Bundled templates, with any same-named ``.txt`` files in ``prompt_dir`` taking precedence.

    A ``demos.json`` in ``prompt_dir`` likewise replaces the bundled demonstrations.
    """
    override = Path(prompt_dir) if prompt_dir is not None else None
    if override is not None and not override.is_dir():
        raise FileNotFoundError(f"prompt directory {override} does not exist")
    templates = {}
    for name in TEMPLATE_NAMES:
        candidate = override / f"{name}.txt" if override is not None else None
        if candidate is not None and candidate.exists():
            templates[name] = candidate.read_text(encoding="utf-8")
        else:
            templates[name] = _bundled(f"{name}.txt")
    demo_file = override / "demos.json" if override is not None else None
    if demo_file is not None and demo_file.exists():
        demos = json.loads(demo_file.read_text(encoding="utf-8"))
    else:
        demos = json.loads(_bundled("demos.json"))
    return PromptSet(templates=templates, demos=demos)


_DEFAULT: PromptSet | None = None


def default_prompts() -> PromptSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_prompts()
    return _DEFAULT
