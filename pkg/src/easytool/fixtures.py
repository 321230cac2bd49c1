"""Bundled documentation fixtures in the three supported source formats."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .docs import ToolDocumentation, parse_bare_function, parse_document, parse_rapidapi, parse_rest_catalog, split_by_function


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("easytool").joinpath("data", "fixtures", name)))


def fixture_text(name: str) -> str:
    return fixture_path(name).read_text(encoding="utf-8")


def ebay_document() -> ToolDocumentation:
    return parse_rapidapi(fixture_text("ebay.json"))


def toolbench_documents() -> list[ToolDocumentation]:
    return [parse_document(line) for line in fixture_text("toolbench.jsonl").splitlines() if line.strip()]


def tmdb_document() -> ToolDocumentation:
    return parse_rest_catalog(fixture_text("tmdb.txt"))


def funcqa_document() -> ToolDocumentation:
    return parse_bare_function(fixture_text("funcqa_tools.txt"))


def funcqa_documents() -> list[ToolDocumentation]:
    """The arithmetic signatures as thirteen single-function tools."""
    return split_by_function(funcqa_document())
