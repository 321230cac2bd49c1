"""File helpers: JSONL with a metadata header, and record splitting for corpora."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable

from . import __version__

META_KEY = "_meta"


def make_meta(seed: int = 0, config: Any = None) -> dict:
    """Header embedded in every file the CLI writes.

    The config hash is taken over the canonical JSON of ``config`` so that two
    runs with equal configuration carry equal headers.
    """
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str).encode("utf-8")
    return {
        "tool": "easytool",
        "version": __version__,
        "seed": seed,
        "config_hash": hashlib.sha256(blob).hexdigest()[:16],
    }


def is_meta(record: Any) -> bool:
    return isinstance(record, dict) and set(record) == {META_KEY}


def dumps_record(record: Any) -> str:
    return json.dumps(record, ensure_ascii=False)


def write_jsonl(path: str | Path, records: Iterable[Any], meta: dict | None = None) -> None:
    lines = []
    if meta is not None:
        lines.append(dumps_record({META_KEY: meta}))
    lines.extend(dumps_record(r) for r in records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: str | Path, data: dict, meta: dict | None = None) -> None:
    payload = dict(data)
    if meta is not None:
        payload = {META_KEY: meta, **payload}
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def read_jsonl(path: str | Path) -> list[Any]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        if not is_meta(record):
            records.append(record)
    return records


def read_records(path: str | Path) -> list[str]:
    """Raw text of each document in ``path``.

    ``.jsonl`` files hold one document per line (metadata headers skipped);
    any other file is a single document.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix != ".jsonl":
        return [text]
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.lstrip().startswith('{"_meta"') and is_meta(json.loads(line)):
            continue
        records.append(line)
    return records
