"""Token counting and documentation statistics."""
from __future__ import annotations

import json
import math
import os
import re
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Protocol, runtime_checkable

from .docs import ToolDocumentation
from .errors import DomainError

CL100K_SHA256 = "223921b76ee99bde995b7ff738513eef100fb51d18c93597a113bcffe865b2a7"
# Pre-tokenization pattern and special tokens of the public cl100k_base encoding.
_CL100K_PATTERN = (
    r"""'(?i:[sdmt]|ll|ve|re)|[^\r\n\p{L}\p{N}]?+\p{L}++|\p{N}{1,3}+| ?[^\s\p{L}\p{N}]++[\r\n]*+|\s++$|\s*[\r\n]|\s+(?!\S)|\s"""
)
_CL100K_SPECIAL = {
    "<|endoftext|>": 100257,
    "<|fim_prefix|>": 100258,
    "<|fim_middle|>": 100259,
    "<|fim_suffix|>": 100260,
    "<|endofprompt|>": 100276,
}


@runtime_checkable
class Tokenizer(Protocol):
    id: str

    def count(self, text: str) -> int: ...


class FallbackTokenizer:
    """Words (runs of word characters) and single punctuation marks are tokens.

    Needs no vocabulary, and appending text never lowers the count.
    """

    id = "fallback"
    _pattern = re.compile(r"\w+|[^\w\s]")

    def tokenize(self, text: str) -> list[str]:
        return self._pattern.findall(text)

    def count(self, text: str) -> int:
        return len(self._pattern.findall(text))


class Cl100kTokenizer:
    """The ``cl100k_base`` byte-pair encoding through ``tiktoken``.

    ``vocab_path`` (or the ``EASYTOOL_CL100K_FILE`` environment variable) points
    at a local ``cl100k_base.tiktoken`` file; it is checked against the
    published hash. Without one, tiktoken's own download and cache are used.
    """

    id = "cl100k"

    def __init__(self, vocab_path: str | None = None):
        try:
            import tiktoken
            from tiktoken.load import load_tiktoken_bpe
        except ImportError as exc:  # pragma: no cover - depends on the environment
            raise RuntimeError("the cl100k tokenizer needs the 'tiktoken' package (pip install easytool[cl100k])") from exc
        path = vocab_path or os.environ.get("EASYTOOL_CL100K_FILE")
        if path:
            ranks = load_tiktoken_bpe(path, expected_hash=CL100K_SHA256)
            self._encoding = tiktoken.Encoding(
                name="cl100k_base", pat_str=_CL100K_PATTERN, mergeable_ranks=ranks, special_tokens=_CL100K_SPECIAL
            )
        else:
            self._encoding = tiktoken.get_encoding("cl100k_base")

    def count(self, text: str) -> int:
        return len(self._encoding.encode(text, disallowed_special=()))


def get_tokenizer(name: str = "fallback", vocab_path: str | None = None) -> Tokenizer:
    if name == "fallback":
        return FallbackTokenizer()
    if name == "cl100k":
        return Cl100kTokenizer(vocab_path)
    raise ValueError(f"unknown tokenizer {name!r}; expected 'fallback' or 'cl100k'")


def count_tokens(text: str, tk: Tokenizer) -> int:
    return tk.count(text)


def _round_half_up(value: Fraction, places: int = 2) -> float:
    scale = 10**places
    magnitude = math.floor(abs(value) * scale + Fraction(1, 2))
    return math.copysign(magnitude / scale, value) if magnitude else 0.0


def reduction_ratio(doc_tokens: float, ins_tokens: float) -> float:
    """Percentage of documentation tokens saved by the instruction, rounded half-up to 2 places.

    >>> reduction_ratio(2530, 748)
    70.43

    Negative when the instruction is the longer of the two.
    """
    if doc_tokens <= 0:
        raise DomainError("documentation token count must be positive")
    if ins_tokens < 0:
        raise DomainError("instruction token count must be non-negative")
    doc = Fraction(doc_tokens)
    return _round_half_up(100 * (doc - Fraction(ins_tokens)) / doc)


@dataclass(frozen=True)
class CorpusStats:
    avg_description_tokens: float
    avg_document_tokens: float
    has_usage_examples: bool
    n_documents: int

    def to_dict(self) -> dict:
        return asdict(self)


def corpus_stats(docs: Iterable[tuple[str, str, bool]], tk: Tokenizer) -> CorpusStats:
    """Average token lengths over ``(description, full_document, has_examples)`` triples."""
    docs = list(docs)
    if not docs:
        raise DomainError("corpus_stats needs at least one document")
    desc_counts = [tk.count(d) for d, _, _ in docs]
    doc_counts = [tk.count(full) for _, full, _ in docs]
    return CorpusStats(
        avg_description_tokens=sum(desc_counts) / len(docs),
        avg_document_tokens=sum(doc_counts) / len(docs),
        has_usage_examples=all(flag for _, _, flag in docs),
        n_documents=len(docs),
    )


def description_with_parameters(doc: ToolDocumentation) -> str:
    """The tool description together with each function's description and parameter block."""
    parts = [doc.tool_description] if doc.tool_description else []
    for func in doc.functions:
        parts.append(f"{func.name}: {func.description}".strip())
        params = [p.to_dict() for p in func.parameters]
        if params:
            parts.append(json.dumps(params, ensure_ascii=False))
    return "\n".join(parts)
