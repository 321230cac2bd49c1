"""scikit-learn style wrappers, so the stages compose in a ``Pipeline``.

Parsing and instruction generation are stateless transformers; the retriever
is fitted on an inventory and predicts ranked tool ids for query strings.
"""
from __future__ import annotations

from typing import Any, Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .docs import ToolDocumentation, parse_document
from .instruct import ToolInstruction, build_instruction
from .prompts import load_prompts
from .retrieval import build_index, get_embedding, ndcg_at_k, top_k


def check_texts(X: Any, name: str = "X") -> list[str]:
    """A non-empty list of strings; a single string is rejected to avoid iterating characters."""
    if isinstance(X, (str, bytes)):
        raise TypeError(f"{name} must be a sequence of strings, not a single string")
    items = list(X)
    if not items:
        raise ValueError(f"{name} is empty")
    bad = [type(x).__name__ for x in items if not isinstance(x, str)]
    if bad:
        raise TypeError(f"{name} must contain strings only, found {bad[0]}")
    return items


def check_documents(X: Any) -> list[ToolDocumentation]:
    items = list(X)
    if not items:
        raise ValueError("no documents given")
    for item in items:
        if not isinstance(item, ToolDocumentation):
            raise TypeError(f"expected ToolDocumentation, got {type(item).__name__}")
    return items


def _inventory_pairs(X: Iterable) -> list[tuple[str, str]]:
    pairs = []
    for item in X:
        if isinstance(item, ToolInstruction):
            pairs.append((item.tool_name, item.description))
        elif isinstance(item, ToolDocumentation):
            pairs.append((item.tool_name, item.tool_description or item.tool_name))
        elif isinstance(item, tuple) and len(item) == 2:
            pairs.append((str(item[0]), str(item[1])))
        else:
            raise TypeError(f"cannot index {type(item).__name__}; give instructions, documents or (id, text) pairs")
    return pairs


class DocumentParser(TransformerMixin, BaseEstimator):
    """Raw documentation strings to :class:`ToolDocumentation`."""

    def __init__(self, fmt: str = "auto"):
        self.fmt = fmt

    def fit(self, X, y=None):
        check_texts(X)
        return self

    def transform(self, X) -> list[ToolDocumentation]:
        return [parse_document(text, self.fmt) for text in check_texts(X)]


class InstructionGenerator(TransformerMixin, BaseEstimator):
    """Documents to tool instructions through a completion provider."""

    def __init__(self, provider=None, executor=None, prompt_dir: str | None = None):
        self.provider = provider
        self.executor = executor
        self.prompt_dir = prompt_dir

    def fit(self, X, y=None):
        check_documents(X)
        return self

    def transform(self, X) -> list[ToolInstruction]:
        if self.provider is None:
            raise ValueError("InstructionGenerator needs a completion provider")
        prompts = load_prompts(self.prompt_dir)
        return [build_instruction(doc, self.provider, self.executor, prompts) for doc in check_documents(X)]


class ToolRetriever(BaseEstimator):
    """Cosine top-k retrieval over a fitted tool inventory.

    ``fit`` accepts instructions, documents or ``(tool_id, description)``
    pairs. ``predict`` returns the ranked ids for each query and ``score``
    the mean NDCG@k against sets of relevant ids.
    """

    def __init__(self, k: int = 5, embedding: str = "hash", dimension: int = 256):
        self.k = k
        self.embedding = embedding
        self.dimension = dimension

    def fit(self, X, y=None):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        self.embedder_ = get_embedding(self.embedding, self.dimension)
        self.index_ = build_index(_inventory_pairs(X), self.embedder_)
        self.n_tools_ = len(self.index_)
        return self

    def predict(self, X) -> list[list[str]]:
        check_is_fitted(self, "index_")
        return [top_k(self.index_, query, self.k, self.embedder_).ids for query in check_texts(X)]

    def score(self, X, y: Sequence[Iterable[str]]) -> float:
        queries = check_texts(X)
        if len(queries) != len(y):
            raise ValueError(f"{len(queries)} queries but {len(y)} relevance sets")
        ranked = self.predict(queries)
        return sum(ndcg_at_k(r, rel, self.k) for r, rel in zip(ranked, y)) / len(queries)
