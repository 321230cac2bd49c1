"""Description embeddings, exhaustive cosine top-K search, and NDCG@K."""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import DimensionMismatch, IndexBuildError, IndexLoadError, ProviderError, ZeroVector

INDEX_FORMAT = "easytool-index"
INDEX_VERSION = 1
# Scores closer than this are ties, resolved by ascending tool id.
TIE_DECIMALS = 12


@runtime_checkable
class EmbeddingProvider(Protocol):
    id: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedding:
    """Feature-hashed bag of lowercased words, L2-normalized.

    Buckets come from BLAKE2b of each word, so vectors are identical across
    processes and platforms. Text without words embeds to the zero vector.
    """

    _word = re.compile(r"[^\W_]+")

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.id = f"hash-bow-{dimension}"

    def _bucket(self, word: str) -> int:
        digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dimension, dtype=np.float64)
        for word in self._word.findall(text.lower()):
            vector[self._bucket(word)] += 1.0
        norm = np.linalg.norm(vector)
        return vector / norm if norm > 0 else vector


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise DimensionMismatch(f"vectors have lengths {len(a)} and {len(b)}")
    norm_a = math.sqrt(math.fsum(x * x for x in a))
    norm_b = math.sqrt(math.fsum(x * x for x in b))
    if norm_a == 0 or norm_b == 0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    value = math.fsum(x * y for x, y in zip(a, b)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class IndexEntry:
    tool_id: str
    description: str
    vector: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, IndexEntry):
            return NotImplemented
        return (
            self.tool_id == other.tool_id
            and self.description == other.description
            and np.array_equal(self.vector, other.vector)
        )

    def __hash__(self):
        return hash((self.tool_id, self.description))


class RetrievalIndex:
    """Immutable set of embedded tool descriptions."""

    def __init__(self, entries: Iterable[IndexEntry], dimension: int, provider_id: str):
        self.entries = tuple(entries)
        self.dimension = dimension
        self.provider_id = provider_id
        ids = [e.tool_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise IndexBuildError("tool ids in an index must be unique")
        if any(e.vector.shape != (dimension,) for e in self.entries):
            raise IndexBuildError(f"every vector must have dimension {dimension}")
        matrix = np.array([e.vector for e in self.entries], dtype=np.float64).reshape(len(self.entries), dimension)
        matrix.setflags(write=False)
        self._matrix = matrix
        norms = np.linalg.norm(matrix, axis=1)
        norms.setflags(write=False)
        self._norms = norms
        self._position = {tool_id: i for i, tool_id in enumerate(ids)}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, tool_id: str) -> bool:
        return tool_id in self._position

    @property
    def tool_ids(self) -> list[str]:
        return [e.tool_id for e in self.entries]

    def entry(self, tool_id: str) -> IndexEntry:
        return self.entries[self._position[tool_id]]

    def scores(self, vector: np.ndarray) -> np.ndarray:
        """Cosine similarity of ``vector`` with every entry; 0 where either side is zero."""
        if vector.shape != (self.dimension,):
            raise DimensionMismatch(f"query has dimension {vector.shape}, index has {self.dimension}")
        qnorm = float(np.linalg.norm(vector))
        if len(self) == 0:
            return np.zeros(0)
        dots = self._matrix @ vector
        denom = self._norms * qnorm
        out = np.zeros(len(self), dtype=np.float64)
        np.divide(dots, denom, out=out, where=denom > 0)
        return np.clip(out, -1.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "provider": self.provider_id,
            "dimension": self.dimension,
            "entries": [
                {"tool_id": e.tool_id, "description": e.description, "vector": e.vector.tolist()} for e in self.entries
            ],
        }


def _description_of(item) -> tuple[str, str]:
    if isinstance(item, tuple) and len(item) == 2:
        return item
    return item.tool_name, item.description


def build_index(instructions: Iterable, provider: EmbeddingProvider) -> RetrievalIndex:
    """Embed each instruction's description.

    Items may be ToolInstruction objects or ``(tool_id, description)`` pairs.
    """
    entries = []
    seen = set()
    for item in instructions:
        tool_id, description = _description_of(item)
        if tool_id in seen:
            raise IndexBuildError(f"duplicate tool id {tool_id!r}")
        seen.add(tool_id)
        if not description or not description.strip():
            raise IndexBuildError(f"tool {tool_id!r} has an empty description")
        try:
            vector = np.asarray(provider.embed(description), dtype=np.float64)
        except Exception as exc:
            raise ProviderError(f"embedding failed for {tool_id!r}: {exc}") from exc
        vector.setflags(write=False)
        entries.append(IndexEntry(tool_id, description, vector))
    return RetrievalIndex(entries, provider.dimension, provider.id)


@dataclass(frozen=True)
class RankedResult:
    hits: tuple[tuple[str, float], ...]

    @property
    def ids(self) -> list[str]:
        return [tool_id for tool_id, _ in self.hits]

    def __len__(self) -> int:
        return len(self.hits)

    def __iter__(self):
        return iter(self.hits)


def rank_order(tool_ids: Sequence[str], scores: Sequence[float]) -> list[int]:
    """Positions sorted by descending score; scores equal to 12 decimals tie and go by tool id."""
    return sorted(range(len(tool_ids)), key=lambda i: (-round(float(scores[i]), TIE_DECIMALS), tool_ids[i]))


def top_k(index: RetrievalIndex, query: str, k: int, provider: EmbeddingProvider) -> RankedResult:
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(index) == 0:
        return RankedResult(())
    if provider.id != index.provider_id:
        raise ProviderError(f"index was built with {index.provider_id!r}, not {provider.id!r}")
    try:
        vector = np.asarray(provider.embed(query), dtype=np.float64)
    except Exception as exc:
        raise ProviderError(f"embedding failed for the query: {exc}") from exc
    scores = index.scores(vector)
    ids = index.tool_ids
    order = rank_order(ids, scores)[:k]
    return RankedResult(tuple((ids[i], float(scores[i])) for i in order))


def ndcg_at_k(ranked: Sequence[str], relevant: Iterable[str], k: int) -> float:
    """NDCG@k with binary gains and a ``log2(position + 1)`` discount.

    Repeated ids in ``ranked`` only earn gain once. Zero when nothing is relevant.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    dcg = 0.0
    seen = set()
    for position, tool_id in enumerate(ranked[:k], start=1):
        if tool_id in relevant and tool_id not in seen:
            dcg += 1.0 / math.log2(position + 1)
        seen.add(tool_id)
    ideal = sum(1.0 / math.log2(position + 1) for position in range(1, min(k, len(relevant)) + 1))
    return dcg / ideal


def save_index(index: RetrievalIndex, path: str | Path, meta: dict | None = None) -> None:
    payload = index.to_dict()
    if meta is not None:
        payload["_meta"] = meta
    Path(path).write_text(json.dumps(payload, ensure_ascii=False) + "\n", encoding="utf-8")


def load_index(path: str | Path, provider: EmbeddingProvider) -> RetrievalIndex:
    """Read an index file, refusing one built by a different embedding provider."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IndexLoadError(f"cannot read index {path}: {exc}") from exc
    if data.get("format") != INDEX_FORMAT or data.get("version") != INDEX_VERSION:
        raise IndexLoadError(f"{path} is not a version {INDEX_VERSION} index file")
    if data.get("provider") != provider.id:
        raise IndexLoadError(f"index built with {data.get('provider')!r}, cannot use it with {provider.id!r}")
    dimension = int(data["dimension"])
    entries = []
    for raw in data["entries"]:
        vector = np.asarray(raw["vector"], dtype=np.float64)
        vector.setflags(write=False)
        entries.append(IndexEntry(raw["tool_id"], raw["description"], vector))
    try:
        return RetrievalIndex(entries, dimension, data["provider"])
    except IndexBuildError as exc:
        raise IndexLoadError(str(exc)) from exc


def get_embedding(name: str = "hash", dimension: int = 256) -> EmbeddingProvider:
    if name == "hash":
        return HashEmbedding(dimension)
    raise ValueError(f"unknown embedding provider {name!r}")
