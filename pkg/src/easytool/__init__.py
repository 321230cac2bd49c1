"""Concise tool instructions from messy tool documentation.

The package normalizes tool documentation from several source formats,
rewrites it into short instructions with worked usage examples, and provides
the retrieval, agent loop and metrics used to measure whether that helps.
"""

__version__ = "0.1.0"

from .agent import AgentConfig, AgentDeps, AgentTrace, InstructionMode, Outcome, Subtask, TerminatedReason, run_agent
from .docs import FunctionSpec, ParameterSpec, SourceFormat, ToolDocumentation, ValueType, parse_document, serialize_doc
from .evaluate import EvaluationReport, GoldRecord, evaluate
from .instruct import FunctionGuideline, ToolInstruction, UsageExample, build_instruction, validate_guideline
from .providers import DecodingConfig, NetworkProvider, RepairingProvider, ScriptedProvider
from .retrieval import HashEmbedding, RetrievalIndex, build_index, ndcg_at_k, top_k
from .tokens import FallbackTokenizer, corpus_stats, count_tokens, reduction_ratio
from .tools import LocalExecutor, Registry, ToolCall

__all__ = [
    "AgentConfig",
    "AgentDeps",
    "AgentTrace",
    "DecodingConfig",
    "EvaluationReport",
    "FallbackTokenizer",
    "FunctionGuideline",
    "FunctionSpec",
    "GoldRecord",
    "HashEmbedding",
    "InstructionMode",
    "LocalExecutor",
    "NetworkProvider",
    "Outcome",
    "ParameterSpec",
    "Registry",
    "RepairingProvider",
    "RetrievalIndex",
    "ScriptedProvider",
    "SourceFormat",
    "Subtask",
    "TerminatedReason",
    "ToolCall",
    "ToolDocumentation",
    "ToolInstruction",
    "UsageExample",
    "ValueType",
    "build_index",
    "build_instruction",
    "corpus_stats",
    "count_tokens",
    "evaluate",
    "ndcg_at_k",
    "parse_document",
    "reduction_ratio",
    "run_agent",
    "serialize_doc",
    "top_k",
    "validate_guideline",
]
