"""Command line entry point: ``easytool <command> ...``.

Data goes to files (or stdout for queries); logs and error records go to
stderr. Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .agent import AgentConfig, InstructionMode, build_deps, read_traces, run_agent, write_traces
from .docs import FORMAT_NAMES, ToolDocumentation, parse_document, serialize_doc, split_by_function
from .errors import ConfigError, EasyToolError, InstructionIncomplete, UsageError
from .evaluate import METRICS, GoldRecord, evaluate
from .instruct import ToolInstruction, build_instruction, validate_guideline
from .io import make_meta, read_jsonl, read_records, write_json, write_jsonl
from .prompts import load_prompts
from .providers import provider_from_spec
from .retrieval import build_index, get_embedding, load_index, ndcg_at_k, save_index, top_k
from .tokens import corpus_stats, description_with_parameters, get_tokenizer, reduction_ratio
from .tools import DryRunExecutor, arithmetic_executor

logger = logging.getLogger("easytool")

EXECUTORS = ("none", "dry-run", "arithmetic")


@dataclass
class PipelineConfig:
    """Settings shared by all commands, loaded from one JSON file.

    Command-line flags override these values; the environment is only read
    for the credential named by ``provider["api_key_env"]``.
    """

    provider: dict = field(default_factory=dict)
    tokenizer: str = "fallback"
    tokenizer_file: str | None = None
    embedding: str = "hash"
    dimension: int = 256
    agent: AgentConfig = field(default_factory=AgentConfig)
    prompt_dir: str | None = None
    seed: int = 0

    @classmethod
    def load(cls, path: str | None) -> "PipelineConfig":
        if path is None:
            return cls()
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("the config file must hold a JSON object")
        unknown = set(data) - {"provider", "tokenizer", "tokenizer_file", "embedding", "dimension", "agent", "prompt_dir", "seed"}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            agent = AgentConfig.from_dict(data.get("agent", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad agent settings: {exc}") from exc
        config = cls(
            provider=dict(data.get("provider", {})),
            tokenizer=data.get("tokenizer", "fallback"),
            tokenizer_file=data.get("tokenizer_file"),
            embedding=data.get("embedding", "hash"),
            dimension=int(data.get("dimension", 256)),
            agent=agent,
            prompt_dir=data.get("prompt_dir"),
            seed=int(data.get("seed", 0)),
        )
        config.check_paths()
        return config

    def check_paths(self) -> None:
        if self.prompt_dir is not None and not Path(self.prompt_dir).is_dir():
            raise ConfigError(f"prompt directory {self.prompt_dir} does not exist")
        if self.tokenizer_file is not None and not Path(self.tokenizer_file).is_file():
            raise ConfigError(f"tokenizer file {self.tokenizer_file} does not exist")

    def to_dict(self) -> dict:
        provider = {k: v for k, v in self.provider.items() if k != "api_key"}
        return {
            "provider": provider,
            "tokenizer": self.tokenizer,
            "embedding": self.embedding,
            "dimension": self.dimension,
            "agent": self.agent.to_dict(),
            "prompt_dir": Path(self.prompt_dir).name if self.prompt_dir else None,
            "seed": self.seed,
        }


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# helpers

def _provider(spec: str, config: PipelineConfig):
    kind, _, arg = spec.partition(":")
    if kind == "scripted" and arg and not Path(arg).exists():
        bundled = Path(str(resources.files("easytool").joinpath("data", "scripts", arg)))
        if bundled.exists():
            spec = f"scripted:{bundled}"
    options = {k: config.provider[k] for k in ("endpoint", "model", "api_key_env", "timeout") if k in config.provider}
    try:
        return provider_from_spec(spec, **options)
    except FileNotFoundError as exc:
        raise ConfigError(f"provider fixture not found: {exc.filename}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _executor(name: str, docs: Sequence[ToolDocumentation]):
    if name == "none":
        return None
    if name == "dry-run":
        return DryRunExecutor(docs)
    return arithmetic_executor(docs)


def _documents(paths: Sequence[str], fmt: str = "auto", split: bool = False) -> list[tuple[ToolDocumentation, str]]:
    """``(document, raw text)`` pairs from every record of every input file."""
    pairs = []
    for path in paths:
        for raw in read_records(path):
            doc = parse_document(raw, fmt)
            if split:
                pairs.extend((part, serialize_doc(part)) for part in split_by_function(doc))
            else:
                pairs.append((doc, raw))
    return pairs


def _instructions(path: str) -> list[ToolInstruction]:
    return [ToolInstruction.from_dict(r) for r in read_jsonl(path)]


def _meta(args, config: PipelineConfig, **settings) -> dict:
    return make_meta(config.seed, {"command": args.command, "config": config.to_dict(), **settings})


def _is_instruction_record(record: Any) -> bool:
    return isinstance(record, dict) and "function_guidelines" in record


# commands

def cmd_ingest(args, config):
    docs = [doc for doc, _ in _documents(args.inputs, args.format, args.split)]
    write_jsonl(args.out, [doc.to_dict() for doc in docs], _meta(args, config, format=args.format, split=args.split))
    logger.info("wrote %d documents to %s", len(docs), args.out)
    return 0


def cmd_refine(args, config):
    provider = _provider(args.provider, config)
    prompts = load_prompts(config.prompt_dir)
    docs = [doc for doc, _ in _documents(args.inputs, args.format, args.split)]
    executor = _executor(args.executor, docs)
    instructions = []
    failures = []
    for doc in docs:
        try:
            instructions.append(build_instruction(doc, provider, executor, prompts))
        except InstructionIncomplete as exc:
            failures.append({"tool": doc.tool_name, "failed": list(exc.failed), "message": str(exc)})
    meta = _meta(args, config, provider=provider.id, format=args.format, split=args.split, executor=args.executor)
    write_jsonl(args.out, [ins.to_dict() for ins in instructions], meta)
    logger.info("wrote %d instructions to %s", len(instructions), args.out)
    if failures:
        _error_record("InstructionIncomplete", f"{len(failures)} tools have incomplete instructions", failures=failures)
        return 1
    return 0


def cmd_validate(args, config):
    docs = {doc.tool_name: doc for doc, _ in _documents(args.docs, args.format, args.split)}
    executor = _executor(args.executor, list(docs.values()))
    reports = []
    for ins in _instructions(args.inputs):
        doc = docs.get(ins.tool_name)
        if doc is None:
            raise EasyToolError(f"no documentation for tool {ins.tool_name!r}")
        for g in ins.function_guidelines:
            func = doc.function(g.function_name)
            if func is None:
                raise EasyToolError(f"tool {ins.tool_name!r} has no function {g.function_name!r}")
            report = validate_guideline(g, func, executor, tool_id=ins.tool_name)
            reports.append({"tool": ins.tool_name, **report.to_dict(), "ok": report.ok})
    write_jsonl(args.out, reports, _meta(args, config, executor=args.executor))
    failed = [r for r in reports if not r["ok"]]
    if failed:
        _error_record("ValidationFailed", f"{len(failed)} of {len(reports)} guidelines failed validation")
        return 1
    return 0


def cmd_stats(args, config):
    tk = get_tokenizer(args.tokenizer or config.tokenizer, args.tokenizer_file or config.tokenizer_file)
    triples = []
    kinds = set()
    for path in args.inputs:
        for raw in read_records(path):
            try:
                record = json.loads(raw)
            except json.JSONDecodeError:
                record = None
            if _is_instruction_record(record):
                ins = ToolInstruction.from_dict(record)
                kinds.add("instructions")
                triples.append((ins.description, ins.to_json(), all(g.example is not None for g in ins.function_guidelines)))
                continue
            doc = parse_document(raw, args.format)
            kinds.add("documents")
            parts = split_by_function(doc) if args.split else [doc]
            for part in parts:
                text = serialize_doc(part) if args.split else raw
                triples.append((description_with_parameters(part), text, False))
    if len(kinds) > 1:
        raise EasyToolError("inputs mix documents and instructions; compute their statistics separately")
    stats = corpus_stats(triples, tk)
    data = {
        "dataset": args.dataset or Path(args.inputs[0]).stem,
        "kind": kinds.pop(),
        "tokenizer": tk.id,
        **stats.to_dict(),
        "total_tokens": sum(tk.count(full) for _, full, _ in triples),
    }
    if args.baseline:
        baseline = json.loads(Path(args.baseline).read_text(encoding="utf-8"))
        if baseline.get("tokenizer") != tk.id:
            raise ConfigError(f"baseline was counted with {baseline.get('tokenizer')!r}, not {tk.id!r}")
        data["token_doc"] = baseline["avg_document_tokens"]
        data["token_ins"] = stats.avg_document_tokens
        data["reduce_pct"] = reduction_ratio(data["token_doc"], data["token_ins"])
    write_json(args.out, data, _meta(args, config, tokenizer=tk.id, split=args.split))
    return 0


def _index_entries(path: str, fmt: str, split: bool) -> list[tuple[str, str]]:
    entries = []
    for raw in read_records(path):
        record = json.loads(raw) if raw.lstrip().startswith("{") else None
        if _is_instruction_record(record):
            ins = ToolInstruction.from_dict(record)
            entries.append((ins.tool_name, ins.description))
            continue
        doc = parse_document(raw, fmt)
        for part in split_by_function(doc) if split else [doc]:
            entries.append((part.tool_name, part.tool_description or description_with_parameters(part)))
    return entries


def cmd_index(args, config):
    embedder = get_embedding(config.embedding, config.dimension)
    if args.index_command == "build":
        index = build_index(_index_entries(args.inputs, args.format, args.split), embedder)
        save_index(index, args.out, _meta(args, config, embedding=embedder.id))
        logger.info("indexed %d tools into %s", len(index), args.out)
        return 0
    index = load_index(args.index, embedder)
    if args.index_command == "query":
        result = top_k(index, args.query, args.k, embedder)
        for tool_id, score in result:
            print(json.dumps({"tool_id": tool_id, "score": round(score, 6)}, ensure_ascii=False))
        return 0
    rows = []
    for qrel in read_jsonl(args.qrels):
        ranked = top_k(index, qrel["query"], max(5, args.k), embedder).ids
        relevant = set(qrel["relevant"])
        rows.append({"query": qrel["query"], "ndcg@1": ndcg_at_k(ranked, relevant, 1), "ndcg@5": ndcg_at_k(ranked, relevant, 5)})
    if not rows:
        raise EasyToolError("the qrels file has no queries")
    summary = {
        "queries": rows,
        "mean": {key: sum(r[key] for r in rows) / len(rows) for key in ("ndcg@1", "ndcg@5")},
    }
    write_json(args.out, summary, _meta(args, config, embedding=embedder.id))
    return 0


def _requests(value: str) -> list[str]:
    path = Path(value)
    if not path.is_file():
        return [value]
    if path.suffix == ".jsonl":
        return [r["request"] if isinstance(r, dict) else str(r) for r in read_jsonl(path)]
    return [path.read_text(encoding="utf-8").strip()]


def _agent_config(args, config: PipelineConfig) -> AgentConfig:
    base = config.agent.to_dict()
    overrides = {"max_trials": args.max_trials, "top_k": args.k, "step_budget": args.step_budget, "instruction_mode": args.mode}
    base.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return AgentConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad agent settings: {exc}") from exc


def cmd_run(args, config):
    agent_config = _agent_config(args, config)
    pairs = _documents(args.docs, args.format, args.split)
    docs = [doc for doc, _ in pairs]
    raw_docs = {doc.tool_name: raw for doc, raw in pairs}
    instructions = _instructions(args.instructions) if args.instructions else []
    if agent_config.instruction_mode is InstructionMode.EASYTOOL and not instructions:
        raise ConfigError("easytool mode needs --instructions")
    planner = _provider(args.provider, config)
    extra = {}
    if args.selector:
        extra["selector"] = _provider(args.selector, config)
    if args.answerer:
        extra["answerer"] = _provider(args.answerer, config)
    executor = _executor(args.executor if args.executor != "none" else "dry-run", docs)
    deps = build_deps(
        docs,
        agent_config.instruction_mode,
        planner,
        executor,
        get_embedding(config.embedding, config.dimension),
        instructions=instructions,
        raw_docs=raw_docs,
        prompts=load_prompts(config.prompt_dir),
        **extra,
    )
    traces = [run_agent(request, agent_config, deps) for request in _requests(args.request)]
    meta = _meta(args, config, agent=agent_config.to_dict(), provider=planner.id, executor=args.executor)
    write_traces(args.trace_out, traces, meta)
    for trace in traces:
        logger.info("%s: %s", trace.terminated_reason.value, trace.request[:60])
    return 0


def cmd_eval(args, config):
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise UsageError(f"unknown metrics {sorted(unknown)}; choose from {', '.join(METRICS)}")
    traces = read_traces(args.traces)
    golds = [GoldRecord.from_dict(r) for r in read_jsonl(args.gold)] if args.gold else None
    against = read_traces(args.against) if args.against else None
    judge = _provider(args.judge, config) if args.judge else None
    report = evaluate(
        traces,
        golds,
        metrics,
        judge=judge,
        against=against,
        per_task_errors=args.per_task,
        seed=config.seed,
        prompts=load_prompts(config.prompt_dir),
    )
    settings = {"metrics": metrics, "judge": judge.id if judge else None, "per_task": args.per_task}
    write_json(args.report, report.to_dict(), _meta(args, config, **settings))
    return 0


# parser

def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog="easytool", description="Concise tool instructions from tool documentation.")
    parser.add_argument("--version", action="version", version=f"easytool {__version__}")
    parser.add_argument("--config", help="JSON pipeline configuration file")
    parser.add_argument("--seed", type=int, help="overrides the configured seed")
    parser.add_argument("--prompt-dir", help="directory of prompt templates overriding the bundled ones")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    def docs_options(p):
        p.add_argument("--format", default="auto", choices=("auto", *FORMAT_NAMES))
        p.add_argument("--split", action="store_true", help="treat every function as its own tool")

    p = sub.add_parser("ingest", help="normalize documentation into the canonical schema")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    docs_options(p)

    p = sub.add_parser("refine", help="generate tool instructions")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--provider", required=True, help="scripted:<fixture.json> or network")
    p.add_argument("--executor", default="none", choices=EXECUTORS)
    docs_options(p)
    p.add_argument("--prompt-dir", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    p = sub.add_parser("validate", help="check instruction examples against their documentation")
    p.add_argument("--in", dest="inputs", required=True, help="instruction JSONL")
    p.add_argument("--docs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--executor", default="none", choices=EXECUTORS)
    docs_options(p)

    p = sub.add_parser("stats", help="token statistics of a documentation or instruction corpus")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tokenizer", choices=("fallback", "cl100k"))
    p.add_argument("--tokenizer-file", help="local cl100k_base.tiktoken vocabulary")
    p.add_argument("--baseline", help="stats file of the documentation corpus, to report the reduction")
    p.add_argument("--dataset", help="dataset label for the output")
    docs_options(p)

    p = sub.add_parser("index", help="build, query and evaluate the retrieval index")
    isub = p.add_subparsers(dest="index_command", required=True, parser_class=ArgumentParser)
    b = isub.add_parser("build")
    b.add_argument("--in", dest="inputs", required=True, help="instruction JSONL or documentation")
    b.add_argument("--out", required=True)
    docs_options(b)
    q = isub.add_parser("query")
    q.add_argument("--index", required=True)
    q.add_argument("--query", required=True)
    q.add_argument("--k", type=int, default=5)
    e = isub.add_parser("eval")
    e.add_argument("--index", required=True)
    e.add_argument("--qrels", required=True, help='JSONL of {"query": ..., "relevant": [...]}')
    e.add_argument("--out", required=True)
    e.add_argument("--k", type=int, default=5)

    p = sub.add_parser("run", help="run the agent on one or more requests")
    p.add_argument("--mode", choices=("raw", "easytool"))
    p.add_argument("--request", required=True, help="request text, a text file, or a JSONL file of requests")
    p.add_argument("--docs", nargs="+", required=True)
    p.add_argument("--instructions", help="instruction JSONL (needed in easytool mode)")
    p.add_argument("--provider", required=True, help="planner provider; also selects and answers unless overridden")
    p.add_argument("--selector")
    p.add_argument("--answerer")
    p.add_argument("--executor", default="dry-run", choices=EXECUTORS)
    p.add_argument("--max-trials", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--step-budget", type=int)
    p.add_argument("--trace-out", required=True)
    docs_options(p)

    p = sub.add_parser("eval", help="score traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--gold")
    p.add_argument("--metrics", default="pass,err")
    p.add_argument("--judge", help="scripted:<fixture.json> or network")
    p.add_argument("--against", help="second trace file for the win rate")
    p.add_argument("--per-task", action="store_true", help="tool error rate per task instead of per call")
    p.add_argument("--report", required=True)
    return parser


COMMANDS = {
    "ingest": cmd_ingest,
    "refine": cmd_refine,
    "validate": cmd_validate,
    "stats": cmd_stats,
    "index": cmd_index,
    "run": cmd_run,
    "eval": cmd_eval,
}


def _error_record(kind: str, message: str, **extra) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}, ensure_ascii=False), file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        config = PipelineConfig.load(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.prompt_dir is not None:
            config.prompt_dir = args.prompt_dir
            config.check_paths()
        return COMMANDS[args.command](args, config)
    except (UsageError, ConfigError) as exc:
        _error_record(type(exc).__name__, str(exc))
        return 2
    except (EasyToolError, OSError, ValueError, KeyError) as exc:
        _error_record(type(exc).__name__, str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
