import json

import pytest

from easytool.cli import PipelineConfig, main
from easytool.desk import desk_path
from easytool.docs import parse_document
from easytool.errors import ConfigError
from easytool.fixtures import ebay_document, fixture_path
from easytool.io import read_jsonl

from conftest import GOLDEN


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def error_of(err):
    return json.loads(err.strip().splitlines()[-1])


class TestExitCodes:
    def test_missing_command(self, capsys):
        rc, _, err = run(capsys)
        assert rc == 2
        assert error_of(err)["error"] == "UsageError"

    def test_bad_choice(self, capsys):
        rc, _, _ = run(capsys, "ingest", "--in", "x", "--out", "y", "--format", "yaml")
        assert rc == 2

    def test_missing_input_file(self, capsys, tmp_path):
        rc, _, err = run(capsys, "ingest", "--in", tmp_path / "absent.json", "--out", tmp_path / "o.jsonl")
        assert rc == 1
        assert error_of(err)["error"] == "FileNotFoundError"

    def test_malformed_document(self, capsys, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("just some prose")
        rc, _, err = run(capsys, "ingest", "--in", bad, "--out", tmp_path / "o.jsonl")
        assert rc == 1
        assert error_of(err)["error"] == "UnrecognizedFormat"

    def test_unknown_provider_fixture(self, capsys, tmp_path):
        rc, _, err = run(capsys, "refine", "--in", fixture_path("ebay.json"), "--out", tmp_path / "o", "--provider", "scripted:nope.json")
        assert rc == 2
        assert error_of(err)["error"] == "ConfigError"

    def test_incomplete_instructions(self, capsys, tmp_path):
        script = tmp_path / "s.json"
        script.write_text(json.dumps([{"contains": "Tool usage description:", "response": "'Ebay' has 'Product Details'."}, {"contains": "One scenario", "response": "?"}]))
        out = tmp_path / "o.jsonl"
        rc, _, err = run(capsys, "refine", "--in", fixture_path("ebay.json"), "--out", out, "--provider", f"scripted:{script}")
        assert rc == 1
        assert error_of(err)["failures"][0]["failed"] == ["Product Details"]
        assert read_jsonl(out) == []


class TestConfig:
    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"temperature": 0.7}')
        with pytest.raises(ConfigError):
            PipelineConfig.load(str(path))

    def test_bad_agent(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"agent": {"max_trials": 0}}')
        with pytest.raises(ConfigError):
            PipelineConfig.load(str(path))

    def test_missing_prompt_dir(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"prompt_dir": str(tmp_path / "nope")}))
        with pytest.raises(ConfigError):
            PipelineConfig.load(str(path))

    def test_cli_exit_code(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        rc, _, _ = run(capsys, "--config", path, "ingest", "--in", fixture_path("ebay.json"), "--out", tmp_path / "o")
        assert rc == 2

    def test_secret_not_recorded(self):
        config = PipelineConfig(provider={"endpoint": "http://x", "api_key": "s3cret"})
        assert "s3cret" not in json.dumps(config.to_dict())

    def test_seed_changes_header(self, capsys, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run(capsys, "ingest", "--in", fixture_path("ebay.json"), "--out", a)
        run(capsys, "--seed", 7, "ingest", "--in", fixture_path("ebay.json"), "--out", b)
        meta_a = json.loads(a.read_text().splitlines()[0])["_meta"]
        meta_b = json.loads(b.read_text().splitlines()[0])["_meta"]
        assert (meta_a["seed"], meta_b["seed"]) == (0, 7)
        assert meta_a["config_hash"] != meta_b["config_hash"]


def test_ingest_round_trip(capsys, tmp_path):
    out = tmp_path / "docs.jsonl"
    rc, _, _ = run(capsys, "ingest", "--in", fixture_path("ebay.json"), fixture_path("tmdb.txt"), "--out", out)
    assert rc == 0
    docs = [parse_document(json.dumps(r)) for r in read_jsonl(out)]
    assert docs[0] == ebay_document()
    assert docs[1].tool_name == "TMDB"


def test_prompt_dir_override(capsys, tmp_path):
    prompts = tmp_path / "prompts"
    prompts.mkdir()
    (prompts / "description.txt").write_text("Describe briefly.{examples}\n{documentation}\nTool usage description:\n")
    out = tmp_path / "o.jsonl"
    rc, _, _ = run(
        capsys, "--prompt-dir", prompts, "refine", "--in", fixture_path("ebay.json"), "--out", out, "--provider", "scripted:refine_toolbench.json"
    )
    assert rc == 0
    assert read_jsonl(out)[0]["tool_name"] == "Ebay"


class TestValidate:
    def test_golden_passes(self, capsys, tmp_path):
        out = tmp_path / "v.jsonl"
        rc, _, _ = run(capsys, "validate", "--in", GOLDEN / "refine_funcqa.jsonl", "--docs", fixture_path("funcqa_tools.txt"), "--split", "--executor", "arithmetic", "--out", out)
        assert rc == 0
        reports = read_jsonl(out)
        assert len(reports) == 13 and all(r["ok"] and r["execution_ok"] for r in reports)

    def test_mutant_fails(self, capsys, tmp_path):
        records = read_jsonl(GOLDEN / "refine_toolbench.jsonl")
        records[0]["function_guidelines"][0]["Example"]["Parameters"] = {"country": "Germany"}
        mutated = tmp_path / "m.jsonl"
        mutated.write_text("".join(json.dumps(r) + "\n" for r in records))
        out = tmp_path / "v.jsonl"
        rc, _, err = run(capsys, "validate", "--in", mutated, "--docs", fixture_path("toolbench.jsonl"), "--out", out)
        assert rc == 1
        assert error_of(err)["error"] == "ValidationFailed"
        assert [r["ok"] for r in read_jsonl(out)] == [False, True, True, True]


def test_stats_reduction(capsys, tmp_path):
    docs, ins = tmp_path / "d.json", tmp_path / "i.json"
    assert run(capsys, "stats", "--in", fixture_path("toolbench.jsonl"), "--out", docs)[0] == 0
    assert run(capsys, "stats", "--in", GOLDEN / "refine_toolbench.jsonl", "--baseline", docs, "--out", ins)[0] == 0
    data = json.loads(ins.read_text())
    base = json.loads(docs.read_text())
    assert data["kind"] == "instructions" and data["has_usage_examples"] is True
    assert base["has_usage_examples"] is False
    expected = round(100 * (base["avg_document_tokens"] - data["avg_document_tokens"]) / base["avg_document_tokens"], 2)
    assert data["reduce_pct"] == expected


def test_stats_refuses_mixed_inputs(capsys, tmp_path):
    rc, _, _ = run(capsys, "stats", "--in", fixture_path("toolbench.jsonl"), GOLDEN / "refine_toolbench.jsonl", "--out", tmp_path / "s")
    assert rc == 1


def test_stats_cl100k(capsys, tmp_path, cl100k):
    from conftest import find_cl100k_vocab

    out = tmp_path / "s.json"
    rc, _, _ = run(capsys, "stats", "--in", fixture_path("ebay.json"), "--tokenizer", "cl100k", "--tokenizer-file", find_cl100k_vocab(), "--out", out)
    assert rc == 0
    data = json.loads(out.read_text())
    assert data["tokenizer"] == "cl100k"
    assert data["avg_document_tokens"] == 490


class TestIndex:
    def test_build_query_eval(self, capsys, tmp_path):
        index = tmp_path / "index.json"
        rc, _, _ = run(capsys, "index", "build", "--in", GOLDEN / "refine_funcqa.jsonl", "--out", index)
        assert rc == 0
        rc, out, _ = run(capsys, "index", "query", "--index", index, "--query", "greatest common divisor", "--k", 3)
        hits = [json.loads(line) for line in out.splitlines()]
        assert rc == 0 and len(hits) == 3
        assert hits[0]["tool_id"] == "gcd_"
        qrels = tmp_path / "q.jsonl"
        qrels.write_text(json.dumps({"query": "greatest common divisor", "relevant": ["gcd_"]}) + "\n")
        report = tmp_path / "r.json"
        rc, _, _ = run(capsys, "index", "eval", "--index", index, "--qrels", qrels, "--out", report)
        assert rc == 0
        assert json.loads(report.read_text())["mean"] == {"ndcg@1": 1.0, "ndcg@5": 1.0}

    def test_wrong_embedding(self, capsys, tmp_path):
        index = tmp_path / "index.json"
        run(capsys, "index", "build", "--in", fixture_path("toolbench.jsonl"), "--out", index)
        config = tmp_path / "c.json"
        config.write_text('{"dimension": 64}')
        rc, _, err = run(capsys, "--config", config, "index", "query", "--index", index, "--query", "x")
        assert rc == 1
        assert error_of(err)["error"] == "IndexLoadError"


class TestRunAndEval:
    def _instructions(self, capsys, tmp_path):
        out = tmp_path / "ins.jsonl"
        rc, _, _ = run(capsys, "refine", "--in", desk_path("tools.jsonl"), "--out", out, "--provider", f"scripted:{desk_path('refine.json')}")
        assert rc == 0
        return out

    def test_desk_round(self, capsys, tmp_path):
        instructions = self._instructions(capsys, tmp_path)
        requests = desk_path("gold.jsonl")
        traces = {}
        for mode in ("easytool", "raw"):
            traces[mode] = tmp_path / f"{mode}.jsonl"
            rc, _, _ = run(
                capsys, "run", "--mode", mode, "--request", requests, "--docs", desk_path("tools.jsonl"),
                "--instructions", instructions, "--provider", f"scripted:{desk_path('agent.json')}",
                "--trace-out", traces[mode],
            )
            assert rc == 0
        report = tmp_path / "report.json"
        rc, _, _ = run(capsys, "eval", "--traces", traces["easytool"], "--gold", requests, "--metrics", "pass,cp,err", "--report", report)
        assert rc == 0
        easy = json.loads(report.read_text())
        rc, _, _ = run(capsys, "eval", "--traces", traces["raw"], "--metrics", "pass", "--report", report)
        raw = json.loads(report.read_text())
        assert easy["pass_rate"] > raw["pass_rate"]
        assert easy["n"] == 20

    def test_easytool_needs_instructions(self, capsys, tmp_path):
        rc, _, err = run(
            capsys, "run", "--mode", "easytool", "--request", "x", "--docs", desk_path("tools.jsonl"),
            "--provider", f"scripted:{desk_path('agent.json')}", "--trace-out", tmp_path / "t",
        )
        assert rc == 2

    def test_unknown_metric(self, capsys, tmp_path):
        rc, _, _ = run(capsys, "eval", "--traces", tmp_path / "t", "--metrics", "bleu", "--report", tmp_path / "r")
        assert rc == 2

    def test_per_task_and_judge(self, capsys, tmp_path):
        traces = tmp_path / "t.jsonl"
        rc, _, _ = run(
            capsys, "run", "--mode", "raw", "--request", desk_path("gold.jsonl"), "--docs", desk_path("tools.jsonl"),
            "--provider", f"scripted:{desk_path('agent.json')}", "--trace-out", traces,
        )
        assert rc == 0
        judge = tmp_path / "judge.json"
        judge.write_text(json.dumps([{"contains": "This is the response", "response": '{"Choice": "Yes"}'}]))
        report = tmp_path / "r.json"
        rc, _, _ = run(capsys, "eval", "--traces", traces, "--metrics", "pass,success,err", "--per-task", "--judge", f"scripted:{judge}", "--report", report)
        assert rc == 0
        data = json.loads(report.read_text())
        assert data["success_rate"] == data["pass_rate"]
        assert 0 < data["tool_error_rate"] <= 100
