import io
import json
import os

import pytest

from dotrag.cli import main
from dotrag.graph_store import load_index
from dotrag.providers import JUDGE_DIMENSIONS

TESLA_Q = "Who is the CEO of Tesla?"


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


@pytest.fixture
def tesla_args(fixtures):
    return ["--index", str(fixtures / "tesla_index.ndjson"), "--mock-script", str(fixtures / "tesla_mock.json")]


@pytest.fixture
def metaqa_index(fixtures, tmp_path):
    out = tmp_path / "metaqa.ndjson"
    code, _ = run(["prep", "build-index", str(fixtures / "metaqa_triples.txt"), "--out", str(out),
                   "--mock-script", str(fixtures / "metaqa_mock.json")])
    assert code == 0
    return out


class TestQuery:
    def test_golden_bundle_byte_identical(self, fixtures, tesla_args):
        code, first = run(["query", TESLA_Q, *tesla_args])
        _, second = run(["query", TESLA_Q, *tesla_args])
        assert code == 0 and first == second
        golden = fixtures / "tesla_bundle.json"
        if os.environ.get("DOTRAG_REGEN_GOLDEN") == "1":
            golden.write_text(first)
        assert first == golden.read_text()

    def test_bundle_content(self, tesla_args):
        bundle = json.loads(run(["query", TESLA_Q, *tesla_args])[1])
        assert bundle["answer"] == "Elon Musk is the CEO of Tesla."
        assert [p["nodes"] for p in bundle["paths"]] == [["tesla", "elon_musk"]]

    def test_trace_written(self, tesla_args, tmp_path):
        trace = tmp_path / "t.ndjson"
        assert run(["query", TESLA_Q, *tesla_args, "--trace", str(trace)])[0] == 0
        events = [json.loads(line)["event"] for line in trace.read_text().splitlines()]
        assert events[0] == "concepts" and events[-1] == "answer"


class TestExitCodes:
    def test_missing_index(self, fixtures, tmp_path, capsys):
        code, _ = run(["query", "q", "--index", str(tmp_path / "none.ndjson"),
                       "--mock-script", str(fixtures / "tesla_mock.json")])
        assert code == 2 and "error" in capsys.readouterr().err

    def test_no_index_given(self, fixtures):
        assert run(["query", "q", "--mock-script", str(fixtures / "tesla_mock.json")])[0] == 2

    @pytest.mark.parametrize("flag", [["--hops", "0"], ["--iterations", "0"], ["--tau", "2"], ["--cap", "-1"]])
    def test_invalid_parameter(self, tesla_args, flag, capsys):
        assert run(["query", "q", *tesla_args, *flag])[0] == 2
        assert "must be" in capsys.readouterr().err

    def test_no_provider(self, fixtures, monkeypatch):
        monkeypatch.delenv("DOTRAG_BASE_URL", raising=False)
        assert run(["query", "q", "--index", str(fixtures / "tesla_index.ndjson")])[0] == 2

    def test_provider_failure_prints_raw(self, fixtures, tmp_path, capsys):
        script = tmp_path / "bad.json"
        script.write_text(json.dumps({"rules": [{"stage": "final_answer", "raw": "garbled output"}]}))
        code, _ = run(["query", TESLA_Q, "--index", str(fixtures / "tesla_index.ndjson"),
                       "--mock-script", str(script)])
        assert code == 1 and "garbled output" in capsys.readouterr().err


class TestEvalRetrieval:
    def test_metaqa_report(self, fixtures, metaqa_index, tmp_path):
        report_path = tmp_path / "r.json"
        code, text = run(["eval-retrieval", str(fixtures / "metaqa_truth.ndjson"), "--index", str(metaqa_index),
                          "--mock-script", str(fixtures / "metaqa_mock.json"),
                          "--config", str(fixtures / "metaqa_config.json"), "--out", str(report_path)])
        assert code == 0 and "AVERAGE" in text
        avg = json.loads(report_path.read_text())["average"]
        assert avg["recall"] == pytest.approx(5 / 6) and avg["precision"] == pytest.approx(5 / 18)
        assert avg["f1"] == pytest.approx(37 / 90)

    def test_needs_ground_truth(self, tesla_args):
        assert run(["eval-retrieval", *tesla_args])[0] == 2


class TestJudge:
    @pytest.fixture
    def answers(self, tmp_path):
        a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        a.write_text("".join(json.dumps({"query_id": f"q{i}", "question": "?", "answer": "x"}) + "\n" for i in range(3)))
        b.write_text("".join(json.dumps({"query_id": f"q{i}", "question": "?", "answer": "y"}) + "\n" for i in range(3)))
        return a, b

    def test_position_biased_mock_gives_half(self, answers, tmp_path):
        script = tmp_path / "judge.json"
        script.write_text(json.dumps({"rules": [], "defaults": {"judge_pairwise": {d: "1" for d in JUDGE_DIMENSIONS}}}))
        code, text = run(["judge", *map(str, answers), "--mock-script", str(script)])
        payload = json.loads(text[: text.index("\n}") + 2])
        assert code == 0 and payload["rounds"] == 6
        assert payload["dimensions"]["Overall"]["win_rate_a"] == 0.5

    def test_mismatched_ids(self, answers, fixtures, tmp_path):
        c = tmp_path / "c.ndjson"
        c.write_text(json.dumps({"query_id": "other", "answer": "z"}) + "\n")
        assert run(["judge", str(answers[0]), str(c), "--mock-script", str(fixtures / "tesla_mock.json")])[0] == 2


class TestPrep:
    def test_build_index_loads(self, metaqa_index):
        index = load_index(metaqa_index)
        assert len(index.entities) == 31 and len(index.relations) == 30
        assert json.loads(metaqa_index.with_name(metaqa_index.name + ".failures.json").read_text()) == []

    def test_textualize(self, fixtures, tmp_path):
        out = tmp_path / "chunks.ndjson"
        code, text = run(["prep", "textualize", str(fixtures / "metaqa_triples.txt"), "--out", str(out),
                          "--mock-script", str(fixtures / "metaqa_mock.json")])
        assert code == 0 and json.loads(text) == {"written": 31, "failures": 0}
        first = json.loads(out.read_text().splitlines()[0])
        assert first["center"] == "Blade Runner" and "<Blade Runner>" in first["text"]

    def test_dedup_writes_merge_report(self, tesla_args, tmp_path):
        out = tmp_path / "d.ndjson"
        code, text = run(["prep", "dedup", tesla_args[1], "--out", str(out), *tesla_args[2:]])
        assert code == 0
        report = json.loads(out.with_name(out.name + ".merge.json").read_text())
        assert report["n_entities"] == 6 and json.loads(text)["entities_after"] == 6 - sum(
            len(c["members"]) - 1 for c in report["merged"])

    def test_relabel_reports_decisions(self, tesla_args, tmp_path):
        out = tmp_path / "r.ndjson"
        script = tmp_path / "m.json"
        ids = ["elon_musk", "jb_straubel", "model_s", "palo_alto", "spacex", "tesla"]
        script.write_text(json.dumps({"rules": [], "defaults": {
            "type_relabel": {"labels": {i: "organization" for i in ids}}}}))
        code, text = run(["prep", "relabel", tesla_args[1], "--out", str(out), "--mock-script", str(script)])
        assert code == 0 and json.loads(text)["decisions"] == 6
        assert {e.entity_type for e in load_index(out).entities.values()} == {"organization"}
