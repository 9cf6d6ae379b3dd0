import hashlib
import json
from pathlib import Path

import pytest

from temporag.cli import main

DEMO = Path(__file__).resolve().parent.parent / "demo"


def run_cli(args):
    return main([str(a) for a in args])


@pytest.fixture()
def built_index(tmp_path):
    store = tmp_path / "store"
    index = tmp_path / "index"
    rc = run_cli(
        [
            "ingest",
            DEMO / "audio.srt",
            DEMO / "screen_text.jsonl",
            DEMO / "detections.jsonl",
            "--frames",
            DEMO / "frames.jsonl",
            "--video-id",
            "harbor",
            "--duration-s",
            "120",
            "--out",
            store,
        ]
    )
    assert rc == 0
    rc = run_cli(["build", "--store", store, "--out", index, "--config", DEMO / "config.json"])
    assert rc == 0
    return index


class TestIngest:
    def test_writes_channel_stores(self, tmp_path, capsys):
        out = tmp_path / "store"
        rc = run_cli(
            [
                "ingest",
                DEMO / "audio.srt",
                DEMO / "screen_text.jsonl",
                "--video-id",
                "v",
                "--duration-s",
                "120",
                "--out",
                out,
            ]
        )
        assert rc == 0
        assert (out / "asr.jsonl").exists()
        assert (out / "ocr.jsonl").exists()
        stdout = capsys.readouterr().out
        assert "asr: 13 snippets" in stdout
        assert "ocr: 10 snippets" in stdout

    def test_empty_directory_is_error(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = run_cli(
            ["ingest", empty, "--video-id", "v", "--duration-s", "10", "--out", tmp_path / "o"]
        )
        assert rc == 2
        assert "no inputs" in capsys.readouterr().err

    def test_corrupt_line_survives_with_report(self, tmp_path, capsys):
        bad = tmp_path / "mixed.jsonl"
        bad.write_text(
            '{"id": "a", "channel": "ocr", "text": "ok", "t_start": 1, "t_end": 1}\n'
            "{broken\n",
            encoding="utf-8",
        )
        rc = run_cli(
            ["ingest", bad, "--video-id", "v", "--duration-s", "10", "--out", tmp_path / "o"]
        )
        assert rc == 0
        captured = capsys.readouterr()
        assert "line errors: 1" in captured.out

    def test_all_bad_input_is_data_error(self, tmp_path):
        bad = tmp_path / "junk.srt"
        bad.write_text("not a subtitle file at all", encoding="utf-8")
        rc = run_cli(
            ["ingest", bad, "--video-id", "v", "--duration-s", "10", "--out", tmp_path / "o"]
        )
        assert rc == 2

    def test_detections_derive_det_channel(self, tmp_path):
        out = tmp_path / "store"
        rc = run_cli(
            [
                "ingest",
                DEMO / "detections.jsonl",
                "--video-id",
                "v",
                "--duration-s",
                "120",
                "--out",
                out,
            ]
        )
        assert rc == 0
        assert (out / "det.jsonl").exists()
        assert (out / "detections.jsonl").exists()


class TestBuild:
    def test_outputs_exist(self, built_index):
        for name in ("asr.bm25", "asr.vec", "ocr.bm25", "ocr.vec", "frames.vec", "video.json"):
            assert (built_index / name).exists(), name

    def test_deterministic_rebuild_byte_identical(self, tmp_path, built_index):
        second = tmp_path / "index2"
        rc = run_cli(
            [
                "build",
                "--store",
                built_index.parent / "store",
                "--out",
                second,
                "--config",
                DEMO / "config.json",
            ]
        )
        assert rc == 0
        for name in ("asr.bm25", "asr.vec", "ocr.bm25", "ocr.vec", "frames.vec"):
            a = hashlib.sha256((built_index / name).read_bytes()).hexdigest()
            b = hashlib.sha256((second / name).read_bytes()).hexdigest()
            assert a == b, name

    def test_missing_store_is_data_error(self, tmp_path):
        rc = run_cli(["build", "--store", tmp_path / "nope", "--out", tmp_path / "o"])
        assert rc == 2

    def test_file_provider_missing_embeddings_named(self, tmp_path, built_index):
        import numpy as np

        from temporag.vectorindex import save_vectors

        pre = tmp_path / "pre.vec"
        save_vectors(str(pre), ["asr-000001"], [np.ones(16, dtype=np.float32)], 16)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps({"providers": {"embed": "file", "embeddings_file": str(pre)}}),
            encoding="utf-8",
        )
        rc = run_cli(
            [
                "build",
                "--store",
                built_index.parent / "store",
                "--out",
                tmp_path / "o2",
                "--config",
                cfg,
            ]
        )
        assert rc == 2


class TestAnswer:
    QUERY = "What does the sign near the marina office say?"

    def test_prints_answer_and_writes_trace(self, built_index, tmp_path, capsys):
        trace_path = tmp_path / "trace.json"
        rc = run_cli(
            [
                "answer",
                "--index",
                built_index,
                "--query",
                self.QUERY,
                "--config",
                DEMO / "config.json",
                "--trace",
                trace_path,
            ]
        )
        assert rc == 0
        answer = capsys.readouterr().out
        assert "MARINA OFFICE" in answer
        trace = json.loads(trace_path.read_text(encoding="utf-8"))
        assert trace["request"]["ocr"] == "sign near marina office"
        assert trace["anchors"]["t_semantic"] == 88.0

    def test_no_tw_flag_zeroes_lambdas_in_trace(self, built_index, tmp_path):
        trace_path = tmp_path / "trace.json"
        rc = run_cli(
            [
                "answer",
                "--index",
                built_index,
                "--query",
                self.QUERY,
                "--config",
                DEMO / "config.json",
                "--no-tw",
                "--trace",
                trace_path,
            ]
        )
        assert rc == 0
        trace = json.loads(trace_path.read_text(encoding="utf-8"))
        assert trace["lambdas"] == [0.0, 0.0, 0.0]

    def test_tau_one_empties_evidence(self, built_index, tmp_path):
        trace_path = tmp_path / "trace.json"
        rc = run_cli(
            [
                "answer",
                "--index",
                built_index,
                "--query",
                self.QUERY,
                "--config",
                DEMO / "config.json",
                "--tau",
                "1.0",
                "--trace",
                trace_path,
            ]
        )
        assert rc == 0
        trace = json.loads(trace_path.read_text(encoding="utf-8"))
        assert trace["channels"]["asr"] == [] and trace["channels"]["ocr"] == []

    def test_missing_index_is_data_error(self, tmp_path):
        rc = run_cli(["answer", "--index", tmp_path / "nope", "--query", "q"])
        assert rc == 2

    def test_json_output_mode(self, built_index, capsys):
        rc = run_cli(
            [
                "answer",
                "--index",
                built_index,
                "--query",
                self.QUERY,
                "--config",
                DEMO / "config.json",
                "--json",
            ]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert {"answer", "trace"} <= set(payload)


class TestEval:
    def test_default_spec_runs(self, tmp_path, capsys):
        out = tmp_path / "reports"
        rc = run_cli(["eval", "--seeds", "2", "--out", out])
        assert rc == 0
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert len(report["rows"]) == 2
        assert report["rows"][0]["recall_at_1"] == 1.0
        assert "recall_at_1" in capsys.readouterr().out

    def test_sweep_writes_monotone_tokens(self, tmp_path):
        out = tmp_path / "sweep"
        rc = run_cli(["eval", "--sweep-tau", "0,0.1,0.2,0.3,0.4,0.5,1.0", "--out", out])
        assert rc == 0
        payload = json.loads((out / "sweep.json").read_text(encoding="utf-8"))
        tokens = [row["aggregate"]["tokens_retained"]["mean"] for row in payload]
        assert all(a >= b for a, b in zip(tokens, tokens[1:]))
        assert tokens[-1] == 0

    def test_spec_file(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(
            json.dumps({"seed": 3, "duration_s": 200.0, "n_snippets": 80, "n_duplicates": 10}),
            encoding="utf-8",
        )
        rc = run_cli(["eval", "--spec", spec, "--seeds", "1", "--out", tmp_path / "r"])
        assert rc == 0

    def test_unknown_spec_key_is_usage_error(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"seed": 1, "wat": 2}), encoding="utf-8")
        rc = run_cli(["eval", "--spec", spec])
        assert rc == 1


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self):
        assert run_cli(["answer", "--nonsense"]) == 1

    def test_unknown_config_key_is_usage_error(self, tmp_path, built_index):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"mystery_knob": 1}), encoding="utf-8")
        rc = run_cli(["answer", "--index", built_index, "--query", "q", "--config", cfg])
        assert rc == 1

    def test_bad_lambda_flag(self, built_index):
        rc = run_cli(["answer", "--index", built_index, "--query", "q", "--lambda", "1,2"])
        assert rc == 1


def test_effective_config_echoed_to_stderr(built_index, capsys):
    rc = run_cli(
        [
            "answer",
            "--index",
            built_index,
            "--query",
            "What does the sign say?",
            "--config",
            DEMO / "config.json",
        ]
    )
    assert rc == 0
    assert "effective config:" in capsys.readouterr().err
