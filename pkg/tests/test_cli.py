"""Every subcommand end-to-end against the mock backend, plus exit-code contract."""

from __future__ import annotations

import json

import pytest

from conftest import build_problems, build_rules
from test_datagen import build_datagen_rules, build_reward_rules, build_seeds
from xlmath.cli import main
from xlmath.core import save_dataset


@pytest.fixture()
def workdir(tmp_path):
    dataset = tmp_path / "dataset.jsonl"
    save_dataset(build_problems(), dataset)
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps(build_rules()), encoding="utf-8")
    return tmp_path


def _run(argv) -> int:
    return main([str(a) for a in argv])


class TestEvalRun:
    def test_e2e_run_prints_summary_and_exits_zero(self, workdir, capsys):
        out = workdir / "run-e2e"
        code = _run(
            [
                "eval", "run",
                "--dataset", workdir / "dataset.jsonl",
                "--mode", "e2e",
                "--backend", f"mock:{workdir / 'rules.json'}",
                "--out", out,
            ]
        )
        captured = capsys.readouterr()
        assert code == 0
        assert "GSM8K" in captured.out and "Avg." in captured.out
        assert "76.00" in captured.out
        for name in ("manifest.json", "records.jsonl", "summary.json", "summary.txt"):
            assert (out / name).exists()

    def test_msi_run_writes_traces(self, workdir):
        out = workdir / "run-msi"
        code = _run(
            [
                "eval", "run",
                "--dataset", workdir / "dataset.jsonl",
                "--mode", "msi",
                "--backend", f"mock:{workdir / 'rules.json'}",
                "--out", out,
            ]
        )
        assert code == 0
        traces = (out / "traces.jsonl").read_text().splitlines()
        assert len(traces) == 50

    def test_validation_failure_exits_three(self, workdir, capsys):
        from xlmath.core import BilingualProblem, GoldAnswer

        bad = workdir / "bad.jsonl"
        problem = BilingualProblem(
            id="dup",
            subset="GSM8K",
            question_ko="질문",
            question_en="question",
            answer=GoldAnswer.numeric(1),
            source_direction="en_to_ko",
        )
        save_dataset([problem, problem], bad)
        code = _run(
            [
                "eval", "run",
                "--dataset", bad,
                "--mode", "e2e",
                "--backend", f"mock:{workdir / 'rules.json'}",
                "--out", workdir / "nope",
            ]
        )
        assert code == 3
        assert "duplicate-id" in capsys.readouterr().out

    def test_missing_dataset_is_runtime_failure(self, workdir, capsys):
        code = _run(
            [
                "eval", "run",
                "--dataset", workdir / "missing.jsonl",
                "--mode", "e2e",
                "--backend", f"mock:{workdir / 'rules.json'}",
                "--out", workdir / "nope",
            ]
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self, workdir, capsys):
        code = _run(["eval", "run", "--nonsense", "x"])
        assert code == 1

    def test_unknown_mode_is_usage_error(self, workdir):
        code = _run(
            [
                "eval", "run",
                "--dataset", workdir / "dataset.jsonl",
                "--mode", "e2k",
                "--backend", f"mock:{workdir / 'rules.json'}",
                "--out", workdir / "nope",
            ]
        )
        assert code == 1


class TestEvalCompare:
    def test_delta_table_against_baseline(self, workdir, capsys):
        for mode in ("k2k", "k2e", "e2e"):
            assert (
                _run(
                    [
                        "eval", "run",
                        "--dataset", workdir / "dataset.jsonl",
                        "--mode", mode,
                        "--backend", f"mock:{workdir / 'rules.json'}",
                        "--out", workdir / f"run-{mode}",
                    ]
                )
                == 0
            )
        capsys.readouterr()
        code = _run(
            [
                "eval", "compare",
                "--baseline", workdir / "run-k2k",
                workdir / "run-k2e",
                workdir / "run-e2e",
                "--out", workdir / "comparison.json",
            ]
        )
        captured = capsys.readouterr()
        assert code == 0
        assert "(+4.00)" in captured.out
        assert "(+36.00)" in captured.out
        assert "Average delta: +20.00" in captured.out
        persisted = json.loads((workdir / "comparison.json").read_text())
        assert persisted["average_delta"] == 20.0


class TestDatagenCli:
    def test_run_emits_training_file_and_counts(self, tmp_path, capsys):
        seeds_path = tmp_path / "seeds.jsonl"
        with open(seeds_path, "w", encoding="utf-8") as handle:
            for seed in build_seeds():
                handle.write(
                    json.dumps(
                        {
                            "question_en": seed.question_en,
                            "solution_en": seed.solution_en,
                            "origin": seed.origin,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        rules_path = tmp_path / "dg-rules.json"
        rules_path.write_text(json.dumps(build_datagen_rules()), encoding="utf-8")
        reward_path = tmp_path / "rm-rules.json"
        reward_path.write_text(json.dumps(build_reward_rules()), encoding="utf-8")
        out = tmp_path / "dg-out"
        code = _run(
            [
                "datagen", "run",
                "--seeds", seeds_path,
                "--backend", f"mock:{rules_path}",
                "--reward", f"mock:{reward_path}",
                "--policy", "high",
                "--out", out,
            ]
        )
        assert code == 0
        counts = json.loads(capsys.readouterr().out.strip())
        assert counts["written"] == 39
        assert counts["input"] == counts["emitted"] + counts["discarded"] + counts["skipped"]
        assert (out / "training.jsonl").exists()
        assert (out / "training.jsonl.manifest.json").exists()
        assert (out / "discards.jsonl").exists()


def _judge_rules_file(tmp_path):
    rules = [
        {
            "contains": ["[The Start of Assistant A's Answer]\nSTRONG"],
            "response": "A explains better. [[A]]",
        },
        {"contains": ["[User Question]"], "response": "[[B]]"},
    ]
    path = tmp_path / "judge.json"
    path.write_text(json.dumps(rules), encoding="utf-8")
    return path


class TestArenaCli:
    def _answers(self, tmp_path):
        a_path = tmp_path / "a.jsonl"
        b_path = tmp_path / "b.jsonl"
        with open(a_path, "w") as fa, open(b_path, "w") as fb:
            for i in range(30):
                fa.write(
                    json.dumps(
                        {"question_id": f"q{i:02d}", "question": f"Q{i}", "answer": f"STRONG {i}"}
                    )
                    + "\n"
                )
                fb.write(
                    json.dumps(
                        {"question_id": f"q{i:02d}", "question": f"Q{i}", "answer": f"weak {i}"}
                    )
                    + "\n"
                )
        return a_path, b_path

    def test_same_seed_twice_is_byte_identical(self, tmp_path, capsys):
        a_path, b_path = self._answers(tmp_path)
        judge = _judge_rules_file(tmp_path)
        blobs = []
        for attempt in range(2):
            out = tmp_path / f"arena{attempt}"
            # seed accepted before or after the subcommand
            seed_args = ["--seed", "7"]
            argv = (seed_args if attempt == 0 else []) + [
                "arena", "run",
                "--a", a_path,
                "--b", b_path,
                "--judge", f"mock:{judge}",
                "--iters", "200",
                "--k", "4",
                "--out", out,
            ] + ([] if attempt == 0 else seed_args)
            assert _run(argv) == 0
            blobs.append((out / "arena.json").read_bytes())
        assert blobs[0] == blobs[1]
        stdout = capsys.readouterr().out
        assert "model_a" in stdout and "win_rate=100.00%" in stdout

    def test_summaries_join_accuracy_column(self, tmp_path, capsys):
        a_path, b_path = self._answers(tmp_path)
        judge = _judge_rules_file(tmp_path)
        summary = tmp_path / "summary.json"
        summary.write_text(json.dumps({"overall": 50.43, "l_model": 7854.0}))
        code = _run(
            [
                "arena", "run",
                "--a", a_path,
                "--b", b_path,
                "--judge", f"mock:{judge}",
                "--iters", "50",
                "--out", tmp_path / "arena-joined",
                "--summary-a", summary,
            ]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "accuracy=50.43" in stdout and "tokens=7854" in stdout


class TestContaminationCli:
    def test_scan_clean_corpus_reports_no_matches(self, tmp_path, capsys):
        patterns = tmp_path / "patterns.jsonl"
        with open(patterns, "w") as handle:
            handle.write(json.dumps({"id": "k1", "text": "a" * 40}) + "\n")
        corpus = tmp_path / "corpus.jsonl"
        with open(corpus, "w") as handle:
            handle.write(json.dumps({"id": "d1", "url": "https://x", "text": "b" * 4096}) + "\n")
        report_path = tmp_path / "report.json"
        code = _run(
            [
                "contamination", "scan",
                "--patterns", patterns,
                "--corpus", corpus,
                "--report", report_path,
            ]
        )
        assert code == 0
        assert "no matches found" in capsys.readouterr().out
        report = json.loads(report_path.read_text())
        assert report["total_hits"] == 0
        assert report["documents_scanned"] == 1

    def test_scan_dataset_shaped_patterns_and_planted_hit(self, tmp_path, capsys):
        dataset = tmp_path / "ds.jsonl"
        save_dataset(build_problems()[:3], dataset)
        corpus_dir = tmp_path / "corpus"
        corpus_dir.mkdir()
        planted = build_problems()[0].question_en
        (corpus_dir / "doc.txt").write_text(f"prefix {planted} suffix", encoding="utf-8")
        report_path = tmp_path / "report.json"
        code = _run(
            [
                "contamination", "scan",
                "--patterns", dataset,
                "--corpus", corpus_dir,
                "--min-length", "8",
                "--report", report_path,
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["total_hits"] == 1
        assert report["hits"][0]["occurrences"][0]["offset"] == len("prefix ")


class TestCurateServe:
    def test_serve_answers_http(self, tmp_path):
        import socket
        import subprocess
        import sys
        import time

        import httpx

        with socket.socket() as sock:
            sock.bind(("127.0.0.1", 0))
            port = sock.getsockname()[1]
        db = tmp_path / "serve.db"
        process = subprocess.Popen(
            [
                sys.executable, "-m", "xlmath.cli",
                "curate", "serve", "--db", str(db), "--port", str(port),
            ],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
        try:
            deadline = time.time() + 15
            stats = None
            while time.time() < deadline:
                try:
                    stats = httpx.get(
                        f"http://127.0.0.1:{port}/api/stats", timeout=1.0
                    ).json()
                    break
                except httpx.HTTPError:
                    time.sleep(0.1)
            assert stats == {
                "pending": 0,
                "accepted": 0,
                "edited": 0,
                "rejected": 0,
                "leased": 0,
                "total": 0,
            }
        finally:
            process.terminate()
            process.wait(timeout=10)


class TestCurateCli:
    def test_enqueue_then_export(self, tmp_path, capsys):
        items_path = tmp_path / "items.jsonl"
        with open(items_path, "w", encoding="utf-8") as handle:
            for i in range(3):
                handle.write(
                    json.dumps(
                        {
                            "item_id": f"r{i}",
                            "kind": "ocr",
                            "source_ref": f"img{i}.png",
                            "candidate_text": f"text {i}",
                        }
                    )
                    + "\n"
                )
        db = tmp_path / "curate.db"
        assert _run(["curate", "enqueue", "--db", db, "--file", items_path]) == 0
        assert json.loads(capsys.readouterr().out)["enqueued"] == 3

        # decide one item through the queue API, then export
        from xlmath.curation import CurationQueue

        queue = CurationQueue(db)
        queue.next_pending("r")
        queue.submit_decision("r0", "accept", reviewer="r")
        queue.close()

        out = tmp_path / "export.jsonl"
        assert _run(["curate", "export", "--db", db, "--out", out]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["item_id"] == "r0"
