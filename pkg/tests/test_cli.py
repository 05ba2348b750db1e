import json
import os
import stat
import subprocess
import sys

import pytest

from vulnpipe.cli import main, parallel_map, run_pipeline, worker_count
from vulnpipe.cnn import TrainConfig
from vulnpipe.corpus import generate_synthetic, save_corpus
from vulnpipe.patchy_san import EncoderConfig


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "small.ndjson"
    save_corpus(generate_synthetic(20, seed=3), path)
    return path


class TestGenCorpus:
    def test_writes_requested_pairs(self, tmp_path):
        out = tmp_path / "c.ndjson"
        assert main(["gen-corpus", "--pairs", "4", "--seed", "1", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 8

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        main(["gen-corpus", "--pairs", "4", "--seed", "1", "--out", str(a)])
        main(["gen-corpus", "--pairs", "4", "--seed", "1", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestExportGraphs:
    def test_one_file_per_sample(self, small_corpus, tmp_path):
        out = tmp_path / "graphs"
        assert main(["export-graphs", "--corpus", str(small_corpus), "--format", "dot",
                     "--out", str(out)]) == 0
        assert len(list(out.glob("*.dot"))) == 40

    def test_json_format(self, small_corpus, tmp_path):
        out = tmp_path / "graphs"
        main(["export-graphs", "--corpus", str(small_corpus), "--format", "json",
              "--out", str(out)])
        doc = json.loads(next(out.glob("*.json")).read_text())
        assert set(doc) == {"nodes", "edges"}

    def test_worked_example_dot_matches_golden(self, tmp_path, fig1_source, golden_dir):
        from vulnpipe.corpus import Sample

        corpus = tmp_path / "fig1.ndjson"
        save_corpus([Sample(id="fig1", code=fig1_source, label="secure", vuln_type=None)], corpus)
        out = tmp_path / "graphs"
        assert main(["export-graphs", "--corpus", str(corpus), "--format", "dot",
                     "--out", str(out)]) == 0
        assert (out / "fig1.dot").read_bytes() == (golden_dir / "fig1_cpg.dot").read_bytes()

    def test_empty_corpus_zero_files_exit_zero(self, tmp_path):
        empty = tmp_path / "empty.ndjson"
        empty.write_text("")
        out = tmp_path / "graphs"
        assert main(["export-graphs", "--corpus", str(empty), "--out", str(out)]) == 0
        assert list(out.glob("*")) == []

    def test_unwritable_directory_exit_3(self, small_corpus, tmp_path):
        if os.geteuid() == 0:
            pytest.skip("root bypasses permission bits")
        locked = tmp_path / "locked"
        locked.mkdir()
        locked.chmod(stat.S_IRUSR | stat.S_IXUSR)
        rc = main(["export-graphs", "--corpus", str(small_corpus),
                   "--out", str(locked / "sub")])
        assert rc == 3

    def test_io_error_via_file_as_directory(self, small_corpus, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a dir")
        rc = main(["export-graphs", "--corpus", str(small_corpus), "--out", str(blocker)])
        assert rc == 3


class TestTrainEvalCompare:
    def test_cnn_and_svm_runs_then_compare(self, small_corpus, tmp_path):
        cnn_dir = tmp_path / "cnn"
        svm_dir = tmp_path / "svm"
        assert main(["train", "--corpus", str(small_corpus), "--backend", "cnn",
                     "--seed", "5", "--out", str(cnn_dir)]) == 0
        assert main(["train", "--corpus", str(small_corpus), "--backend", "wl-svm",
                     "--seed", "5", "--out", str(svm_dir)]) == 0
        for d, model_file in ((cnn_dir, "checkpoint.json"), (svm_dir, "svm_model.json")):
            for name in ("report.json", "report.txt", "split.json", "run_config.json", model_file):
                assert (d / name).exists(), name
        assert main(["compare", str(cnn_dir / "report.json"), str(svm_dir / "report.json")]) == 0

    def test_compare_mismatched_splits_exit_2(self, small_corpus, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        main(["train", "--corpus", str(small_corpus), "--backend", "wl-svm",
              "--seed", "1", "--out", str(a)])
        main(["train", "--corpus", str(small_corpus), "--backend", "wl-svm",
              "--seed", "2", "--out", str(b)])
        assert main(["compare", str(a / "report.json"), str(b / "report.json")]) == 2

    def test_eval_reproduces_training_counts(self, small_corpus, tmp_path):
        for backend in ("cnn", "wl-svm"):
            out = tmp_path / f"run_{backend}"
            main(["train", "--corpus", str(small_corpus), "--backend", backend,
                  "--seed", "5", "--out", str(out)])
            eval_json = tmp_path / f"eval_{backend}.json"
            assert main(["eval", "--model", str(out), "--corpus", str(small_corpus),
                         "--out", str(eval_json)]) == 0
            trained = json.loads((out / "report.json").read_text())
            evaled = json.loads(eval_json.read_text())
            assert evaled["counts"] == trained["counts"]

    def test_unparseable_corpus_exit_2_names_line(self, tmp_path, capsys):
        rec = generate_synthetic(1, seed=0)[0].to_record()
        bad = dict(rec, id="x", code="int f( {")
        path = tmp_path / "bad.ndjson"
        path.write_text(json.dumps(rec) + "\n" + json.dumps(bad) + "\n")
        rc = main(["train", "--corpus", str(path), "--backend", "wl-svm",
                   "--seed", "1", "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "line 2" in capsys.readouterr().err

    def test_missing_config_file_exit_2(self, small_corpus, tmp_path):
        rc = main(["train", "--corpus", str(small_corpus), "--config",
                   str(tmp_path / "nope.json"), "--out", str(tmp_path / "out")])
        assert rc in (2, 3)  # surfaced as config or I/O error, never a crash

    def test_config_file_applies(self, small_corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "encoder": {"w": 16, "k": 4, "s": 1, "h_rank": 1, "d": 27},
            "train": {"max_epochs": 3, "patience": 3, "batch_size": 8},
            "kernel": {"h": 2, "C": 0.5, "normalized": True},
        }))
        out = tmp_path / "out"
        assert main(["train", "--corpus", str(small_corpus), "--backend", "cnn",
                     "--seed", "5", "--config", str(cfg), "--out", str(out)]) == 0
        stored = json.loads((out / "run_config.json").read_text())
        assert stored["encoder"]["w"] == 16
        assert stored["train"]["max_epochs"] == 3
        hist = json.loads((out / "history.json").read_text())
        assert len(hist) <= 3

    def test_degenerate_hard_fail_exit_4(self, tmp_path):
        # all-insecure corpus: keep only insecure halves of pairs
        samples = [s for s in generate_synthetic(12, seed=6) if s.label == "insecure"]
        for s in samples:
            s.pair_id = None
        path = tmp_path / "one_class.ndjson"
        save_corpus(samples, path)
        rc = main(["train", "--corpus", str(path), "--backend", "wl-svm", "--seed", "1",
                   "--out", str(tmp_path / "out"), "--fail-on-degenerate"])
        assert rc == 4

    def test_report_bytes_reproducible(self, small_corpus, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        main(["train", "--corpus", str(small_corpus), "--backend", "cnn",
              "--seed", "9", "--out", str(a)])
        main(["train", "--corpus", str(small_corpus), "--backend", "cnn",
              "--seed", "9", "--out", str(b)])
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


class TestParallelism:
    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("VULN_PIPE_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("VULN_PIPE_THREADS", "0")
        assert worker_count() == 1

    def test_parallel_map_preserves_order(self, monkeypatch):
        monkeypatch.setenv("VULN_PIPE_THREADS", "4")
        assert parallel_map(lambda x: x * x, range(50)) == [x * x for x in range(50)]

    def test_thread_cap_does_not_change_pipeline_output(self, small_corpus, tmp_path, monkeypatch):
        reports = []
        for threads in ("1", "4"):
            monkeypatch.setenv("VULN_PIPE_THREADS", threads)
            out = tmp_path / f"t{threads}"
            run_pipeline(small_corpus, EncoderConfig(), TrainConfig(max_epochs=3, patience=3),
                         "wl_svm", 5, out)
            reports.append((out / "report.json").read_bytes())
        assert reports[0] == reports[1]


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        out = tmp_path / "c.ndjson"
        proc = subprocess.run(
            [sys.executable, "-m", "vulnpipe.cli", "gen-corpus", "--pairs", "2",
             "--seed", "0", "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert out.exists()
