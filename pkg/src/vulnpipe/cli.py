"""Command-line entry point and end-to-end pipeline orchestration.

Subcommands:

* ``gen-corpus --pairs N --seed S --out FILE`` - synthetic pair corpus
* ``export-graphs --corpus FILE --format dot|json --out DIR`` - CPG dumps
* ``train --corpus FILE --backend cnn|wl-svm --seed S [--config FILE] --out DIR``
* ``eval --model DIR --corpus FILE [--out FILE]``
* ``compare A.json B.json``

Exit codes: 0 success, 2 corpus/config error, 3 I/O error, 4 degenerate
training data when --fail-on-degenerate is set.

``VULN_PIPE_THREADS`` caps worker parallelism for graph building and
encoding (default: machine cores); parallelism never changes outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import cnn as cnn_mod
from . import wl_svm as wl_mod
from .cnn import CheckpointError, DegenerateDataWarning, TrainConfig
from .corpus import CorpusError, CorpusSplit, Sample, SplitError, generate_synthetic, load_corpus, save_corpus, split
from .evaluation import (
    ConfusionCounts,
    Report,
    SplitMismatch,
    compare,
    config_digest,
    render_compare_text,
    render_report_text,
)
from .frontend import parse_source
from .graphs import build_cpg, cpg_to_dot, cpg_to_json
from .patchy_san import ConfigError, EncoderConfig, build_tensor

N_FILTERS = 16

DEFAULT_KERNEL_CFG = {"h": 3, "C": 1.0, "normalized": True}
DEFAULT_RATIOS = (0.70, 0.15, 0.15)


class DegenerateDataError(Exception):
    """Raised instead of a warning when --fail-on-degenerate is set."""


def worker_count() -> int:
    env = os.environ.get("VULN_PIPE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """Order-preserving map over a thread pool capped by VULN_PIPE_THREADS."""
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _label_of(sample: Sample) -> int:
    return 1 if sample.label == "insecure" else 0


def _counts_from_predictions(pred: list[int], truth: list[int]) -> ConfusionCounts:
    tp = sum(1 for p, t in zip(pred, truth) if p == 1 and t == 1)
    fp = sum(1 for p, t in zip(pred, truth) if p == 1 and t == 0)
    fn = sum(1 for p, t in zip(pred, truth) if p == 0 and t == 1)
    tn = sum(1 for p, t in zip(pred, truth) if p == 0 and t == 0)
    return ConfusionCounts(tp, fp, fn, tn)


def _check_degenerate(name: str, labels: list[int], hard_fail: bool):
    if len(set(labels)) < 2:
        if hard_fail:
            raise DegenerateDataError(f"{name} split contains a single class")
        warnings.warn(f"{name} split contains a single class", DegenerateDataWarning)


def _full_config_payload(backend: str, encoder: EncoderConfig, train_cfg: TrainConfig,
                         kernel_cfg: dict, seed: int, ratios) -> dict:
    return {
        "backend": backend,
        "encoder": encoder.to_dict(),
        "train": train_cfg.to_dict(),
        "kernel": kernel_cfg,
        "seed": seed,
        "ratios": list(ratios),
    }


def run_pipeline(
    corpus_path,
    encoder: EncoderConfig,
    train_cfg: TrainConfig,
    backend: str,
    seed: int,
    out_dir,
    kernel_cfg: dict | None = None,
    ratios=DEFAULT_RATIOS,
    hard_fail: bool = False,
) -> Report:
    """Deterministic parse -> graph -> encode -> train -> evaluate run.

    Writes split manifest, report (JSON + text), resolved config, and the
    model checkpoint into out_dir, and returns the Report.  The run seed
    drives split shuffling, parameter init, and batch shuffling.
    """
    if backend not in ("cnn", "wl_svm"):
        raise ConfigError(f"unknown backend {backend!r}")
    kernel_cfg = dict(DEFAULT_KERNEL_CFG if kernel_cfg is None else kernel_cfg)
    started = time.perf_counter()

    samples = load_corpus(corpus_path)
    if not samples:
        raise CorpusError(0, "corpus is empty")
    sp = split(samples, seed, ratios)
    split_dig = config_digest(json.loads(sp.to_json()))
    cfg_payload = _full_config_payload(backend, encoder, train_cfg, kernel_cfg, seed, ratios)
    cfg_dig = config_digest(cfg_payload)

    by_id = {s.id: s for s in samples}
    graphs = dict(zip(
        (s.id for s in samples),
        parallel_map(lambda s: build_cpg(parse_source(s.code)), samples),
    ))

    truth = {sid: _label_of(by_id[sid]) for sid in by_id}
    _check_degenerate("training", [truth[i] for i in sp.train], hard_fail)
    _check_degenerate("validation", [truth[i] for i in sp.validation], hard_fail)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if backend == "cnn":
        tensors = dict(zip(
            graphs.keys(),
            parallel_map(lambda sid: build_tensor(graphs[sid], encoder), graphs.keys()),
        ))

        def stack(ids):
            x = np.stack([tensors[i].data for i in ids])
            y = np.array([truth[i] for i in ids], dtype=np.int64)
            return x, y

        train_cfg = TrainConfig.from_dict({**train_cfg.to_dict(), "seed": seed})
        params0 = cnn_mod.init_params(encoder, n_filters=N_FILTERS, n_classes=2, seed=seed)
        x_tr, y_tr = stack(sp.train)
        x_va, y_va = stack(sp.validation)
        best, history = cnn_mod.train(params0, (x_tr, y_tr), (x_va, y_va), train_cfg)
        x_te, _ = stack(sp.test)
        pred = [int(v) for v in cnn_mod.predict_batch(best, x_te)]
        (out / "checkpoint.json").write_text(cnn_mod.checkpoint_to_json(best, encoder))
        (out / "history.json").write_text(json.dumps(
            [{"epoch": h.epoch, "train_loss": h.train_loss, "val_loss": h.val_loss} for h in history],
            indent=2,
        ) + "\n")
    else:
        table = wl_mod.LabelTable()
        hists = {
            sid: wl_mod.wl_relabel(graphs[sid], kernel_cfg["h"], table)
            for sid in (s.id for s in samples)
        }
        train_hists = [hists[i] for i in sp.train]
        K = wl_mod.gram_from_histograms(train_hists, normalized=kernel_cfg["normalized"])
        y_pm = [1 if truth[i] == 1 else -1 for i in sp.train]
        model = wl_mod.train_svm(
            K, y_pm, C=kernel_cfg["C"], h=kernel_cfg["h"], normalized=kernel_cfg["normalized"]
        )
        pred = []
        for sid in sp.test:
            row = wl_mod.kernel_row(hists[sid], train_hists, normalized=kernel_cfg["normalized"])
            _, label = wl_mod.svm_predict(model, row)
            pred.append(1 if label == 1 else 0)
        (out / "svm_model.json").write_text(wl_mod.model_to_json(model, table))

    counts = _counts_from_predictions(pred, [truth[i] for i in sp.test])
    report = Report(
        model=backend,
        seed=seed,
        config_digest=cfg_dig,
        split_digest=split_dig,
        counts=counts,
        split_sizes={
            "train": len(sp.train),
            "validation": len(sp.validation),
            "test": len(sp.test),
        },
        runtime_seconds=time.perf_counter() - started,
    )

    (out / "split.json").write_text(sp.to_json())
    (out / "run_config.json").write_text(json.dumps(cfg_payload, indent=2) + "\n")
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(render_report_text(report))
    return report


def evaluate_model(model_dir, corpus_path) -> Report:
    """Re-evaluate a saved model on the test split recorded at training time.

    Expects the corpus file that the model was trained from (the manifest's
    ids must resolve; the wl-svm back-end additionally recomputes training
    histograms from it).
    """
    started = time.perf_counter()
    model_dir = Path(model_dir)
    cfg_payload = json.loads((model_dir / "run_config.json").read_text())
    sp = CorpusSplit.from_json((model_dir / "split.json").read_text())
    backend = cfg_payload["backend"]
    encoder = EncoderConfig.from_dict(cfg_payload["encoder"])
    kernel_cfg = cfg_payload["kernel"]

    samples = load_corpus(corpus_path)
    by_id = {s.id: s for s in samples}
    needed = list(sp.test) + (list(sp.train) if backend == "wl_svm" else [])
    missing = [sid for sid in needed if sid not in by_id]
    if missing:
        raise CorpusError(0, f"corpus is missing sample ids from the split manifest: {missing[:5]}")

    graphs = dict(zip(needed, parallel_map(
        lambda sid: build_cpg(parse_source(by_id[sid].code)), needed)))
    truth = [1 if by_id[sid].label == "insecure" else 0 for sid in sp.test]

    if backend == "cnn":
        params, _ = cnn_mod.checkpoint_from_json(
            (model_dir / "checkpoint.json").read_text(), expected=encoder
        )
        x_te = np.stack([build_tensor(graphs[sid], encoder).data for sid in sp.test])
        pred = [int(v) for v in cnn_mod.predict_batch(params, x_te)]
    else:
        model, table = wl_mod.model_from_json((model_dir / "svm_model.json").read_text())
        hists = {
            sid: wl_mod.wl_relabel(graphs[sid], kernel_cfg["h"], table)
            for sid in needed
        }
        train_hists = [hists[sid] for sid in sp.train]
        pred = []
        for sid in sp.test:
            row = wl_mod.kernel_row(hists[sid], train_hists, normalized=kernel_cfg["normalized"])
            _, label = wl_mod.svm_predict(model, row)
            pred.append(1 if label == 1 else 0)

    counts = _counts_from_predictions(pred, truth)
    return Report(
        model=backend,
        seed=cfg_payload["seed"],
        config_digest=config_digest(cfg_payload),
        split_digest=config_digest(json.loads(sp.to_json())),
        counts=counts,
        split_sizes={
            "train": len(sp.train),
            "validation": len(sp.validation),
            "test": len(sp.test),
        },
        runtime_seconds=time.perf_counter() - started,
    )


def export_graphs(corpus_path, out_dir, fmt: str) -> int:
    """Write one CPG file per sample; returns the file count."""
    if fmt not in ("dot", "json"):
        raise ConfigError(f"unknown export format {fmt!r}")
    samples = load_corpus(corpus_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    render = cpg_to_dot if fmt == "dot" else cpg_to_json
    texts = parallel_map(lambda s: render(build_cpg(parse_source(s.code))), samples)
    for sample, text in zip(samples, texts):
        (out / f"{sample.id}.{fmt}").write_text(text)
    return len(samples)


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def _load_config_file(path) -> tuple[EncoderConfig, TrainConfig, dict]:
    encoder = EncoderConfig()
    train_cfg = TrainConfig()
    kernel_cfg = dict(DEFAULT_KERNEL_CFG)
    if path:
        doc = json.loads(Path(path).read_text())
        if "encoder" in doc:
            encoder = EncoderConfig.from_dict(doc["encoder"])
        if "train" in doc:
            train_cfg = TrainConfig.from_dict(doc["train"])
        if "kernel" in doc:
            kernel_cfg.update(doc["kernel"])
    encoder.validate()
    train_cfg.validate()
    return encoder, train_cfg, kernel_cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vulnpipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corpus", help="generate a synthetic pair corpus")
    g.add_argument("--pairs", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    e = sub.add_parser("export-graphs", help="write one CPG file per sample")
    e.add_argument("--corpus", required=True)
    e.add_argument("--format", choices=("dot", "json"), default="dot")
    e.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a back-end and report test metrics")
    t.add_argument("--corpus", required=True)
    t.add_argument("--backend", choices=("cnn", "wl-svm"), default="cnn")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--config", default=None, help="JSON file with encoder/train/kernel settings")
    t.add_argument("--out", required=True)
    t.add_argument("--fail-on-degenerate", action="store_true")

    v = sub.add_parser("eval", help="evaluate a saved model on its test split")
    v.add_argument("--model", required=True, help="output directory of a train run")
    v.add_argument("--corpus", required=True)
    v.add_argument("--out", default=None, help="optional report JSON path")

    c = sub.add_parser("compare", help="delta table between two report JSONs")
    c.add_argument("report_a")
    c.add_argument("report_b")

    return parser


def _dispatch(args) -> int:
    if args.command == "gen-corpus":
        samples = generate_synthetic(args.pairs, args.seed)
        save_corpus(samples, args.out)
        print(f"wrote {len(samples)} samples ({args.pairs} pairs) to {args.out}")
        return 0
    if args.command == "export-graphs":
        count = export_graphs(args.corpus, args.out, args.format)
        print(f"wrote {count} {args.format} files to {args.out}")
        return 0
    if args.command == "train":
        encoder, train_cfg, kernel_cfg = _load_config_file(args.config)
        backend = args.backend.replace("-", "_")
        report = run_pipeline(
            args.corpus, encoder, train_cfg, backend, args.seed, args.out,
            kernel_cfg=kernel_cfg, hard_fail=args.fail_on_degenerate,
        )
        print(render_report_text(report), end="")
        return 0
    if args.command == "eval":
        report = evaluate_model(args.model, args.corpus)
        print(render_report_text(report), end="")
        if args.out:
            Path(args.out).write_text(report.to_json())
        return 0
    if args.command == "compare":
        doc_a = json.loads(Path(args.report_a).read_text())
        doc_b = json.loads(Path(args.report_b).read_text())
        deltas = compare(doc_a, doc_b)
        print(render_compare_text(doc_a, doc_b, deltas), end="")
        return 0
    raise AssertionError(f"unhandled command {args.command}")  # pragma: no cover


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (CorpusError, SplitError, ConfigError, CheckpointError, SplitMismatch,
            json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except DegenerateDataError as exc:
        print(f"degenerate training data: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
