"""Classification metrics, report assembly, and report comparison.

The positive class for precision/recall is "insecure" (the security-relevant
direction); reports also carry the secure row (roles swapped) and a
macro-averaged row, mirroring the Secure / Insecure / Overall layout.

Report JSON is fully determined by (corpus bytes, configs, seed): wall-clock
runtime appears only in the rendered text, never in the JSON, so identical
runs produce identical report files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass


class SplitMismatch(Exception):
    """Two reports were produced from different split manifests."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionCounts":
        """Counts with the negative class treated as positive."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


@dataclass(frozen=True)
class MetricValues:
    precision: float
    recall: float
    f1: float
    accuracy: float
    degenerate: tuple[str, ...] = ()  # which rates hit a 0/0 convention


def metrics(counts: ConfusionCounts) -> MetricValues:
    """precision, recall, F1, accuracy with explicit 0/0 -> 0 conventions."""
    degenerate: list[str] = []
    if counts.tp + counts.fp > 0:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if counts.tp + counts.fn > 0:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    if counts.total > 0:
        accuracy = (counts.tp + counts.tn) / counts.total
    else:
        accuracy = 0.0
        degenerate.append("accuracy")
    return MetricValues(precision, recall, f1, accuracy, tuple(degenerate))


def config_digest(payload: dict) -> str:
    """Stable sha256 of a JSON-serializable config blob."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class Report:
    model: str
    seed: int
    config_digest: str
    split_digest: str
    counts: ConfusionCounts
    split_sizes: dict
    runtime_seconds: float = 0.0  # text-only; never serialized to JSON

    def rows(self) -> dict[str, MetricValues]:
        insecure = metrics(self.counts)
        secure = metrics(self.counts.swapped())
        return {"secure": secure, "insecure": insecure}

    def macro(self) -> dict[str, float]:
        rows = self.rows()
        return {
            "precision": (rows["secure"].precision + rows["insecure"].precision) / 2.0,
            "recall": (rows["secure"].recall + rows["insecure"].recall) / 2.0,
            "f1": (rows["secure"].f1 + rows["insecure"].f1) / 2.0,
        }

    def accuracy(self) -> float:
        return metrics(self.counts).accuracy

    def to_dict(self) -> dict:
        rows = self.rows()
        return {
            "model": self.model,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "split_digest": self.split_digest,
            "split_sizes": self.split_sizes,
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "fn": self.counts.fn,
                "tn": self.counts.tn,
            },
            "per_class": {
                name: {
                    "precision": row.precision,
                    "recall": row.recall,
                    "f1": row.f1,
                    "degenerate": list(row.degenerate),
                }
                for name, row in rows.items()
            },
            "macro": self.macro(),
            "accuracy": self.accuracy(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def report_from_dict(doc: dict) -> Report:
    c = doc["counts"]
    return Report(
        model=doc["model"],
        seed=doc["seed"],
        config_digest=doc["config_digest"],
        split_digest=doc["split_digest"],
        counts=ConfusionCounts(c["tp"], c["fp"], c["fn"], c["tn"]),
        split_sizes=dict(doc.get("split_sizes", {})),
    )


def render_report_text(report: Report) -> str:
    rows = report.rows()
    macro = report.macro()
    lines = [
        f"model: {report.model}   seed: {report.seed}",
        f"config: {report.config_digest[:12]}   split: {report.split_digest[:12]}",
        "",
        f"{'':20s}{'Precision':>10s}{'Recall':>10s}{'F1-score':>10s}",
        f"{'Secure functions':20s}{rows['secure'].precision:>10.4f}{rows['secure'].recall:>10.4f}{rows['secure'].f1:>10.4f}",
        f"{'Insecure functions':20s}{rows['insecure'].precision:>10.4f}{rows['insecure'].recall:>10.4f}{rows['insecure'].f1:>10.4f}",
        f"{'Overall (macro)':20s}{macro['precision']:>10.4f}{macro['recall']:>10.4f}{macro['f1']:>10.4f}",
        "",
        f"accuracy: {report.accuracy():.4f}",
        f"counts: tp={report.counts.tp} fp={report.counts.fp} fn={report.counts.fn} tn={report.counts.tn}",
        f"runtime: {report.runtime_seconds:.2f}s",
    ]
    return "\n".join(lines) + "\n"


_DELTA_METRICS = (
    ("accuracy", lambda d: d["accuracy"]),
    ("secure.precision", lambda d: d["per_class"]["secure"]["precision"]),
    ("secure.recall", lambda d: d["per_class"]["secure"]["recall"]),
    ("secure.f1", lambda d: d["per_class"]["secure"]["f1"]),
    ("insecure.precision", lambda d: d["per_class"]["insecure"]["precision"]),
    ("insecure.recall", lambda d: d["per_class"]["insecure"]["recall"]),
    ("insecure.f1", lambda d: d["per_class"]["insecure"]["f1"]),
    ("macro.f1", lambda d: d["macro"]["f1"]),
)


def compare(report_a: dict, report_b: dict) -> dict[str, float]:
    """Signed metric deltas (a - b); refuses reports from different splits."""
    if report_a["split_digest"] != report_b["split_digest"]:
        raise SplitMismatch(
            f"split {report_a['split_digest'][:12]} vs {report_b['split_digest'][:12]}"
        )
    return {name: get(report_a) - get(report_b) for name, get in _DELTA_METRICS}


def render_compare_text(report_a: dict, report_b: dict, deltas: dict[str, float]) -> str:
    lines = [
        f"{'metric':20s}{report_a['model']:>12s}{report_b['model']:>12s}{'delta':>12s}",
    ]
    for name, get in _DELTA_METRICS:
        lines.append(
            f"{name:20s}{get(report_a):>12.4f}{get(report_b):>12.4f}{deltas[name]:>+12.4f}"
        )
    return "\n".join(lines) + "\n"
