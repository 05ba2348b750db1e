"""Weisfeiler-Lehman subtree kernel over CPGs plus a soft-margin kernel SVM.

The WL refinement runs on the union multigraph treated as undirected; a
node's neighborhood multiset pairs each incident edge's kind with the
neighbor's current label.  Initial labels are the node kinds.  One
compression table is shared across a dataset so histograms stay comparable;
ids are handed out in first-seen order, which keeps everything reproducible
as long as graphs are processed in a fixed order.

The SVM trains on a precomputed gram matrix with a deterministic SMO sweep
(see kernels.smo_solve).  Positive class (+1) is "insecure".
"""

from __future__ import annotations

import json
import math
import threading
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import kernels
from .graphs import Cpg

KKT_TOL = 1e-3

EDGE_KIND_ORDER = {"AST": 0, "CFG": 1, "CDG": 2, "DDG": 3}


class DimensionMismatch(Exception):
    """Kernel row length does not match the model's training-set size."""


class LabelTable:
    """Shared WL label compression table (signature string -> dense id).

    Thread-safe so per-graph histogram jobs may share one instance.
    """

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._lock = threading.Lock()

    def intern(self, signature: str) -> int:
        with self._lock:
            got = self._ids.get(signature)
            if got is None:
                got = len(self._ids)
                self._ids[signature] = got
            return got

    def __len__(self) -> int:
        return len(self._ids)

    def to_dict(self) -> dict[str, int]:
        return dict(self._ids)

    @classmethod
    def from_dict(cls, d: dict[str, int]) -> "LabelTable":
        table = cls()
        for sig, lid in sorted(d.items(), key=lambda kv: kv[1]):
            table._ids[sig] = lid
        return table


@dataclass
class WlHistogram:
    """Per-iteration label counts, iterations 0..h."""

    counts: list[Counter]

    @property
    def h(self) -> int:
        return len(self.counts) - 1

    def total(self, iteration: int) -> int:
        return sum(self.counts[iteration].values())


def wl_relabel(cpg: Cpg, h: int, table: LabelTable) -> WlHistogram:
    """Run h rounds of WL refinement and collect per-iteration histograms."""
    if h < 0:
        raise ValueError("h must be >= 0")
    node_ids = sorted(n.id for n in cpg.nodes)
    labels = {nid: table.intern(f"k:{cpg.node(nid).kind}") for nid in node_ids}
    neighborhoods = {
        nid: sorted(
            (EDGE_KIND_ORDER[kind], other) for kind, other in cpg.undirected_neighbors(nid)
        )
        for nid in node_ids
    }
    counts = [Counter(labels.values())]
    for _ in range(h):
        new_labels = {}
        for nid in node_ids:
            pairs = sorted((ek, labels[other]) for ek, other in neighborhoods[nid])
            sig = f"r:{labels[nid]}|" + ",".join(f"{ek}:{lab}" for ek, lab in pairs)
            new_labels[nid] = table.intern(sig)
        labels = new_labels
        counts.append(Counter(labels.values()))
    return WlHistogram(counts)


def _raw_kernel(a: WlHistogram, b: WlHistogram) -> float:
    if a.h != b.h:
        raise ValueError("histograms computed with different h")
    total = 0
    for ca, cb in zip(a.counts, b.counts):
        small, big = (ca, cb) if len(ca) <= len(cb) else (cb, ca)
        for label, cnt in small.items():
            total += cnt * big.get(label, 0)
    return float(total)


def wl_kernel(a: WlHistogram, b: WlHistogram, normalized: bool = True) -> float:
    """Sum over iterations of count-vector dot products, optionally normalized."""
    raw = _raw_kernel(a, b)
    if not normalized:
        return raw
    if a.counts == b.counts:
        return 1.0
    kaa = _raw_kernel(a, a)
    kbb = _raw_kernel(b, b)
    if kaa == 0.0 or kbb == 0.0:
        return 0.0
    return raw / math.sqrt(kaa * kbb)


def _histograms_to_csr(hists: list[WlHistogram]) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Flatten per-iteration counters into one CSR matrix over (iter, label) columns.

    Column space: iteration-major so dot products decompose per iteration.
    """
    vocab = 0
    rows: list[list[tuple[int, float]]] = []
    width = max((len(h.counts) for h in hists), default=0)
    per_iter_span: list[int] = []
    for it in range(width):
        span = 0
        for h in hists:
            if it < len(h.counts) and h.counts[it]:
                span = max(span, max(h.counts[it]) + 1)
        per_iter_span.append(span)
    offsets = [0]
    for span in per_iter_span:
        offsets.append(offsets[-1] + span)
    vocab = offsets[-1]
    for h in hists:
        row: list[tuple[int, float]] = []
        for it, counter in enumerate(h.counts):
            base = offsets[it]
            for label, cnt in counter.items():
                row.append((base + label, float(cnt)))
        row.sort()
        rows.append(row)
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    nnz = sum(len(r) for r in rows)
    indices = np.zeros(nnz, dtype=np.int64)
    counts = np.zeros(nnz)
    pos = 0
    for i, row in enumerate(rows):
        for col, cnt in row:
            indices[pos] = col
            counts[pos] = cnt
            pos += 1
        indptr[i + 1] = pos
    return indptr, indices, counts, max(vocab, 1)


def gram_from_histograms(hists: list[WlHistogram], normalized: bool = True) -> np.ndarray:
    """Pairwise kernel matrix from precomputed histograms (shared table)."""
    if not hists:
        raise ValueError("empty histogram list")
    indptr, indices, counts, vocab = _histograms_to_csr(hists)
    K = kernels.gram_from_csr(indptr, indices, counts, vocab)
    if normalized:
        diag = np.sqrt(np.diag(K))
        diag[diag == 0.0] = 1.0
        K = K / np.outer(diag, diag)
        np.fill_diagonal(K, 1.0)
    return K


def gram_matrix(
    graphs: list[Cpg],
    h: int = 3,
    normalized: bool = True,
    table: LabelTable | None = None,
) -> tuple[np.ndarray, list[WlHistogram], LabelTable]:
    """Pairwise WL kernel matrix over a graph list.

    Returns the matrix together with the histograms and compression table so
    later kernel rows (prediction) can reuse them.
    """
    if not graphs:
        raise ValueError("empty graph list")
    if table is None:
        table = LabelTable()
    hists = [wl_relabel(g, h, table) for g in graphs]
    return gram_from_histograms(hists, normalized), hists, table


def kernel_row(
    hist: WlHistogram, train_hists: list[WlHistogram], normalized: bool = True
) -> np.ndarray:
    """Kernel values of one graph against a training list."""
    return np.array([wl_kernel(hist, t, normalized=normalized) for t in train_hists])


@dataclass
class SvmModel:
    support: list[int]
    coef: list[float]  # alpha_i * y_i per support index
    bias: float
    C: float
    h: int
    normalized: bool
    n_train: int
    converged: bool = True
    updates: int = 0

    def decision(self, row: np.ndarray) -> float:
        if len(row) != self.n_train:
            raise DimensionMismatch(f"kernel row has {len(row)} entries, model expects {self.n_train}")
        score = self.bias
        for idx, c in zip(self.support, self.coef):
            score += c * row[idx]
        return score


def train_svm(K: np.ndarray, labels: list[int] | np.ndarray, C: float = 1.0,
              h: int = 3, normalized: bool = True) -> SvmModel:
    """Deterministic SMO on a precomputed gram matrix.

    labels are +/-1 (insecure = +1).  A NonConvergence condition (pair-update
    cap 10*n^2 reached with KKT violations above 1e-3) is reported on the
    returned model, not raised.
    """
    y = np.asarray(labels, dtype=np.float64)
    n = len(y)
    if K.shape != (n, n):
        raise ValueError(f"gram matrix {K.shape} does not match {n} labels")
    if np.all(y == y[0]):
        # Degenerate one-class problem: the equality constraint pins all
        # alphas to zero, so express the constant answer through the bias.
        return SvmModel(support=[], coef=[], bias=float(y[0]), C=C, h=h,
                        normalized=normalized, n_train=n, converged=True, updates=0)
    alpha, bias, updates, converged = kernels.smo_solve(K, y, C, KKT_TOL, 10 * n * n)
    keep = np.nonzero(alpha > 1e-12)[0]
    return SvmModel(
        support=[int(i) for i in keep],
        coef=[float(alpha[i] * y[i]) for i in keep],
        bias=float(bias),
        C=C,
        h=h,
        normalized=normalized,
        n_train=n,
        converged=bool(converged),
        updates=int(updates),
    )


def svm_predict(model: SvmModel, row: np.ndarray) -> tuple[float, int]:
    """(score, label) for one kernel row; score 0 ties resolve to insecure (+1)."""
    score = model.decision(row)
    return score, (1 if score >= 0.0 else -1)


def model_to_json(model: SvmModel, table: LabelTable) -> str:
    doc = {
        "h": model.h,
        "normalized": model.normalized,
        "C": model.C,
        "support": [
            {"index": i, "coef": c} for i, c in zip(model.support, model.coef)
        ],
        "bias": model.bias,
        "n_train": model.n_train,
        "converged": model.converged,
        "updates": model.updates,
        "compression_table": table.to_dict(),
    }
    return json.dumps(doc, indent=2) + "\n"


def model_from_json(text: str) -> tuple[SvmModel, LabelTable]:
    doc = json.loads(text)
    model = SvmModel(
        support=[rec["index"] for rec in doc["support"]],
        coef=[rec["coef"] for rec in doc["support"]],
        bias=doc["bias"],
        C=doc["C"],
        h=doc["h"],
        normalized=doc["normalized"],
        n_train=doc["n_train"],
        converged=doc.get("converged", True),
        updates=doc.get("updates", 0),
    )
    return model, LabelTable.from_dict(doc["compression_table"])
