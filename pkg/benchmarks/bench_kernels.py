"""Benchmark the numba kernel lane against the pure-numpy fallback.

Times the three hot paths on pipeline-realistic workloads:

* conv_forward / conv_param_grads at the default encoder shape (w=32, k=8,
  d=27, f=16) over a 420-sample training split;
* gram_from_csr over WL histograms of 600 synthetic functions;
* smo_solve on the 420x420 training gram.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from vulnpipe.corpus import generate_synthetic
from vulnpipe.frontend import parse_source
from vulnpipe.graphs import build_cpg
from vulnpipe.kernels import numba_backend, numpy_backend
from vulnpipe.patchy_san import EncoderConfig, build_tensor
from vulnpipe.wl_svm import LabelTable, _histograms_to_csr, wl_relabel


def timeit(fn, repeat):
    fn()  # warm-up (numba compilation happens here)
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()

    n_pairs = 50 if args.quick else 300
    repeat = 2 if args.quick else 3

    print(f"preparing workload ({n_pairs} pairs)...")
    samples = generate_synthetic(n_pairs, seed=7)
    graphs = [build_cpg(parse_source(s.code)) for s in samples]

    enc = EncoderConfig()
    tensors = np.stack([build_tensor(g, enc).data for g in graphs[: max(64, len(graphs) * 7 // 10)]])
    x2 = np.ascontiguousarray(tensors.reshape(len(tensors), enc.w, enc.k * enc.d))
    rng = np.random.default_rng(0)
    filt = rng.normal(size=(16, enc.k * enc.d))
    bias = rng.normal(size=16)
    gout = rng.normal(size=(len(tensors), enc.w, 16))

    table = LabelTable()
    hists = [wl_relabel(g, 3, table) for g in graphs]
    indptr, indices, counts, vocab = _histograms_to_csr(hists)

    n_train = max(16, len(graphs) * 7 // 10)
    K = numpy_backend.gram_from_csr(indptr[: n_train + 1], indices[: indptr[n_train]],
                                    counts[: indptr[n_train]], vocab)
    diag = np.sqrt(np.diag(K))
    K = K / np.outer(diag, diag)
    np.fill_diagonal(K, 1.0)
    y = np.array([1.0 if s.label == "insecure" else -1.0 for s in samples[:n_train]])

    cases = [
        ("conv_forward", lambda m: (lambda: m.conv_forward(x2, filt, bias))),
        ("conv_param_grads", lambda m: (lambda: m.conv_param_grads(x2, gout))),
        ("gram_from_csr", lambda m: (lambda: m.gram_from_csr(indptr, indices, counts, vocab))),
        ("smo_solve", lambda m: (lambda: m.smo_solve(K, y, 1.0, 1e-3, 10 * n_train * n_train))),
    ]

    print(f"{'kernel':20s}{'numba':>12s}{'numpy':>12s}{'speedup':>10s}")
    for name, make in cases:
        t_nb = timeit(make(numba_backend), repeat)
        t_np = timeit(make(numpy_backend), repeat)
        print(f"{name:20s}{t_nb*1e3:>10.2f}ms{t_np*1e3:>10.2f}ms{t_np/t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
