"""Pure-numpy implementations of the hot numeric kernels.

These are the fallback lane selected by ``VULN_PIPE_KERNELS=numpy``; the
numba lane mirrors each function with explicit loops.  Arithmetic is
ordered so both lanes agree to the last few ulps (and exactly, for the
integer-valued gram computation).
"""

from __future__ import annotations

import numpy as np


def conv_forward(x: np.ndarray, filt: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Per-field convolution pre-activations.

    x: (n, w, k*d) stacked receptive fields; filt: (f, k*d); bias: (f,).
    Returns (n, w, f) with out[m,t,j] = x[m,t,:].filt[j,:] + bias[j].
    """
    return x @ filt.T + bias


def conv_param_grads(x: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the conv parameters given pre-activation grads g (n, w, f).

    Reduces over fields within each sample before summing across the batch,
    so duplicating a sample doubles its contribution exactly.
    """
    per_sample = np.einsum("ntf,ntq->nfq", g, x)
    dfilt = per_sample.sum(axis=0)
    dbias = g.sum(axis=1).sum(axis=0)
    return dfilt, dbias


def gram_from_csr(indptr: np.ndarray, indices: np.ndarray, counts: np.ndarray, vocab: int) -> np.ndarray:
    """Pairwise dot products of sparse count vectors (CSR rows).

    Counts are small integers, so float64 sums are exact and the result is
    independent of summation order.  Works in dense vocabulary chunks to
    bound memory.
    """
    n = len(indptr) - 1
    K = np.zeros((n, n))
    chunk = 4096
    for lo in range(0, vocab, chunk):
        hi = min(lo + chunk, vocab)
        X = np.zeros((n, hi - lo))
        for i in range(n):
            s, e = indptr[i], indptr[i + 1]
            cols = indices[s:e]
            sel = (cols >= lo) & (cols < hi)
            X[i, cols[sel] - lo] = counts[s:e][sel]
        K += X @ X.T
    return K


def smo_solve(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    tol: float,
    max_updates: int,
) -> tuple[np.ndarray, float, int, bool]:
    """Pairwise coordinate ascent on the soft-margin SVM dual.

    Deterministic: sweeps indices in order, second choice by largest error
    difference (first index on ties).  Returns (alpha, bias, update count,
    converged flag).  The bias convention is f(x) = sum a_i y_i K_i + b.
    """
    n = len(y)
    alpha = np.zeros(n)
    b = 0.0
    E = -y.astype(np.float64)  # f(x_i) - y_i at alpha = 0, b = 0
    updates = 0
    eps = 1e-12

    def take_step(i: int, j: int) -> bool:
        nonlocal b, E, updates
        if i == j:
            return False
        ai, aj = alpha[i], alpha[j]
        yi, yj = y[i], y[j]
        s = yi * yj
        if s > 0:
            L, H = max(0.0, ai + aj - C), min(C, ai + aj)
        else:
            L, H = max(0.0, aj - ai), min(C, C + aj - ai)
        if L >= H:
            return False
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta > 0.0:
            aj_new = aj + yj * (E[i] - E[j]) / eta
            aj_new = min(max(aj_new, L), H)
        else:
            # PSD kernel makes eta >= 0; at 0 the objective is linear along
            # the pair direction, so move to whichever end the slope favors.
            slope = yj * (E[i] - E[j])
            if slope > eps:
                aj_new = H
            elif slope < -eps:
                aj_new = L
            else:
                return False
        if abs(aj_new - aj) < eps * (aj_new + aj + eps):
            return False
        ai_new = ai + s * (aj - aj_new)
        b1 = b - E[i] - yi * (ai_new - ai) * K[i, i] - yj * (aj_new - aj) * K[i, j]
        b2 = b - E[j] - yi * (ai_new - ai) * K[i, j] - yj * (aj_new - aj) * K[j, j]
        if 0.0 < ai_new < C:
            b_new = b1
        elif 0.0 < aj_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        db = b_new - b
        ci = yi * (ai_new - ai)
        cj = yj * (aj_new - aj)
        E += (ci * K[i] + cj * K[j]) + db
        alpha[i] = ai_new
        alpha[j] = aj_new
        b = b_new
        updates += 1
        return True

    def violates(i: int) -> bool:
        r = E[i] * y[i]
        return (alpha[i] < C and r < -tol) or (alpha[i] > 0.0 and r > tol)

    while updates < max_updates:
        changed = 0
        for i in range(n):
            if updates >= max_updates:
                break
            if not violates(i):
                continue
            diff = np.abs(E[i] - E)
            diff[i] = -1.0
            j = int(np.argmax(diff))
            if take_step(i, j):
                changed += 1
                continue
            for off in range(1, n):
                jj = (j + off) % n
                if take_step(i, jj):
                    changed += 1
                    break
        if changed == 0:
            break

    converged = kkt_violation(K, y, alpha, b, C) < tol
    return alpha, b, updates, converged


def kkt_violation(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, b: float, C: float) -> float:
    """Largest KKT violation of a dual solution (0 when satisfied)."""
    f = K @ (alpha * y) + b
    r = y * f - 1.0
    viol = 0.0
    for i in range(len(y)):
        if alpha[i] < C:
            viol = max(viol, -r[i])
        if alpha[i] > 0.0:
            viol = max(viol, r[i])
    return viol


def dual_objective(K: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """Soft-margin dual objective sum(a) - 0.5 a'YKYa."""
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v)
