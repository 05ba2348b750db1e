"""Numba-compiled twins of the numpy kernel lane.

Loop bodies are written to perform the same arithmetic in the same order as
the numpy expressions, so the two lanes agree to within a few ulps (exactly,
for the integer-valued gram matrix).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def conv_forward(x, filt, bias):
    n, w, q = x.shape
    f = filt.shape[0]
    out = np.empty((n, w, f))
    for m in range(n):
        for t in range(w):
            for j in range(f):
                acc = 0.0
                for c in range(q):
                    acc += x[m, t, c] * filt[j, c]
                out[m, t, j] = acc + bias[j]
    return out


@njit(cache=True)
def conv_param_grads(x, g):
    # Field-axis reduction first, then across samples, so a duplicated
    # sample contributes exactly twice.
    n, w, q = x.shape
    f = g.shape[2]
    dfilt = np.zeros((f, q))
    dbias = np.zeros(f)
    for m in range(n):
        for j in range(f):
            acc_b = 0.0
            for t in range(w):
                acc_b += g[m, t, j]
            dbias[j] += acc_b
            for c in range(q):
                acc = 0.0
                for t in range(w):
                    acc += g[m, t, j] * x[m, t, c]
                dfilt[j, c] += acc
    return dfilt, dbias


@njit(cache=True)
def gram_from_csr(indptr, indices, counts, vocab):
    n = len(indptr) - 1
    K = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            a, a_end = indptr[i], indptr[i + 1]
            b, b_end = indptr[j], indptr[j + 1]
            acc = 0.0
            while a < a_end and b < b_end:
                ca, cb = indices[a], indices[b]
                if ca == cb:
                    acc += counts[a] * counts[b]
                    a += 1
                    b += 1
                elif ca < cb:
                    a += 1
                else:
                    b += 1
            K[i, j] = acc
            K[j, i] = acc
    return K


@njit(cache=True)
def _kkt_violation(K, y, alpha, b, C):
    n = len(y)
    viol = 0.0
    for i in range(n):
        f = b
        for m in range(n):
            f += alpha[m] * y[m] * K[m, i]
        r = y[i] * f - 1.0
        if alpha[i] < C and -r > viol:
            viol = -r
        if alpha[i] > 0.0 and r > viol:
            viol = r
    return viol


@njit(cache=True)
def _take_step(K, y, alpha, E, b_box, i, j, C, eps):
    if i == j:
        return False
    ai = alpha[i]
    aj = alpha[j]
    yi = y[i]
    yj = y[j]
    s = yi * yj
    if s > 0:
        L = max(0.0, ai + aj - C)
        H = min(C, ai + aj)
    else:
        L = max(0.0, aj - ai)
        H = min(C, C + aj - ai)
    if L >= H:
        return False
    eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
    if eta > 0.0:
        aj_new = aj + yj * (E[i] - E[j]) / eta
        aj_new = min(max(aj_new, L), H)
    else:
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
    b = b_box[0]
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
    for m in range(len(y)):
        E[m] = E[m] + ((ci * K[i, m] + cj * K[j, m]) + db)
    alpha[i] = ai_new
    alpha[j] = aj_new
    b_box[0] = b_new
    return True


@njit(cache=True)
def smo_solve(K, y, C, tol, max_updates):
    n = len(y)
    alpha = np.zeros(n)
    b_box = np.zeros(1)
    E = np.empty(n)
    for i in range(n):
        E[i] = -y[i]
    updates = 0
    eps = 1e-12

    while updates < max_updates:
        changed = 0
        for i in range(n):
            if updates >= max_updates:
                break
            r = E[i] * y[i]
            if not ((alpha[i] < C and r < -tol) or (alpha[i] > 0.0 and r > tol)):
                continue
            best = -1.0
            j = 0
            for m in range(n):
                d = abs(E[i] - E[m])
                if m != i and d > best:
                    best = d
                    j = m
            if _take_step(K, y, alpha, E, b_box, i, j, C, eps):
                updates += 1
                changed += 1
                continue
            for off in range(1, n):
                jj = (j + off) % n
                if _take_step(K, y, alpha, E, b_box, i, jj, C, eps):
                    updates += 1
                    changed += 1
                    break
        if changed == 0:
            break

    converged = _kkt_violation(K, y, alpha, b_box[0], C) < tol
    return alpha, b_box[0], updates, converged
