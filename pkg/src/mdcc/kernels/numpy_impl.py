"""Pure-numpy reference versions of the hot kernels.

Every function here has a twin with the same signature in ``numba_impl``;
the two are checked against each other in the test suite.
"""

import numpy as np


def output_terms(rho, p, logw, pos):
    """Per-output log-derivative terms of ``g_y = f_y^(1+rho)``.

    ``rho`` has shape (B,), ``p`` (B, X).  Returns ``log_g, h1, h2, h3, valid``
    each of shape (B, Y) where ``h_k = g_y^(k) / g_y``.  Outputs with
    ``f_y = 0`` (no supported input reaches y) are marked invalid and
    contribute nothing.
    """
    rho = np.asarray(rho, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    r1 = (1.0 + rho)[:, None]
    s = (1.0 / (1.0 + rho))[:, None, None]
    L = logw[None, :, :]
    live = pos[None, :, :] & (p[:, :, None] > 0)
    T = np.where(live, p[:, :, None] * np.exp(s * L), 0.0)
    TL = T * L
    f = T.sum(axis=1)
    f1 = -(s[:, :, 0] ** 2) * TL.sum(axis=1)
    f2 = s[:, :, 0] ** 3 * (TL * (2.0 + s * L)).sum(axis=1)
    f3 = -(s[:, :, 0] ** 4) * (TL * (6.0 + 6.0 * s * L + (s * L) ** 2)).sum(axis=1)
    valid = f > 0
    fs = np.where(valid, f, 1.0)
    u, v, t = f1 / fs, f2 / fs, f3 / fs
    lf = np.log(fs)
    L1 = lf + r1 * u
    L2 = 2.0 * u + r1 * (v - u * u)
    L3 = 3.0 * (v - u * u) + r1 * (t - 3.0 * u * v + 2.0 * u ** 3)
    h1 = L1
    h2 = L2 + L1 * L1
    h3 = L3 + 3.0 * L1 * L2 + L1 ** 3
    log_g = np.where(valid, r1 * lf, -np.inf)
    return log_g, np.where(valid, h1, 0.0), np.where(valid, h2, 0.0), np.where(valid, h3, 0.0), valid


def eo_batch(rho, p, logw, pos):
    """E0 and its first three rho-derivatives for a batch of (rho, P) probes.

    Returns an array of shape (B, 4): value, d1, d2, d3.
    """
    log_g, h1, h2, h3, valid = output_terms(rho, p, logw, pos)
    mx = log_g.max(axis=1, keepdims=True)
    w = np.where(valid, np.exp(log_g - mx), 0.0)
    Z = w.sum(axis=1)
    pi = w / Z[:, None]
    a1 = (pi * h1).sum(axis=1)
    a2 = (pi * h2).sum(axis=1)
    a3 = (pi * h3).sum(axis=1)
    e0 = -(mx[:, 0] + np.log(Z))
    d1 = -a1
    d2 = -a2 + d1 * d1
    d3 = -a3 + 3.0 * d1 * d2 - d1 ** 3
    return np.stack([e0, d1, d2, d3], axis=1)


def maximize_e0(rho, a, p0, tol, max_iter):
    """Minimize ``log sum_y (sum_x P(x) a[x, y])^(1+rho)`` over the simplex.

    Exponentiated-gradient descent with Armijo backtracking.  Returns
    ``(P, logF, gap, iterations)`` where ``gap`` is the Frank-Wolfe gap of
    the log objective at the returned point.
    """
    r1 = 1.0 + rho
    p = np.array(p0, dtype=np.float64)
    eta = 1.0

    def evaluate(q):
        f = q @ a
        fr = f ** rho
        F = np.dot(fr, f)
        grad = r1 * (a @ fr) / F
        return np.log(F), grad

    logF, grad = evaluate(p)
    gap = np.inf
    it = 0
    for it in range(max_iter):
        gmin = grad.min()
        gap = r1 - gmin
        if gap <= tol:
            break
        z = grad - gmin
        while True:
            q = p * np.exp(-eta * z)
            q /= q.sum()
            logFq, gq = evaluate(q)
            if logFq <= logF + 1e-4 * np.dot(grad, q - p) or eta < 1e-12:
                break
            eta *= 0.5
        p, logF, grad = q, logFq, gq
        eta = min(eta * 2.0, 1e6)
    else:
        gap = r1 - grad.min()
    return p, logF, gap, it


def _sequence_digits(k, n, Y):
    digits = np.empty((k.size, n), dtype=np.int64)
    rem = k.copy()
    for i in range(n - 1, -1, -1):
        digits[:, i] = rem % Y
        rem //= Y
    return digits


def _scores(codewords, ys, logw, pos):
    """Tie-exact ML scores via joint types: shape (S, M)."""
    M, n = codewords.shape
    X, Y = logw.shape
    S = ys.shape[0]
    out = np.empty((S, M))
    lw = np.where(pos, logw, 0.0).ravel()
    bad = (~pos).ravel()
    for m in range(M):
        idx = codewords[m][None, :] * Y + ys
        counts = np.zeros((S, X * Y), dtype=np.int64)
        rows = np.repeat(np.arange(S), n)
        np.add.at(counts, (rows, idx.ravel()), 1)
        sc = np.zeros(S)
        for j in range(X * Y):
            sc = sc + counts[:, j] * lw[j]
        impossible = (counts[:, bad] > 0).any(axis=1)
        out[:, m] = np.where(impossible, -np.inf, sc)
    return out


def _argmax_lowest(scores):
    M = scores.shape[1]
    best = np.full(scores.shape[0], -np.inf)
    arg = np.zeros(scores.shape[0], dtype=np.int64)
    for m in range(M):
        better = scores[:, m] > best
        arg = np.where(better, m, arg)
        best = np.where(better, scores[:, m], best)
    return arg


def ml_table(codewords, logw, pos, Y):
    M, n = codewords.shape
    total = Y ** n
    table = np.empty(total, dtype=np.int64)
    chunk = 1 << 16
    for start in range(0, total, chunk):
        k = np.arange(start, min(total, start + chunk), dtype=np.int64)
        ys = _sequence_digits(k, n, Y)
        table[start:start + k.size] = _argmax_lowest(_scores(codewords, ys, logw, pos))
    return table


def _seq_probs(codeword, V, ys):
    pr = np.ones(ys.shape[0])
    for i in range(ys.shape[1]):
        pr = pr * V[codeword[i], ys[:, i]]
    return pr


def region_masses(codewords, V, table, Y):
    M, n = codewords.shape
    total = Y ** n
    out = np.zeros((M, M))
    chunk = 1 << 16
    for start in range(0, total, chunk):
        k = np.arange(start, min(total, start + chunk), dtype=np.int64)
        ys = _sequence_digits(k, n, Y)
        dec = table[start:start + k.size]
        for m in range(M):
            pr = _seq_probs(codewords[m], V, ys)
            out[m] += np.bincount(dec, weights=pr, minlength=M)
    return out


def density_tail_masses(codewords, V, dens, thr, Y):
    M, n = codewords.shape
    total = Y ** n
    out = np.zeros(M)
    chunk = 1 << 16
    for start in range(0, total, chunk):
        k = np.arange(start, min(total, start + chunk), dtype=np.int64)
        ys = _sequence_digits(k, n, Y)
        for m in range(M):
            pr = _seq_probs(codewords[m], V, ys)
            tot = np.zeros(k.size)
            for i in range(n):
                tot = tot + dens[codewords[m, i], ys[:, i]]
            out[m] += pr[tot > thr[m]].sum()
    return out


def mc_decode(codewords, messages, u, cdf, logw, pos):
    """Draw outputs by inverse-CDF sampling and ML-decode them."""
    X, Y = cdf.shape
    x = codewords[messages]
    # first index j with u < cdf[x, j]
    ys = (u[:, :, None] >= cdf[x]).sum(axis=2)
    ys = np.minimum(ys, Y - 1)
    return _argmax_lowest(_scores(codewords, ys, logw, pos))
