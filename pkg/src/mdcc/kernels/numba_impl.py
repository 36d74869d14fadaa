"""Numba-compiled versions of the hot kernels (same signatures as numpy_impl)."""

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def _eo_point(rho, p, logw, pos, out):
    X, Y = logw.shape
    s = 1.0 / (1.0 + rho)
    r1 = 1.0 + rho
    log_g = np.empty(Y)
    h1 = np.empty(Y)
    h2 = np.empty(Y)
    h3 = np.empty(Y)
    valid = np.zeros(Y, dtype=np.bool_)
    mx = -np.inf
    for y in range(Y):
        f = 0.0
        s1 = 0.0
        s2 = 0.0
        s3 = 0.0
        for x in range(X):
            if p[x] > 0.0 and pos[x, y]:
                L = logw[x, y]
                t = p[x] * np.exp(s * L)
                tl = t * L
                f += t
                s1 += tl
                s2 += tl * (2.0 + s * L)
                s3 += tl * (6.0 + 6.0 * s * L + (s * L) * (s * L))
        if f <= 0.0:
            continue
        valid[y] = True
        u = -(s * s) * s1 / f
        v = s * s * s * s2 / f
        tt = -(s * s * s * s) * s3 / f
        lf = np.log(f)
        L1 = lf + r1 * u
        L2 = 2.0 * u + r1 * (v - u * u)
        L3 = 3.0 * (v - u * u) + r1 * (tt - 3.0 * u * v + 2.0 * u * u * u)
        h1[y] = L1
        h2[y] = L2 + L1 * L1
        h3[y] = L3 + 3.0 * L1 * L2 + L1 * L1 * L1
        log_g[y] = r1 * lf
        if log_g[y] > mx:
            mx = log_g[y]
    Z = 0.0
    a1 = 0.0
    a2 = 0.0
    a3 = 0.0
    for y in range(Y):
        if valid[y]:
            w = np.exp(log_g[y] - mx)
            Z += w
            a1 += w * h1[y]
            a2 += w * h2[y]
            a3 += w * h3[y]
    a1 /= Z
    a2 /= Z
    a3 /= Z
    d1 = -a1
    d2 = -a2 + d1 * d1
    out[0] = -(mx + np.log(Z))
    out[1] = d1
    out[2] = d2
    out[3] = -a3 + 3.0 * d1 * d2 - d1 * d1 * d1


@njit(**_OPTS)
def eo_batch(rho, p, logw, pos):
    B = rho.shape[0]
    out = np.empty((B, 4))
    for b in range(B):
        _eo_point(rho[b], p[b], logw, pos, out[b])
    return out


@njit(**_OPTS)
def _evaluate(q, a, rho, grad):
    X, Y = a.shape
    r1 = 1.0 + rho
    F = 0.0
    fr = np.empty(Y)
    for y in range(Y):
        f = 0.0
        for x in range(X):
            f += q[x] * a[x, y]
        fr[y] = f ** rho
        F += fr[y] * f
    for x in range(X):
        acc = 0.0
        for y in range(Y):
            acc += a[x, y] * fr[y]
        grad[x] = r1 * acc / F
    return np.log(F)


@njit(**_OPTS)
def maximize_e0(rho, a, p0, tol, max_iter):
    X = a.shape[0]
    r1 = 1.0 + rho
    p = p0.copy()
    q = np.empty(X)
    grad = np.empty(X)
    gq = np.empty(X)
    eta = 1.0
    logF = _evaluate(p, a, rho, grad)
    gap = np.inf
    it = 0
    converged = False
    for it in range(max_iter):
        gmin = grad.min()
        gap = r1 - gmin
        if gap <= tol:
            converged = True
            break
        while True:
            tot = 0.0
            for x in range(X):
                q[x] = p[x] * np.exp(-eta * (grad[x] - gmin))
                tot += q[x]
            for x in range(X):
                q[x] /= tot
            logFq = _evaluate(q, a, rho, gq)
            lin = 0.0
            for x in range(X):
                lin += grad[x] * (q[x] - p[x])
            if logFq <= logF + 1e-4 * lin or eta < 1e-12:
                break
            eta *= 0.5
        p[:] = q
        grad[:] = gq
        logF = logFq
        eta = min(eta * 2.0, 1e6)
    if not converged:
        gap = r1 - grad.min()
    return p, logF, gap, it


@njit(**_OPTS)
def _digits(k, n, Y, out):
    rem = k
    for i in range(n - 1, -1, -1):
        out[i] = rem % Y
        rem //= Y


@njit(**_OPTS)
def _decode(codewords, ys, lw, bad, counts, Y):
    M, n = codewords.shape
    XY = lw.shape[0]
    best = -np.inf
    arg = 0
    for m in range(M):
        for j in range(XY):
            counts[j] = 0
        for i in range(n):
            counts[codewords[m, i] * Y + ys[i]] += 1
        impossible = False
        sc = 0.0
        for j in range(XY):
            if counts[j] > 0 and bad[j]:
                impossible = True
            sc = sc + counts[j] * lw[j]
        if impossible:
            sc = -np.inf
        if sc > best:
            best = sc
            arg = m
    return arg


@njit(**_OPTS)
def ml_table(codewords, logw, pos, Y):
    M, n = codewords.shape
    X = logw.shape[0]
    lw = np.empty(X * Y)
    bad = np.empty(X * Y, dtype=np.bool_)
    for x in range(X):
        for y in range(Y):
            bad[x * Y + y] = not pos[x, y]
            lw[x * Y + y] = logw[x, y] if pos[x, y] else 0.0
    total = Y ** n
    table = np.empty(total, dtype=np.int64)
    ys = np.empty(n, dtype=np.int64)
    counts = np.empty(X * Y, dtype=np.int64)
    for k in range(total):
        _digits(k, n, Y, ys)
        table[k] = _decode(codewords, ys, lw, bad, counts, Y)
    return table


@njit(**_OPTS)
def region_masses(codewords, V, table, Y):
    M, n = codewords.shape
    total = Y ** n
    out = np.zeros((M, M))
    ys = np.empty(n, dtype=np.int64)
    for k in range(total):
        _digits(k, n, Y, ys)
        dec = table[k]
        for m in range(M):
            pr = 1.0
            for i in range(n):
                pr = pr * V[codewords[m, i], ys[i]]
            out[m, dec] += pr
    return out


@njit(**_OPTS)
def density_tail_masses(codewords, V, dens, thr, Y):
    M, n = codewords.shape
    total = Y ** n
    out = np.zeros(M)
    ys = np.empty(n, dtype=np.int64)
    for k in range(total):
        _digits(k, n, Y, ys)
        for m in range(M):
            pr = 1.0
            tot = 0.0
            for i in range(n):
                pr = pr * V[codewords[m, i], ys[i]]
                tot = tot + dens[codewords[m, i], ys[i]]
            if tot > thr[m]:
                out[m] += pr
    return out


@njit(**_OPTS)
def mc_decode(codewords, messages, u, cdf, logw, pos):
    M, n = codewords.shape
    X, Y = cdf.shape
    lw = np.empty(X * Y)
    bad = np.empty(X * Y, dtype=np.bool_)
    for x in range(X):
        for y in range(Y):
            bad[x * Y + y] = not pos[x, y]
            lw[x * Y + y] = logw[x, y] if pos[x, y] else 0.0
    T = messages.shape[0]
    out = np.empty(T, dtype=np.int64)
    ys = np.empty(n, dtype=np.int64)
    counts = np.empty(X * Y, dtype=np.int64)
    for t in range(T):
        m = messages[t]
        for i in range(n):
            x = codewords[m, i]
            j = 0
            while j < Y - 1 and u[t, i] >= cdf[x, j]:
                j += 1
            ys[i] = j
        out[t] = _decode(codewords, ys, lw, bad, counts, Y)
    return out
