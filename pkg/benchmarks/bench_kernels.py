#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Both backends are imported side by side, checked for agreement on the same
inputs, then timed (best of ``--repeat`` runs, after one warm-up call).

Usage:
    python3 benchmarks/bench_kernels.py [--repeat R] [--size S]
"""

from __future__ import annotations

import argparse
import importlib
import time

import numpy as np

from mdcc.channel import bsc
from mdcc.codes import random_codebook
from mdcc.gallager import prepared
from mdcc.kernels import numpy_impl

# Imported directly so the comparison runs even under MDCC_DISABLE_NUMBA.
_nb = importlib.import_module("mdcc.kernels.numba_impl")


def _best(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def _flatten(r):
    parts = r if isinstance(r, tuple) else (r,)
    return np.concatenate([np.ravel(np.asarray(x, dtype=float)) for x in parts])


def cases(size: int):
    rng = np.random.default_rng(0)
    W = np.array(rng.dirichlet(np.ones(4), size=4))
    logw = np.log(W)
    pos = W > 0
    rho = rng.uniform(0, 2, size)
    P = rng.dirichlet(np.ones(4), size)
    yield "eo_batch", (rho, P, logw, pos), 1e-12

    a = np.ascontiguousarray(W ** (1.0 / 1.5))
    # gap and iteration count depend on rounding near the optimum; compare (P, logF) only
    yield "maximize_e0", (0.5, a, np.full(4, 0.25), 1e-10, 5000), 1e-6

    ch = bsc(0.1)
    lw, ps = prepared(ch)
    cb = random_codebook(np.array([0.5, 0.5]), 12, 16, 1)
    yield "ml_table", (cb.codewords, lw, ps, 2), 0.0

    cb = random_codebook(np.array([0.5, 0.5]), 64, 256, 2)
    msgs = np.arange(size, dtype=np.int64) % cb.M
    u = np.random.default_rng(3).random((size, cb.n))
    cdf = np.ascontiguousarray(np.cumsum(ch.probabilities, axis=1))
    cdf[:, -1] = 1.0
    yield "mc_decode", (cb.codewords, msgs, u, cdf, lw, ps), 0.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", type=int, default=2000, help="batch size for eo_batch and mc_decode")
    args = ap.parse_args(argv)

    print(f"{'kernel':<14}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}  agree")
    for name, inputs, atol in cases(args.size):
        f_np = getattr(numpy_impl, name)
        f_nb = getattr(_nb, name)
        r_np, r_nb = f_np(*inputs), f_nb(*inputs)
        if name == "maximize_e0":
            r_np, r_nb = r_np[:2], r_nb[:2]
        flat_np, flat_nb = _flatten(r_np), _flatten(r_nb)
        agree = flat_np.shape == flat_nb.shape and np.allclose(flat_np, flat_nb, rtol=1e-9, atol=atol)
        t_np = _best(lambda: f_np(*inputs), args.repeat)
        t_nb = _best(lambda: f_nb(*inputs), args.repeat)
        print(f"{name:<14}{t_np:>12.4g}{t_nb:>12.4g}{t_np / t_nb:>10.1f}x  {'yes' if agree else 'NO'}")


if __name__ == "__main__":
    main()
