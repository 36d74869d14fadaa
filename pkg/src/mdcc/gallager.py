"""Gallager's E0 function and its exact rho-derivatives.

``E0(rho, P) = -log sum_y f_y(rho, P)^(1+rho)`` with
``f_y = sum_{x in X_y} P(x) W(y|x)^(1/(1+rho))``.  Derivatives are
assembled in closed form from the derivatives of ``f_y`` through the chain
rule for ``g_y = f_y^(1+rho)``; sums run over the support sets only, so
zero transition probabilities never enter a power or a logarithm.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .channel import Channel, InputDistribution, as_weights
from .errors import NegativeRho, ShapeMismatch
from .parallel import ordered_map, substream


@dataclass(frozen=True)
class EoEvaluation:
    rho: float
    value: float
    d1: float
    d2: float
    d3: float


@dataclass(frozen=True)
class ThirdDerivativeBound:
    M: float
    certified: str
    rho_at_max: float
    P_at_max: InputDistribution
    probes: int


@lru_cache(maxsize=512)
def prepared(W: Channel):
    """``(logW, support mask)`` with log entries zeroed off the support."""
    Wm = W.probabilities
    pos = Wm > 0
    logw = np.zeros_like(Wm)
    logw[pos] = np.log(Wm[pos])
    logw.setflags(write=False)
    pos.setflags(write=False)
    return logw, pos


def _check(rho, P, W):
    if rho < 0:
        raise NegativeRho(f"rho must be nonnegative, got {rho}")
    p = as_weights(P)
    if p.shape != (W.input_size,):
        raise ShapeMismatch(f"P has shape {p.shape}, channel has {W.input_size} inputs")
    return p


def eo_batch(rho, P, W: Channel) -> np.ndarray:
    """Vectorized (value, d1, d2, d3) rows for arrays of rho and P."""
    rho = np.ascontiguousarray(np.atleast_1d(np.asarray(rho, dtype=np.float64)))
    P = np.ascontiguousarray(np.atleast_2d(np.asarray(P, dtype=np.float64)))
    if rho.size == 1 and P.shape[0] > 1:
        rho = np.repeat(rho, P.shape[0])
    elif P.shape[0] == 1 and rho.size > 1:
        P = np.repeat(P, rho.size, axis=0)
    if rho.size != P.shape[0]:
        raise ShapeMismatch(f"{rho.size} rho values for {P.shape[0]} distributions")
    if P.shape[1] != W.input_size:
        raise ShapeMismatch(f"P has {P.shape[1]} entries, channel has {W.input_size} inputs")
    if np.any(rho < 0):
        raise NegativeRho("rho must be nonnegative")
    logw, pos = prepared(W)
    return kernels.eo_batch(np.ascontiguousarray(rho), np.ascontiguousarray(P), logw, pos)


def eo(rho: float, P, W: Channel) -> float:
    p = _check(rho, P, W)
    if rho == 0:
        return 0.0
    return float(eo_batch([rho], p[None, :], W)[0, 0])


def eo_derivatives(rho: float, P, W: Channel) -> EoEvaluation:
    p = _check(rho, P, W)
    v, d1, d2, d3 = eo_batch([rho], p[None, :], W)[0]
    if rho == 0:
        v = 0.0
    return EoEvaluation(float(rho), float(v), float(d1), float(d2), float(d3))


def output_contributions(rho: float, P, W: Channel) -> np.ndarray:
    """Per-output shares of the derivative sums, shape (3, |Y|).

    Row ``k`` holds ``g_y^(k+1)(rho, P) / sum_y g_y(rho, P)``; outputs not
    reachable from supp(P) contribute exactly zero.
    """
    p = _check(rho, P, W)
    logw, pos = prepared(W)
    log_g, h1, h2, h3, valid = kernels.output_terms(np.array([float(rho)]), p[None, :], logw, pos)
    mx = log_g.max()
    pi = np.where(valid, np.exp(log_g - mx), 0.0)
    pi /= pi.sum()
    return np.vstack([pi * h1, pi * h2, pi * h3])


def _p_probes(k: int, n_random: int, seed: int) -> np.ndarray:
    structured = [np.full(k, 1.0 / k)]
    eye = np.eye(k)
    structured.extend(eye)
    for i in range(k):
        for j in range(i + 1, k):
            structured.append(0.5 * (eye[i] + eye[j]))
    rand = [substream(seed, i).dirichlet(np.ones(k)) for i in range(n_random)]
    return np.array(structured + rand)


def third_derivative_bound(
    W: Channel,
    grid_density: int = 33,
    restarts: int = 8,
    seed: int = 0,
    threads: int | None = None,
) -> ThirdDerivativeBound:
    """Heuristic ``max |d^3 E0 / d rho^3|`` over ``[0, 1] x simplex``.

    A rho grid crossed with structured and Dirichlet P probes, followed by
    Nelder-Mead ascent from the ``restarts`` best probes.
    """
    if grid_density < 2:
        raise ValueError("grid_density must be at least 2")
    k = W.input_size
    rho_grid = np.linspace(0.0, 1.0, grid_density)
    probes = _p_probes(k, 16 * restarts, seed)
    R, Pi = np.meshgrid(rho_grid, np.arange(probes.shape[0]), indexing="ij")
    rhos = R.ravel()
    Ps = probes[Pi.ravel()]
    d3 = np.abs(eo_batch(rhos, Ps, W)[:, 3])
    order = np.argsort(-d3, kind="stable")[:restarts]
    best = (float(d3[order[0]]), float(rhos[order[0]]), Ps[order[0]])

    def neg_abs_d3(z):
        rho = float(np.clip(z[0], 0.0, 1.0))
        logits = z[1:] - z[1:].max()
        p = np.exp(logits)
        p /= p.sum()
        return -abs(eo_batch([rho], p[None, :], W)[0, 3])

    def ascend(idx):
        p0 = np.clip(Ps[idx], 1e-12, None)
        z0 = np.concatenate([[rhos[idx]], np.log(p0 / p0.sum())])
        res = minimize(neg_abs_d3, z0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        z = res.x
        rho = float(np.clip(z[0], 0.0, 1.0))
        p = np.exp(z[1:] - z[1:].max())
        return -float(res.fun), rho, p / p.sum()

    for val, rho, p in ordered_map(ascend, list(order), threads):
        if val > best[0]:
            best = (val, rho, p)
    return ThirdDerivativeBound(
        M=best[0],
        certified="heuristic",
        rho_at_max=best[1],
        P_at_max=InputDistribution.normalized(best[2]),
        probes=int(rhos.size),
    )
