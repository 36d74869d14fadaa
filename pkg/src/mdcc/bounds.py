"""Finite-blocklength error bounds and the normal approximation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist

import numpy as np
from scipy.optimize import minimize

from .capacity import ZERO_DISPERSION, capacity, channel_dispersion
from .channel import Channel, as_weights, binary_entropy
from .errors import DomainError, InapplicableYet, ZeroDispersion
from .exponents import err_exponent, esp_exponent, esp_haroutunian
from .parallel import ordered_map, substream

_NORMAL = NormalDist()


@dataclass(frozen=True)
class ConverseConstants:
    A: float
    gamma: float
    psi: float
    certified: str = "heuristic"

    @classmethod
    def from_A(cls, A: float, gamma: float = 0.1, certified: str = "heuristic") -> "ConverseConstants":
        if not 0.0 < gamma < 0.5:
            raise DomainError("gamma must lie in (0, 1/2)")
        return cls(A=float(A), gamma=float(gamma), psi=math.sqrt(2.0 * A / gamma), certified=certified)


@dataclass(frozen=True)
class ComLower:
    """Change-of-measure lower bounds; ``log_*`` keep the unclamped values."""

    form_a: float | None
    form_b: float
    log_a: float | None
    log_b: float
    delta_n: float


@dataclass(frozen=True)
class BoundReport:
    n: int
    R: float
    upper: float
    lower_sc: float | None
    lower_com: ComLower | None
    normal_rate: float | None

    @property
    def applicable(self) -> bool:
        return self.lower_com is not None


def _clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def log_gallager_upper(n: int, R: float, W: Channel) -> float:
    """``log(4 exp(-n E_r(R)))`` before clamping."""
    if n < 1 or R < 0:
        raise DomainError("need n >= 1 and R >= 0")
    return math.log(4.0) - n * err_exponent(R, W).E_r


def gallager_upper(n: int, R: float, W: Channel) -> float:
    """Random-coding upper bound ``min(1, 4 exp(-n E_r(R)))``."""
    return math.exp(min(0.0, log_gallager_upper(n, R, W)))


def _var_batch(P, V):
    q = P @ V
    pos = V > 0
    with np.errstate(divide="ignore"):
        logv = np.where(pos, np.log(np.where(pos, V, 1.0)), 0.0)
        logq = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)), 0.0)
    i = np.where(pos, logv - logq[None, :], 0.0)
    joint = P[:, None] * V
    m = float((joint * i).sum())
    return float((joint * (i - m) ** 2).sum())


def _unpack(z, k, m):
    zp = z[:k]
    p = np.exp(zp - zp.max())
    p /= p.sum()
    zv = z[k:].reshape(k, m)
    v = np.exp(zv - zv.max(axis=1, keepdims=True))
    v /= v.sum(axis=1, keepdims=True)
    return p, v


@lru_cache(maxsize=64)
def _constant_A(k: int, m: int, restarts: int, seed: int, threads):
    if m == 1:
        return 1.0, (np.full(k, 1.0 / k), np.ones((k, 1)))
    starts = []
    uni_p = np.full(k, 1.0 / k)
    starts.append((uni_p, np.full((k, m), 1.0 / m)))
    skew = np.full((k, m), 0.1 / m)
    for x in range(k):
        skew[x, x % m] += 0.9
    starts.append((uni_p, skew))
    for x in range(k):
        e = np.full(k, 0.05 / k)
        e[x] += 0.95
        starts.append((e / e.sum(), skew))
    for r in range(restarts):
        g = substream(seed, r)
        starts.append((g.dirichlet(np.ones(k)), g.dirichlet(np.full(m, 0.5), size=k)))

    def run(start):
        p0, v0 = start
        z0 = np.concatenate([np.log(np.clip(p0, 1e-12, None)), np.log(np.clip(v0, 1e-12, None)).ravel()])
        res = minimize(lambda z: -_var_batch(*_unpack(z, k, m)), z0, method="L-BFGS-B",
                       options={"maxiter": 2000, "ftol": 1e-14, "gtol": 1e-10})
        p, v = _unpack(res.x, k, m)
        return _var_batch(p, v), p, v

    results = ordered_map(run, starts, threads)
    best = max(results, key=lambda r: r[0])
    return 1.0 + best[0], (best[1], best[2])


def constant_A(W: Channel, restarts: int = 8, seed: int = 0, gamma: float = 0.1,
               threads: int | None = None) -> ConverseConstants:
    """Heuristic ``1 + max_{P,V} Var[log V(Y|X)/Q(Y)]``.

    The maximum runs over all input laws and all channels of W's shape, so
    only the alphabet sizes matter.  Multistart L-BFGS over softmax-
    parametrized ``(P, V)`` from structured starts and seeded Dirichlet
    samples; the maximum is not certified.
    """
    if restarts < 8:
        raise DomainError("constant_A needs at least 8 restarts")
    k, m = W.shape
    A, _ = _constant_A(k, m, int(restarts), int(seed), threads)
    return ConverseConstants.from_A(A, gamma)


def strong_converse_lower(n: int, delta: float, A: float) -> float:
    """``max(0, 1 - A/(n delta^2) - exp(-n delta))``."""
    if n < 1 or delta <= 0:
        raise DomainError("need n >= 1 and delta > 0")
    return _clamp(1.0 - A / (n * delta * delta) - math.exp(-n * delta))


def applicability(n: int, eps_n: float, consts: ConverseConstants, C: float) -> tuple[bool, bool]:
    """The two blocklength preconditions of the change-of-measure bound.

    First: ``C - eps_n - 2 psi / sqrt(n) > 0``.  Second: ``exp(-psi sqrt(n)) <= gamma / 2``.
    """
    first = C - (eps_n + 2.0 * consts.psi / math.sqrt(n)) > 0.0
    second = math.exp(-consts.psi * math.sqrt(n)) <= consts.gamma / 2.0
    return first, second


def com_lower(n: int, R_n: float, P_n, gamma: float, consts: ConverseConstants, W: Channel) -> ComLower:
    """Change-of-measure lower bound on the error probability.

    Form (a) uses the code type ``P_n`` (pass None to skip it); form (b) is the
    capacity form with ``delta_n = (C - R_n) + 2 psi / sqrt(n)``.
    """
    if not 0.0 < gamma < 0.5:
        raise DomainError("gamma must lie in (0, 1/2)")
    if n < 1:
        raise DomainError("n must be positive")
    if abs(consts.gamma - gamma) > 0:
        consts = ConverseConstants.from_A(consts.A, gamma, consts.certified)
    cap = capacity(W)
    eps_n = cap.C - R_n
    first, second = applicability(n, eps_n, consts, cap.C)
    if not (first and second):
        raise InapplicableYet(
            f"n={n}: rate-margin condition {'holds' if first else 'fails'}, "
            f"tail condition {'holds' if second else 'fails'}"
        )
    g1 = 1.0 - gamma
    h = binary_entropy(g1)
    slack = 2.0 * consts.psi / math.sqrt(n)
    delta_n = eps_n + slack
    sp = esp_exponent(cap.C - delta_n, W)
    log_b = -h / g1 - n * sp.E_SP / g1 if sp.esp_finite else -math.inf
    log_a = None
    if P_n is not None:
        d = esp_haroutunian(R_n - slack, W, as_weights(P_n))
        log_a = -n * (d / g1 + h / (n * g1)) if math.isfinite(d) else -math.inf
    return ComLower(
        form_a=None if log_a is None else _clamp(math.exp(min(0.0, log_a))),
        form_b=_clamp(math.exp(min(0.0, log_b))),
        log_a=log_a,
        log_b=log_b,
        delta_n=delta_n,
    )


def inverse_gaussian_cdf(q: float) -> float:
    """Standard normal quantile."""
    if not 0.0 < q < 1.0:
        raise DomainError("quantile argument must lie in (0, 1)")
    return _NORMAL.inv_cdf(q)


def normal_approx_rate(n: int, eps: float, W: Channel) -> float:
    """``C - sqrt(sigma^2(W)/n) Phi^{-1}(1 - eps)``, without the O(log n / n) term."""
    if not 0.0 < eps < 0.5:
        raise DomainError("eps must lie in (0, 1/2)")
    cap = capacity(W)
    disp = channel_dispersion(W, cap)
    if disp.sigma_sq <= ZERO_DISPERSION:
        raise ZeroDispersion("normal approximation requires sigma^2(W) > 0")
    return cap.C - math.sqrt(disp.sigma_sq / n) * inverse_gaussian_cdf(1.0 - eps)


def bound_report(n: int, R: float, W: Channel, consts: ConverseConstants, P_n=None,
                 eps: float | None = 0.1) -> BoundReport:
    try:
        com = com_lower(n, R, P_n, consts.gamma, consts, W)
    except InapplicableYet:
        com = None
    lower_sc = strong_converse_lower(n, consts.psi / math.sqrt(n), consts.A)
    rate = normal_approx_rate(n, eps, W) if eps is not None else None
    return BoundReport(n=n, R=R, upper=gallager_upper(n, R, W), lower_sc=lower_sc,
                       lower_com=com, normal_rate=rate)


BOUND_COLUMNS = ["n", "R", "upper", "lower_com_a", "lower_com_b", "normal_rate", "applicable_flag"]


def _g(x) -> str:
    return "" if x is None else "%.17g" % x


def bound_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUND_COLUMNS)
    for r in reports:
        c = r.lower_com
        w.writerow([r.n, _g(r.R), _g(r.upper), _g(c.form_a if c else None), _g(c.form_b if c else None),
                    _g(r.normal_rate), "1" if c else "0"])
    return buf.getvalue()
