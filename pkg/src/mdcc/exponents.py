"""Random-coding and sphere-packing exponents, critical rate and diagnostics.

Both exponents are outer maximizations over rho of ``E0*(rho) - rho R``
where ``E0*(rho) = max_P E0(rho, P)``.  ``E0*`` is cached per channel and
rho, so rate sweeps reuse the (deterministic) grid evaluations.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import kernels
from .capacity import capacity, channel_dispersion, ZERO_DISPERSION
from .channel import Channel, InputDistribution, as_weights, conditional_kl, mutual_information
from .errors import AlphabetTooLarge, NegativeRho, NoConvergence, ZeroDispersion
from .gallager import eo_batch
from .parallel import ordered_map

RHO_MAX = 100.0
TIE_TOL = 1e-9


@dataclass(frozen=True)
class ExponentPoint:
    """Exponent values at one rate.

    ``E_SP`` is ``math.inf`` exactly when ``esp_finite`` is False; callers
    should branch on the flag.  Fields of a part that was not computed are None.
    """

    R: float
    E_r: float | None = None
    E_SP: float | None = None
    rho_star_r: float | None = None
    rho_star_sp: float | None = None
    P_star: InputDistribution | None = None
    stationarity_residual: float | None = None
    esp_finite: bool = True
    P_star_r: InputDistribution | None = None


@dataclass(frozen=True)
class CriticalRate:
    R_cr: float | None
    R_inf: float
    no_critical_rate: bool = False


@dataclass(frozen=True)
class PathRecord:
    delta: float
    rho_star: float
    P_star: InputDistribution
    rho_over_delta: float
    capacity_gap: float
    stationarity_residual: float


@lru_cache(maxsize=64)
def _capacity(W: Channel):
    return capacity(W)


def _starts(k: int) -> list[np.ndarray]:
    out = [np.full(k, 1.0 / k)]
    for x in range(k):
        v = np.full(k, 0.1 / k)
        v[x] += 0.9
        out.append(v)
    return out


def _surrogate(p, a, rho):
    f = p @ a
    fr = f ** rho
    F = float(np.dot(fr, f))
    return F, f, (1.0 + rho) * (a @ fr) / F


def _newton_e0(p, a, rho, support, steps=60):
    """Newton iterations on the KKT system ``grad_x = 1 + rho`` on ``support``."""
    S = np.array(sorted(support))
    aS = a[S]
    keep = aS.max(axis=0) > 0
    aS = aS[:, keep]
    q = p[S] / p[S].sum()
    lam = 1.0 + rho
    for _ in range(steps):
        F, f, g = _surrogate(q, aS, rho)
        r = np.concatenate([g - lam, [q.sum() - 1.0]])
        if np.max(np.abs(r)) < 1e-15:
            break
        H = (aS * f ** (rho - 1.0)) @ aS.T
        J = np.zeros((S.size + 1, S.size + 1))
        J[:S.size, :S.size] = (1.0 + rho) * rho * H / F - np.outer(g, g)
        J[:S.size, S.size] = -1.0
        J[S.size, :S.size] = 1.0
        step = np.linalg.lstsq(J, -r, rcond=1e-14)[0]
        q = q + step[:S.size]
        lam = lam + step[S.size]
        if np.any(q < -1e-13):
            return None
        q = np.clip(q, 0.0, None)
    out = np.zeros_like(p)
    out[S] = q / q.sum()
    return out


def _fw_gap(p, a, rho):
    F, _, g = _surrogate(p, a, rho)
    return np.log(F), (1.0 + rho) - g.min()


def _support_ladder(p):
    """Candidate supports for the Newton polish, from tight to the full alphabet.

    Inputs whose weight is vanishing slowly (optimum on a face of the simplex)
    are dropped at increasing thresholds.
    """
    seen, out = set(), []
    for t in (1e-9, 1e-6, 1e-4, 1e-2, 0.0):
        sup = np.flatnonzero(p > t * p.max()) if t > 0 else np.arange(p.size)
        key = tuple(sup.tolist())
        if key not in seen:
            seen.add(key)
            out.append(sup)
    return out


def _e0_runs(a, rho, tol, starts):
    runs = []
    last_gap = np.inf
    for p0 in starts:
        p, logF, gap, it = kernels.maximize_e0(float(rho), a, p0, float(tol), 5000)
        if gap > tol:
            for sup in _support_ladder(p):
                cand = _newton_e0(p, a, rho, sup)
                if cand is None:
                    continue
                lf, g = _fw_gap(cand, a, rho)
                if g < gap:
                    p, logF, gap = cand, lf, g
                if gap <= tol:
                    break
        last_gap = min(last_gap, gap)
        if gap <= tol:
            runs.append((-float(logF), p))
    return runs, last_gap


@lru_cache(maxsize=200_000)
def _e0_star(W: Channel, rho: float, tol: float):
    k = W.input_size
    if rho == 0.0:
        return np.full(k, 1.0 / k), 0.0
    Wm = W.probabilities
    a = np.ascontiguousarray(np.where(Wm > 0, Wm ** (1.0 / (1.0 + rho)), 0.0))
    runs, last_gap = _e0_runs(a, rho, tol, _starts(k))
    if not runs:
        # near rho = 0 progress per step is O(rho); the capacity achiever is the limit point
        runs, gap2 = _e0_runs(a, rho, tol, [np.array(_capacity(W).P_star.weights)])
        last_gap = min(last_gap, gap2)
    if not runs:
        raise NoConvergence(f"E0 maximization at rho={rho} did not reach gap {tol}",
                            payload={"rho": rho, "gap": float(last_gap)})
    best = max(v for v, _ in runs)
    near = [p for v, p in runs if v >= best - TIE_TOL]
    p = min(near, key=tuple)
    p = p / p.sum()
    p.setflags(write=False)
    return p, best


def max_eo_over_p(rho: float, W: Channel, tol: float = 1e-12) -> tuple[InputDistribution, float]:
    """``argmax_P E0(rho, P)`` and the maximum value.

    Minimizes the convex surrogate ``sum_y (sum_x P(x) W(y|x)^(1/(1+rho)))^(1+rho)``
    by exponentiated gradient until the Frank-Wolfe gap is below ``tol``,
    from the uniform start and from perturbed vertices.
    """
    if rho < 0:
        raise NegativeRho(f"rho must be nonnegative, got {rho}")
    p, v = _e0_star(W, float(rho), float(tol))
    return InputDistribution(p), v


def _slope(W, rho, tol, C):
    """Right derivative of ``E0*`` at rho (envelope); equals C at rho = 0."""
    if rho == 0.0:
        return C
    p, _ = _e0_star(W, float(rho), tol)
    return float(eo_batch([rho], p[None, :], W)[0, 1])


def _rho_grid(upper: float, audit: bool) -> np.ndarray:
    step = 1e-3 if audit else 1.0 / 64
    base = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    if upper <= 1.0:
        return base
    tail = np.geomspace(1.0, upper, 41 if not audit else 401)[1:]
    return np.concatenate([base, tail])


def _outer_max(R, W, tol, grid, C, threads=None):
    vals = np.array([v for _, v in ordered_map(lambda r: _e0_star(W, float(r), tol), grid, threads)])
    obj = vals - grid * R
    i = int(np.argmax(obj))
    best_rho, best_val = float(grid[i]), float(obj[i])
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, grid.size - 1)])
    if hi > lo:
        s_lo = _slope(W, lo, tol, C) - R
        s_hi = _slope(W, hi, tol, C) - R
        if s_lo > 0 > s_hi:
            r = brentq(lambda t: _slope(W, t, tol, C) - R, lo, hi, xtol=1e-15, rtol=1e-14)
        else:
            r = minimize_scalar(lambda t: -(_e0_star(W, float(t), tol)[1] - t * R),
                                bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}).x
        v = _e0_star(W, float(r), tol)[1] - r * R
        if v > best_val:
            best_rho, best_val = float(r), float(v)
    return best_rho, best_val


def _point_p(W, rho, tol, cap):
    if rho == 0.0:
        return cap.P_star
    return InputDistribution.normalized(_e0_star(W, float(rho), tol)[0])


def _residual(W, rho, P, R, upper):
    if 0.0 < rho < upper:
        return abs(float(eo_batch([rho], P.weights[None, :], W)[0, 1]) - R)
    return None


def err_exponent(R: float, W: Channel, tol: float = 1e-12, audit: bool = False,
                 threads: int | None = None) -> ExponentPoint:
    """``E_r(R) = max_{0 <= rho <= 1} E0*(rho) - rho R``."""
    if R < 0:
        raise ValueError("rate must be nonnegative")
    cap = _capacity(W)
    rho, val = _outer_max(R, W, tol, _rho_grid(1.0, audit), cap.C, threads)
    val = max(val, 0.0)
    P = _point_p(W, rho, tol, cap)
    return ExponentPoint(R=R, E_r=val, rho_star_r=rho, P_star=P, P_star_r=P,
                         stationarity_residual=_residual(W, rho, P, R, 1.0))


def esp_exponent(R: float, W: Channel, tol: float = 1e-12, rho_max: float = RHO_MAX,
                 audit: bool = False, threads: int | None = None) -> ExponentPoint:
    """``E_SP(R) = sup_{rho >= 0} E0*(rho) - rho R`` on ``[0, rho_max]``.

    If the envelope slope still exceeds R at ``rho_max`` the supremum is
    treated as infinite and flagged.
    """
    if R < 0:
        raise ValueError("rate must be nonnegative")
    cap = _capacity(W)
    if _slope(W, float(rho_max), tol, cap.C) > R:
        P = _point_p(W, float(rho_max), tol, cap)
        return ExponentPoint(R=R, E_SP=math.inf, rho_star_sp=math.inf, P_star=P, esp_finite=False)
    rho, val = _outer_max(R, W, tol, _rho_grid(rho_max, audit), cap.C, threads)
    val = max(val, 0.0)
    P = _point_p(W, rho, tol, cap)
    return ExponentPoint(R=R, E_SP=val, rho_star_sp=rho, P_star=P,
                         stationarity_residual=_residual(W, rho, P, R, rho_max))


def exponent_point(R: float, W: Channel, tol: float = 1e-12, rho_max: float = RHO_MAX,
                   audit: bool = False, threads: int | None = None) -> ExponentPoint:
    """Both exponents at R; ``P_star`` and the residual come from the sphere-packing part."""
    er = err_exponent(R, W, tol, audit, threads)
    sp = esp_exponent(R, W, tol, rho_max, audit, threads)
    return replace(sp, E_r=er.E_r, rho_star_r=er.rho_star_r, P_star_r=er.P_star_r)


def _haroutunian_v(Wm, p, s, q0, tol):
    """Minimize ``D(V||W|P) + s I(P;V)`` by alternating over V and Q = PV."""
    a = 1.0 / (1.0 + s)
    logw = np.where(Wm > 0, np.log(np.where(Wm > 0, Wm, 1.0)), -np.inf)
    q = q0.copy()
    for _ in range(100_000):
        with np.errstate(divide="ignore"):
            lv = a * logw + (1.0 - a) * np.log(q)[None, :]
        lv -= lv.max(axis=1, keepdims=True)
        V = np.exp(lv)
        V /= V.sum(axis=1, keepdims=True)
        q_new = p @ V
        if np.max(np.abs(q_new - q)) <= tol:
            q = q_new
            break
        q = q_new
    return V, q


def esp_haroutunian(R: float, W: Channel, P, tol: float = 1e-13) -> float:
    """``min { D(V||W|P) : I(P;V) <= R }`` over channels V.

    For a multiplier s the penalized problem is solved by alternating
    minimization; ``I(P; V_s)`` is nonincreasing in s, so the constraint is
    met with equality by a root search on s.  Returns ``math.inf`` when no
    V with finite divergence meets the constraint.
    """
    if W.input_size > 4 or W.output_size > 4:
        raise AlphabetTooLarge("esp_haroutunian is an oracle for alphabets up to 4")
    if R < 0:
        raise ValueError("rate must be nonnegative")
    p_full = as_weights(P)
    sup = p_full > 0
    p = p_full[sup]
    Wm = W.probabilities[sup]
    if mutual_information(p, Wm) <= R:
        return 0.0
    if R == 0.0:
        logw = np.where(Wm > 0, np.log(np.where(Wm > 0, Wm, 1.0)), -np.inf)
        with np.errstate(invalid="ignore"):
            lg = p @ np.where(np.isfinite(logw), logw, 0.0)
        alive = np.all(Wm > 0, axis=0)
        if not alive.any():
            return math.inf
        return float(-np.log(np.exp(lg[alive]).sum()))
    q = p @ Wm
    cache = {}

    def info(s):
        nonlocal q
        if s not in cache:
            V, q = _haroutunian_v(Wm, p, s, q, tol)
            cache[s] = (mutual_information(p, V) - R, V)
        return cache[s][0]

    lo, hi = 0.0, 1.0
    while info(hi) > 0:
        lo, hi = hi, hi * 2.0
        if hi > 1e6:
            return math.inf
    s = brentq(info, lo, hi, xtol=1e-14, rtol=1e-13)
    info(s)
    V = cache[s][1]
    return float(conditional_kl(V, Wm, p))


def critical_rate(W: Channel, tol: float = 1e-10, rho_max: float = RHO_MAX) -> CriticalRate:
    """Critical rate (``rho*_SP(R) = 1`` crossing) and the finiteness threshold R_inf.

    R_inf is where the sphere-packing slope test at ``rho_max`` flips, which
    is the envelope slope there.  A channel whose threshold already equals C
    (noiseless-like) has no critical rate and is reported as such.
    """
    cap = _capacity(W)
    ptol = 1e-12
    R_inf = min(_slope(W, float(rho_max), ptol, cap.C), cap.C)
    if cap.C - R_inf <= max(tol, 1e-9):
        return CriticalRate(R_cr=None, R_inf=cap.C, no_critical_rate=True)
    disp = channel_dispersion(W, cap)
    if disp.sigma_sq <= ZERO_DISPERSION:
        raise ZeroDispersion("critical rate analysis requires sigma^2(W) > 0")
    def above(R):
        pt = esp_exponent(R, W, ptol, rho_max)
        return not pt.esp_finite or pt.rho_star_sp >= 1.0

    # the envelope slope at rho = 1 is the crossing when the outer problem is
    # unimodal; confirm it with a narrow bracket (the rho* test cannot resolve
    # R much finer than that), else bisect the full range
    guess = _slope(W, 1.0, ptol, cap.C)
    lo, hi = R_inf, cap.C
    if R_inf < guess - 1e-7 and guess + 1e-7 < cap.C and above(guess - 1e-7) and not above(guess + 1e-7):
        return CriticalRate(R_cr=guess, R_inf=R_inf)
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if above(mid):
            lo = mid
        else:
            hi = mid
    else:
        raise NoConvergence("critical rate bisection did not converge", payload={"lo": lo, "hi": hi})
    return CriticalRate(R_cr=0.5 * (lo + hi), R_inf=R_inf)


def optimizer_path(W: Channel, deltas, tol: float = 1e-12) -> list[PathRecord]:
    """Sphere-packing optimizers at ``R = C - delta`` for each delta."""
    cap = _capacity(W)
    out = []
    for d in deltas:
        if d <= 0:
            raise ValueError("deltas must be positive")
        pt = esp_exponent(cap.C - d, W, tol)
        P = pt.P_star
        res = pt.stationarity_residual
        if res is None:
            res = abs(float(eo_batch([pt.rho_star_sp], P.weights[None, :], W)[0, 1]) - (cap.C - d))
        out.append(PathRecord(
            delta=float(d),
            rho_star=pt.rho_star_sp,
            P_star=P,
            rho_over_delta=pt.rho_star_sp / d,
            capacity_gap=cap.C - mutual_information(P, W),
            stationarity_residual=res,
        ))
    return out


EXPONENT_COLUMNS = ["R", "E_r", "E_SP", "rho_star_r", "rho_star_sp", "finite_flag"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def exponent_curve(W: Channel, rates, tol: float = 1e-12, threads: int | None = None) -> list[ExponentPoint]:
    return ordered_map(lambda r: exponent_point(float(r), W, tol), list(rates), threads)


def exponent_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EXPONENT_COLUMNS)
    for p in points:
        w.writerow([_fmt(p.R), _fmt(p.E_r), _fmt(p.E_SP), _fmt(p.rho_star_r),
                    _fmt(p.rho_star_sp), _fmt(bool(p.esp_finite))])
    return buf.getvalue()
