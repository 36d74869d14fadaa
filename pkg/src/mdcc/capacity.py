"""Capacity, capacity-achieving structure and channel dispersion."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

from .channel import Channel, InputDistribution, info_density_variance, row_divergences
from .errors import AlphabetTooLarge, InfeasiblePolytope, NoConvergence, ZeroDispersionWarning

ZERO_DISPERSION = 1e-14


@dataclass(frozen=True)
class CapacityResult:
    C: float
    P_star: InputDistribution
    Q_star: np.ndarray
    admissible_inputs: frozenset
    iterations: int
    gap: float
    tol_kkt: float
    divergences: np.ndarray


@dataclass(frozen=True)
class DispersionResult:
    sigma_sq: float
    minimizer: InputDistribution
    per_letter_variance: np.ndarray
    method: str

    @property
    def zero(self) -> bool:
        return self.sigma_sq <= ZERO_DISPERSION


def kkt_tolerance(tol: float) -> float:
    return max(10.0 * tol, 1e-9)


def _bracket(p, Wm):
    q = p @ Wm
    d = row_divergences(Wm, q)
    lower = float(np.dot(p[p > 0], d[p > 0]))
    return lower, float(d.max()), q, d


def _polish(p, Wm, support, steps=40):
    """Newton iterations on the KKT system ``D(W_x||Q) = c`` for x in support.

    Least-squares steps keep this well defined when capacity achievers are
    not unique.  Returns None if the iteration leaves the simplex.
    """
    S = np.array(sorted(support))
    pS = p[S] / p[S].sum()
    WS = Wm[S]
    reach = WS.max(axis=0) > 0
    WS = WS[:, reach]
    c = None
    for _ in range(steps):
        q = pS @ WS
        d = row_divergences(WS, q)
        if c is None:
            c = float(np.dot(pS, d))
        r = np.concatenate([d - c, [pS.sum() - 1.0]])
        if np.max(np.abs(r)) < 1e-15:
            break
        J = np.zeros((S.size + 1, S.size + 1))
        J[:S.size, :S.size] = -(WS / q) @ WS.T
        J[:S.size, S.size] = -1.0
        J[S.size, :S.size] = 1.0
        step = np.linalg.lstsq(J, -r, rcond=1e-13)[0]
        pS = pS + step[:S.size]
        c = c + step[S.size]
        if np.any(pS < -1e-12):
            return None
        pS = np.clip(pS, 0.0, None)
    out = np.zeros_like(p)
    out[S] = pS / pS.sum()
    return out


def capacity(W: Channel, tol: float = 1e-12, max_iter: int = 200_000) -> CapacityResult:
    """Blahut-Arimoto with the standard ``[I(P;W), max_x D(W_x||Q)]`` bracket.

    Once the bracket is below ``tol`` (or stalls), a Newton step on the KKT
    conditions tightens the estimate to rounding level when possible.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    Wm = W.probabilities
    k = W.input_size
    p = np.full(k, 1.0 / k)
    lower, upper, q, d = _bracket(p, Wm)
    tol_kkt = kkt_tolerance(tol)
    it = 0
    while upper - lower > tol and it < max_iter:
        p = p * np.exp(d - d.max())
        p /= p.sum()
        lower, upper, q, d = _bracket(p, Wm)
        it += 1
        if it % 500 == 0 and upper - lower > tol:
            # slow (near-degenerate) channels: try a KKT Newton jump
            width = max(tol_kkt, 10.0 * (upper - lower))
            cand = _polish(p, Wm, np.flatnonzero(d >= upper - width))
            if cand is not None:
                b = _bracket(cand, Wm)
                if b[1] - b[0] < upper - lower:
                    p, (lower, upper, q, d) = cand, b
    if upper - lower > tol:
        raise NoConvergence(
            f"capacity bracket {upper - lower:.3e} after {it} iterations",
            payload={"lower": lower, "upper": upper, "P": p.tolist()},
        )
    polished = _polish(p, Wm, np.flatnonzero(d >= upper - tol_kkt))
    if polished is not None:
        lo2, up2, q2, d2 = _bracket(polished, Wm)
        if up2 - lo2 <= upper - lower:
            p, lower, upper, q, d = polished, lo2, up2, q2, d2
    C = lower
    admissible = frozenset(np.flatnonzero(d >= C - tol_kkt).tolist())
    q = q.copy()
    q.setflags(write=False)
    d = d.copy()
    d.setflags(write=False)
    return CapacityResult(
        C=C,
        P_star=InputDistribution.normalized(p),
        Q_star=q,
        admissible_inputs=admissible,
        iterations=it,
        gap=max(0.0, upper - lower),
        tol_kkt=tol_kkt,
        divergences=d,
    )


def conditional_dispersion(P, W: Channel) -> float:
    """Variance of ``log W(Y|X)/Q(Y)`` under ``P x W``."""
    return info_density_variance(P, W)


def per_letter_variances(W: Channel, Q) -> np.ndarray:
    """``Var_{Y ~ W(.|x)}[log W(Y|x)/Q(Y)]`` for each input letter."""
    Wm = W.probabilities
    Q = np.asarray(Q)
    out = np.zeros(W.input_size)
    for x in range(W.input_size):
        sup = Wm[x] > 0
        i = np.log(Wm[x, sup]) - np.log(Q[sup])
        w = Wm[x, sup]
        m = np.dot(w, i)
        out[x] = np.dot(w, (i - m) ** 2)
    return out


def _warn_if_zero(res: DispersionResult) -> DispersionResult:
    if res.zero:
        warnings.warn(
            "channel dispersion is zero; moderate-deviations results require sigma^2(W) > 0",
            ZeroDispersionWarning,
            stacklevel=3,
        )
    return res


_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def channel_dispersion(W: Channel, cap: CapacityResult) -> DispersionResult:
    """Minimize ``sum_x P(x) V_x`` over the capacity-achieving polytope.

    On that polytope the output law is ``Q*`` and every supported input has
    ``D(W_x||Q*) = C``, so the dispersion is linear in P.  Ties between
    optimal vertices resolve to the lexicographically smallest P.
    """
    Wm = W.probabilities
    S = np.array(sorted(cap.admissible_inputs))
    V = per_letter_variances(W, cap.Q_star)
    A_eq = np.vstack([Wm[S].T, np.ones(S.size)])
    b_eq = np.concatenate([cap.Q_star, [1.0]])
    res = linprog(V[S], A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=_HIGHS)
    if res.status != 0:
        raise InfeasiblePolytope(f"capacity polytope LP failed: {res.message}; loosen tol_kkt")
    best = float(res.fun)
    fixed_ub = [V[S].copy()]
    fixed_b = [best + 1e-12]
    x = res.x
    for j in range(S.size):
        c = np.zeros(S.size)
        c[j] = 1.0
        rj = linprog(c, A_ub=np.array(fixed_ub), b_ub=np.array(fixed_b), A_eq=A_eq, b_eq=b_eq,
                     bounds=(0, None), method="highs", options=_HIGHS)
        if rj.status != 0:
            break
        x = rj.x
        row = np.zeros(S.size)
        row[j] = 1.0
        fixed_ub.append(row)
        fixed_b.append(float(rj.fun) + 1e-12)
    p = np.zeros(W.input_size)
    p[S] = np.where(x > 1e-11, x, 0.0)
    p /= p.sum()
    return _warn_if_zero(DispersionResult(
        sigma_sq=float(max(0.0, np.dot(p, V))),
        minimizer=InputDistribution(p),
        per_letter_variance=V,
        method="lp",
    ))


def _simplex_grid(k: int, step: float) -> np.ndarray:
    m = int(round(1.0 / step))
    pts = [c for c in itertools.product(range(m + 1), repeat=k - 1) if sum(c) <= m]
    a = np.array(pts, dtype=np.float64).reshape(-1, k - 1)
    return np.hstack([a, (m - a.sum(axis=1, keepdims=True))]) / m


def _mi_var_batch(P: np.ndarray, Wm: np.ndarray):
    q = P @ Wm
    pos = Wm > 0
    logw = np.where(pos, np.log(np.where(pos, Wm, 1.0)), 0.0)
    with np.errstate(divide="ignore"):
        logq = np.log(q)
    live = pos[None] & (q > 0)[:, None, :]
    i = np.where(live, logw[None] - np.where(q > 0, logq, 0.0)[:, None, :], 0.0)
    joint = P[:, :, None] * Wm[None]
    mean = (joint * i).sum(axis=(1, 2))
    var = (joint * (i - mean[:, None, None]) ** 2).sum(axis=(1, 2))
    return mean, var


def _mi_var_point(p, Wm, logw, pos):
    q = p @ Wm
    with np.errstate(divide="ignore"):
        logq = np.log(q)
    i = np.where(pos & (q > 0), logw - np.where(q > 0, logq, 0.0), 0.0)
    joint = p[:, None] * Wm
    mean = float((joint * i).sum())
    return mean, float((joint * (i - mean) ** 2).sum())


def dispersion_brute(W: Channel, cap: CapacityResult, grid_step: float = 0.02) -> DispersionResult:
    """Direct minimization of ``sigma^2(P, W)`` over near-capacity P.

    Independent of the LP reduction: a simplex grid seeds a penalized local
    search on ``sigma^2(P,W) + mu * (C - I(P;W))`` with ``mu`` driven up to
    1e10, and the best point with ``C - I <= tol_kkt`` wins.
    """
    k = W.input_size
    if k > 4:
        raise AlphabetTooLarge("dispersion_brute supports at most 4 inputs")
    Wm = W.probabilities
    C = cap.C
    if k == 1:
        p = np.ones(1)
        return _warn_if_zero(DispersionResult(0.0, InputDistribution(p),
                                              per_letter_variances(W, cap.Q_star), "brute"))
    grid = _simplex_grid(k, grid_step)
    mi, var = _mi_var_batch(grid, Wm)
    gap = C - mi
    exact = np.flatnonzero(np.abs(gap) <= cap.tol_kkt)
    nearest = np.argsort(gap, kind="stable")[:8]
    seeds = [grid[i] for i in np.unique(np.concatenate([exact, nearest]))]
    seeds.append(cap.P_star.weights)

    def to_p(z):
        e = np.exp(z - z.max())
        return e / e.sum()

    pos = Wm > 0
    logw = np.where(pos, np.log(np.where(pos, Wm, 1.0)), 0.0)

    def objective(z, mu):
        m, v = _mi_var_point(to_p(z), Wm, logw, pos)
        return v + mu * max(0.0, C - m)

    candidates = []
    for s in seeds:
        z = np.log(np.clip(s, 1e-300, None))
        z = np.maximum(z, z.max() - 60.0)
        for mu in (1e2, 1e4, 1e6, 1e8, 1e10):
            r = minimize(objective, z, args=(mu,), method="Nelder-Mead",
                         options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000, "maxfev": 4000})
            z = r.x
        p = to_p(z)
        m, v = _mi_var_point(p, Wm, logw, pos)
        candidates.append((C - m, v, p))
    feasible = [c for c in candidates if c[0] <= cap.tol_kkt]
    pool = feasible if feasible else candidates
    _, best_var, best_p = min(pool, key=lambda c: (c[1], tuple(c[2])))
    return _warn_if_zero(DispersionResult(
        sigma_sq=max(0.0, best_var),
        minimizer=InputDistribution.normalized(best_p),
        per_letter_variance=per_letter_variances(W, cap.Q_star),
        method="brute",
    ))
