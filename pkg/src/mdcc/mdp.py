"""Moderate-deviations analysis: rate schedules, normalized exponents and diagnostics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import ConverseConstants, com_lower, constant_A, log_gallager_upper
from .capacity import ZERO_DISPERSION, capacity, channel_dispersion
from .channel import Channel
from .errors import DomainError, InapplicableYet, InvalidSchedule, ZeroDispersion
from .exponents import esp_exponent
from .gallager import ThirdDerivativeBound, third_derivative_bound
from .parallel import ordered_map


@dataclass(frozen=True)
class RateSchedule:
    """Back-off schedule ``eps_n``; ``power_law`` is ``a n^(-t)``, ``table`` is user supplied."""

    kind: str
    a: float = 1.0
    t: float = 1.0 / 3.0
    table: tuple = ()
    note: str = ""

    def __call__(self, n: int) -> float:
        if self.kind == "power_law":
            return self.a * float(n) ** (-self.t)
        for k, v in self.table:
            if k == n:
                return v
        raise DomainError(f"blocklength {n} not in the schedule table")


def make_schedule(a: float, t: float) -> RateSchedule:
    """``eps_n = a n^(-t)``; needs ``0 < t < 1/2`` so that ``eps_n -> 0`` and ``eps_n sqrt(n) -> inf``."""
    if not a > 0:
        raise InvalidSchedule("schedule scale a must be positive")
    if not 0.0 < t < 0.5:
        raise InvalidSchedule(f"exponent t={t} outside (0, 1/2): need eps_n -> 0 and eps_n*sqrt(n) -> inf")
    return RateSchedule(kind="power_law", a=float(a), t=float(t))


def table_schedule(pairs) -> RateSchedule:
    """Schedule from explicit ``(n, eps_n)`` pairs.

    Only the supplied range can be checked: ``eps_n`` must decrease and
    ``eps_n sqrt(n)`` must increase along it.  The tail is unvalidated.
    """
    rows = sorted((int(n), float(e)) for n, e in pairs)
    if not rows:
        raise InvalidSchedule("empty schedule table")
    ns = np.array([r[0] for r in rows], dtype=float)
    es = np.array([r[1] for r in rows])
    if np.any(es <= 0) or np.any(np.diff(es) >= 0) or np.any(np.diff(es * np.sqrt(ns)) <= 0):
        raise InvalidSchedule("table must have eps_n decreasing and eps_n*sqrt(n) increasing")
    return RateSchedule(kind="table", table=tuple(rows), note="unvalidated tail")


@dataclass(frozen=True)
class MdpParameters:
    schedule: RateSchedule
    gamma: float
    consts: ConverseConstants
    M: ThirdDerivativeBound
    sigma_sq: float
    C: float
    target: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "target", -1.0 / (2.0 * self.sigma_sq))

    @property
    def lower_target(self) -> float:
        return self.target / (1.0 - self.gamma)


def mdp_parameters(W: Channel, schedule: RateSchedule, gamma: float = 0.1, restarts: int = 8,
                   seed: int = 0, threads: int | None = None) -> MdpParameters:
    """Assemble every channel constant the normalized bounds need."""
    cap = capacity(W)
    disp = channel_dispersion(W, cap)
    if disp.sigma_sq <= ZERO_DISPERSION:
        raise ZeroDispersion("moderate-deviations analysis requires sigma^2(W) > 0")
    consts = constant_A(W, restarts=max(restarts, 8), seed=seed, gamma=gamma, threads=threads)
    M = third_derivative_bound(W, restarts=max(restarts, 8), seed=seed, threads=threads)
    return MdpParameters(schedule=schedule, gamma=gamma, consts=consts, M=M,
                         sigma_sq=disp.sigma_sq, C=cap.C)


def _eps(n, params):
    if n < 1:
        raise DomainError("n must be positive")
    eps = params.schedule(n)
    if params.C - eps <= 0:
        raise InapplicableYet(f"n={n}: eps_n={eps:.6g} leaves no positive rate below capacity")
    return eps


def upper_normalized(n: int, params: MdpParameters, W: Channel) -> float:
    """``log(gallager_upper(n, C - eps_n)) / (n eps_n^2)``."""
    eps = _eps(n, params)
    return min(0.0, log_gallager_upper(n, params.C - eps, W)) / (n * eps * eps)


def taylor_envelope(n: int, params: MdpParameters) -> float:
    """Closed-form envelope ``log4/(n eps^2) - (1 - M eps / (3 sigma^4)) / (2 sigma^2)``."""
    eps = _eps(n, params)
    s2 = params.sigma_sq
    return math.log(4.0) / (n * eps * eps) - (1.0 - params.M.M * eps / (3.0 * s2 * s2)) / (2.0 * s2)


def lower_normalized(n: int, params: MdpParameters, W: Channel) -> float:
    """``log(com_lower form b) / (n eps_n^2)`` at ``R_n = C - eps_n``."""
    eps = _eps(n, params)
    res = com_lower(n, params.C - eps, None, params.gamma, params.consts, W)
    return res.log_b / (n * eps * eps)


def esp_ratio(delta: float, W: Channel) -> float:
    """``E_SP(C - delta) / delta^2``."""
    C = capacity(W).C
    if not 0.0 < delta < C:
        raise DomainError("delta must lie in (0, C)")
    pt = esp_exponent(C - delta, W)
    if not pt.esp_finite:
        return math.inf
    return pt.E_SP / (delta * delta)


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    eps_n: float
    R_n: float
    upper_norm: float | None
    lower_norm: float | None
    taylor_env: float | None
    gap_upper: float | None
    gap_lower: float | None

    @property
    def applicable(self) -> bool:
        return self.lower_norm is not None


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple
    target: float
    lower_target: float

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CONVERGENCE_COLUMNS)
        g = lambda x: "" if x is None else "%.17g" % x
        for r in self.rows:
            w.writerow([r.n, g(r.eps_n), g(r.R_n), g(r.upper_norm), g(r.lower_norm), g(r.taylor_env),
                        g(r.gap_upper), g(r.gap_lower), "1" if r.applicable else "0"])
        return buf.getvalue()

    def trend_violations(self) -> dict:
        """Count rows where a gap fails to shrink relative to the previous applicable row."""
        out = {}
        for name in ("gap_upper", "gap_lower"):
            vals = [getattr(r, name) for r in self.rows if getattr(r, name) is not None]
            out[name] = int(sum(1 for a, b in zip(vals, vals[1:]) if not b < a))
        return out


CONVERGENCE_COLUMNS = ["n", "eps_n", "R_n", "upper_norm", "lower_norm", "taylor_env",
                       "gap_upper", "gap_lower", "applicable"]


def convergence_report(n_grid, params: MdpParameters, W: Channel, threads: int | None = None) -> ConvergenceReport:
    grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("n_grid must be increasing")

    def row(n):
        eps = params.schedule(n)
        R = params.C - eps
        try:
            up = upper_normalized(n, params, W)
            env = taylor_envelope(n, params)
        except InapplicableYet:
            up = env = None
        try:
            lo = lower_normalized(n, params, W)
        except InapplicableYet:
            lo = None
        return ConvergenceRow(
            n=n, eps_n=eps, R_n=R, upper_norm=up, lower_norm=lo, taylor_env=env,
            gap_upper=None if up is None else abs(up - params.target),
            gap_lower=None if lo is None else abs(lo - params.lower_target),
        )

    return ConvergenceReport(rows=tuple(ordered_map(row, grid, threads)),
                             target=params.target, lower_target=params.lower_target)
