"""Explicit block codes: exact error by enumeration, Monte Carlo, theorem-instance checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import beta

from . import kernels
from .bounds import ConverseConstants, gallager_upper
from .capacity import capacity
from .channel import (
    Channel,
    InputDistribution,
    TestChannel,
    as_weights,
    binary_entropy,
    composition,
    info_density_variance,
    information_density,
    mutual_information,
    paired_row_divergences,
)
from .errors import (
    DomainError,
    EnumerationTooLarge,
    HypothesisFails,
    NonIntegralComposition,
    ShapeMismatch,
    ZeroCorrectProbability,
)
from .gallager import prepared
from .parallel import ordered_map, substream

ENUMERATION_LIMIT = 20_000_000
MC_BLOCK = 4096


def _codeword_array(cw) -> np.ndarray:
    a = np.asarray(cw, dtype=np.int64)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ShapeMismatch("codewords must form a nonempty M x n array")
    if a.min() < 0:
        raise DomainError("negative input symbol")
    a = a.astype(np.uint8) if a.max() < 256 else a
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Codebook:
    codewords: np.ndarray
    composition_tag: InputDistribution | None = None

    def __post_init__(self):
        cw = _codeword_array(self.codewords)
        object.__setattr__(self, "codewords", cw)
        if self.composition_tag is not None:
            tag = self.composition_tag.weights
            k = tag.size
            for row in cw:
                counts = np.bincount(row.astype(np.int64), minlength=k)
                if counts.size != k or np.any(np.abs(counts - tag * self.n) > 1e-9):
                    raise NonIntegralComposition("codeword composition differs from the tag")

    @property
    def n(self) -> int:
        return self.codewords.shape[1]

    @property
    def M(self) -> int:
        return self.codewords.shape[0]

    @property
    def rate(self) -> float:
        return math.log(self.M) / self.n

    def to_dict(self) -> dict:
        out = {"n": self.n, "codewords": self.codewords.astype(int).tolist()}
        if self.composition_tag is not None:
            out["composition"] = self.composition_tag.weights.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Codebook":
        cw = data["codewords"]
        if "n" in data and any(len(c) != int(data["n"]) for c in cw):
            raise ShapeMismatch("codeword length differs from n")
        tag = data.get("composition")
        return cls(np.asarray(cw), InputDistribution(tag) if tag is not None else None)


def load_codebook(path) -> Codebook:
    return Codebook.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class Decoder:
    """Decoding rule: ML under a design channel, or an explicit output table.

    Ties always resolve to the lowest message index.
    """

    rule: str
    codebook: Codebook
    channel: TestChannel | None = None
    table: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def region_table(self) -> np.ndarray:
        """Decoded message for every output sequence (position 0 most significant)."""
        if self.table is not None:
            return self.table
        if "table" not in self._cache:
            Y = self.channel.output_size
            _guard(Y, self.codebook.n)
            logw, pos = _log_pos(self.channel)
            self._cache["table"] = kernels.ml_table(self.codebook.codewords, logw, pos, Y)
        return self._cache["table"]

    def decode(self, ys) -> np.ndarray:
        """Decode output sequences given as an (S, n) integer array."""
        ys = np.atleast_2d(np.asarray(ys, dtype=np.int64))
        Y = self.output_size
        idx = np.zeros(ys.shape[0], dtype=np.int64)
        for i in range(ys.shape[1]):
            idx = idx * Y + ys[:, i]
        if self.table is not None or "table" in self._cache:
            return self.region_table()[idx]
        logw, pos = _log_pos(self.channel)
        return kernels.numpy_impl._argmax_lowest(
            kernels.numpy_impl._scores(self.codebook.codewords.astype(np.int64), ys, logw, pos))

    @property
    def output_size(self) -> int:
        if self.channel is not None:
            return self.channel.output_size
        return int(round(self.table.size ** (1.0 / self.codebook.n)))


def _log_pos(V: TestChannel):
    if isinstance(V, Channel):
        return prepared(V)
    Vm = V.probabilities
    pos = Vm > 0
    logw = np.zeros_like(Vm)
    logw[pos] = np.log(Vm[pos])
    return logw, pos


def _guard(Y: int, n: int):
    if Y ** n > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(f"|Y|^n = {Y}^{n} exceeds {ENUMERATION_LIMIT}")


def ml_decoder(cb: Codebook, W: TestChannel) -> Decoder:
    """Maximum-likelihood decoder under W (log-domain, ties to the lowest index)."""
    if cb.codewords.max() >= W.input_size:
        raise ShapeMismatch("codeword symbol outside the channel input alphabet")
    return Decoder(rule="ml_under_W", codebook=cb, channel=W)


def table_decoder(cb: Codebook, table, output_size: int) -> Decoder:
    t = np.asarray(table, dtype=np.int64)
    if t.shape != (output_size ** cb.n,) or t.min() < 0 or t.max() >= cb.M:
        raise ShapeMismatch("decoding table must map every output sequence to a message")
    t.setflags(write=False)
    return Decoder(rule="explicit_table", codebook=cb, table=t)


@dataclass(frozen=True)
class CodeErrorReport:
    per_message: np.ndarray
    average: float
    maximal: float
    channel_used: str
    method: str
    trials: int | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    per_message_ci: np.ndarray | None = None


def _check_channel(cb: Codebook, dec: Decoder, V: TestChannel):
    if cb.codewords.max() >= V.input_size:
        raise ShapeMismatch("codeword symbol outside the channel input alphabet")
    if V.output_size != dec.output_size:
        raise ShapeMismatch("channel output alphabet differs from the decoder's")


def confusion_masses(cb: Codebook, dec: Decoder, V: TestChannel) -> np.ndarray:
    """``mass[m, k] = V^n(phi^{-1}(k) | x^n(m))`` by full enumeration."""
    _check_channel(cb, dec, V)
    Y = V.output_size
    _guard(Y, cb.n)
    table = dec.region_table()
    mass = kernels.region_masses(cb.codewords, np.ascontiguousarray(V.probabilities), table, Y)
    tot = mass.sum(axis=1)
    if np.any(np.abs(tot - 1.0) > 1e-9):
        raise RuntimeError("output enumeration lost probability mass")
    return mass


def exact_error(cb: Codebook, dec: Decoder, V: TestChannel, tag: str = "V") -> CodeErrorReport:
    mass = confusion_masses(cb, dec, V)
    # summing the off-diagonal directly avoids cancellation for tiny errors
    e = np.clip(np.array([mass[m, np.arange(cb.M) != m].sum() for m in range(cb.M)]), 0.0, 1.0)
    return CodeErrorReport(per_message=e, average=float(e.mean()), maximal=float(e.max()),
                           channel_used=tag, method="exact")


def random_codebook(P, n: int, M: int, seed: int) -> Codebook:
    """``M`` codewords with i.i.d. letters drawn from P."""
    p = as_weights(P)
    if n < 1 or M < 1:
        raise DomainError("need n >= 1 and M >= 1")
    rng = substream(seed, 0)
    return Codebook(rng.choice(p.size, size=(M, n), p=p / p.sum()))


def constant_composition_codebook(type_, n: int, M: int, seed: int) -> Codebook:
    """``M`` uniformly random arrangements of the multiset fixed by ``n * type``."""
    t = as_weights(type_)
    raw = t * n
    counts = np.rint(raw).astype(np.int64)
    if np.any(np.abs(raw - counts) > 1e-9) or counts.sum() != n:
        raise NonIntegralComposition(f"n * type = {raw.tolist()} is not integral")
    base = np.repeat(np.arange(t.size), counts)
    rows = [substream(seed, m).permutation(base) for m in range(M)]
    return Codebook(np.array(rows), InputDistribution(counts / n))


def clopper_pearson(k: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, trials - k + 1))
    hi = 1.0 if k == trials else float(beta.ppf(1 - a / 2, k + 1, trials - k))
    return lo, hi


def _clopper_pearson_many(k: np.ndarray, trials: np.ndarray, level: float = 0.95) -> np.ndarray:
    """Row-wise intervals; rows with zero trials get ``(0, 1)``."""
    a = 1.0 - level
    k = k.astype(float)
    t = trials.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        lo = np.where(k > 0, beta.ppf(a / 2, np.maximum(k, 1), t - k + 1), 0.0)
        hi = np.where(k < t, beta.ppf(1 - a / 2, k + 1, np.maximum(t - k, 1)), 1.0)
    return np.column_stack([np.nan_to_num(lo, nan=0.0), np.nan_to_num(hi, nan=1.0)])


def _cdf(V: TestChannel) -> np.ndarray:
    Vm = V.probabilities
    cdf = np.cumsum(Vm, axis=1)
    for x in range(Vm.shape[0]):
        last = np.flatnonzero(Vm[x] > 0)[-1]
        cdf[x, last:] = 1.0
    return np.ascontiguousarray(cdf)


def monte_carlo_error(cb: Codebook, dec: Decoder, W: TestChannel, trials: int, seed: int,
                      threads: int | None = None, tag: str = "W") -> CodeErrorReport:
    """Seeded Monte Carlo error estimate with Clopper-Pearson 95% intervals.

    Trial ``t`` sends message ``t mod M``; block ``b`` of trials draws its
    uniforms from the stream ``(seed, b)``, so results do not depend on the
    worker count.
    """
    if trials < 100:
        raise DomainError("monte_carlo_error needs at least 100 trials")
    _check_channel(cb, dec, W)
    cdf = _cdf(W)
    cw = cb.codewords
    blocks = [(b, min(MC_BLOCK, trials - b * MC_BLOCK)) for b in range((trials + MC_BLOCK - 1) // MC_BLOCK)]
    if dec.rule == "ml_under_W":
        logw, pos = _log_pos(dec.channel)
    Y = W.output_size

    def run(block):
        b, size = block
        msgs = (np.arange(size, dtype=np.int64) + b * MC_BLOCK) % cb.M
        u = substream(seed, b).random((size, cb.n))
        if dec.rule == "ml_under_W":
            out = kernels.mc_decode(cw, msgs, u, cdf, logw, pos)
        else:
            x = cw[msgs].astype(np.int64)
            ys = np.minimum((u[:, :, None] >= cdf[x]).sum(axis=2), Y - 1)
            out = dec.decode(ys)
        errs = np.bincount(msgs[out != msgs], minlength=cb.M)
        sent = np.bincount(msgs, minlength=cb.M)
        return errs, sent

    res = ordered_map(run, blocks, threads)
    errs = np.sum([r[0] for r in res], axis=0)
    sent = np.sum([r[1] for r in res], axis=0)
    per = np.where(sent > 0, errs / np.maximum(sent, 1), 0.0)
    k = int(errs.sum())
    lo, hi = clopper_pearson(k, trials)
    per_ci = _clopper_pearson_many(errs, sent)
    return CodeErrorReport(per_message=per, average=k / trials, maximal=float(per.max()),
                           channel_used=tag, method="monte_carlo", trials=trials,
                           ci_low=lo, ci_high=hi, per_message_ci=per_ci)


@dataclass(frozen=True)
class StrongConverseVerdict:
    verdict: str
    hypothesis_holds: bool
    rate: float
    mutual_info: float
    delta: float
    average_error: float
    bound: float
    margin: float
    tail_masses: np.ndarray
    chebyshev_bound: float
    chebyshev_margins: np.ndarray

    def to_dict(self) -> dict:
        return {
            "check": "strong_converse",
            "verdict": self.verdict,
            "hypothesis_holds": self.hypothesis_holds,
            "rate": self.rate,
            "mutual_info": self.mutual_info,
            "delta": self.delta,
            "average_error": self.average_error,
            "bound": self.bound,
            "margin": self.margin,
            "chebyshev_bound": self.chebyshev_bound,
            "chebyshev_margins": self.chebyshev_margins.tolist(),
        }


def verify_lemma31(cb: Codebook, dec: Decoder, V: TestChannel, delta: float,
                   consts: ConverseConstants) -> StrongConverseVerdict:
    """Check the strong-converse bound and its Chebyshev step on an explicit code.

    Needs a constant-composition code and ``I(P_n; V) <= log(M)/n - 2 delta``;
    otherwise HypothesisFails is raised and nothing is claimed.
    """
    if delta <= 0:
        raise DomainError("delta must be positive")
    if cb.composition_tag is None:
        P, _ = composition(cb.codewords[0], V.input_size)
        for row in cb.codewords[1:]:
            if composition(row, V.input_size)[0] != P:
                raise HypothesisFails("code is not constant composition")
    else:
        P = cb.composition_tag
    p = np.zeros(V.input_size)
    p[: P.weights.size] = P.weights
    R = cb.rate
    I = mutual_information(p, V.probabilities)
    if I > R - 2.0 * delta:
        raise HypothesisFails(f"I(P;V) = {I:.6g} exceeds R - 2 delta = {R - 2 * delta:.6g}")
    n = cb.n
    err = exact_error(cb, dec, V)
    bound = 1.0 - consts.A / (n * delta * delta) - math.exp(-n * delta)
    dens = np.ascontiguousarray(information_density(p, V.probabilities))
    thr = np.full(cb.M, n * (I + delta))
    tails = kernels.density_tail_masses(cb.codewords, np.ascontiguousarray(V.probabilities), dens, thr,
                                        V.output_size)
    cheb = info_density_variance(p, V.probabilities) / (n * delta * delta)
    cheb_margin = cheb - tails
    slack = 1e-12
    ok = err.average >= bound - slack and bool(np.all(cheb_margin >= -slack))
    return StrongConverseVerdict(
        verdict="PASS" if ok else "FAIL",
        hypothesis_holds=True,
        rate=R,
        mutual_info=I,
        delta=delta,
        average_error=err.average,
        bound=bound,
        margin=err.average - bound,
        tail_masses=tails,
        chebyshev_bound=cheb,
        chebyshev_margins=cheb_margin,
    )


@dataclass(frozen=True)
class ChangeOfMeasureVerdict:
    verdict: str
    message: int
    v_correct: float
    w_correct: float
    w_error: float
    divergence: float
    lhs: float
    rhs: float
    margin: float
    printed_lhs: float
    printed_margin: float

    def to_dict(self) -> dict:
        return {"check": "change_of_measure", **{k: getattr(self, k) for k in (
            "verdict", "message", "v_correct", "w_correct", "w_error", "divergence",
            "lhs", "rhs", "margin", "printed_lhs", "printed_margin")}}


def _xlog_inv(a: float, b: float) -> float:
    """``a log(1/b)`` with ``0 log(1/0) = 0``."""
    if a == 0.0:
        return 0.0
    if b <= 0.0:
        return math.inf
    return -a * math.log(b)


def verify_eq34(cb: Codebook, dec: Decoder, m: int, V: TestChannel, W: Channel) -> ChangeOfMeasureVerdict:
    """Log-sum change-of-measure inequality for message ``m``.

    With ``a = V^n(region_m | x^n(m))`` the checked inequality is
    ``(1 - a) log(1 / W^n(complement)) <= D(V^n || W^n | x^n(m)) + h(a)``,
    which is what the log-sum inequality yields.  The variant with the
    correct-decoding mass ``W^n(region_m)`` inside the logarithm is reported
    as ``printed_lhs`` for reference; it is not valid in general.
    """
    if not 0 <= m < cb.M:
        raise DomainError("message index out of range")
    mv = confusion_masses(cb, dec, V)[m]
    mw = confusion_masses(cb, dec, W)[m]
    a = float(mv[m])
    w_corr = float(mw[m])
    if w_corr <= 0.0:
        raise ZeroCorrectProbability(f"message {m} has zero correct-decoding probability under W")
    w_err = float(mw[np.arange(cb.M) != m].sum())
    v_err = float(mv[np.arange(cb.M) != m].sum())
    per_letter = paired_row_divergences(V.probabilities, W.probabilities)
    D = float(per_letter[cb.codewords[m].astype(np.int64)].sum())
    h = binary_entropy(min(1.0, max(0.0, a)))
    rhs = D + h
    lhs = _xlog_inv(v_err, w_err)
    printed = _xlog_inv(v_err, w_corr)
    margin = rhs - lhs if math.isfinite(rhs) else math.inf
    ok = lhs <= rhs + 1e-12
    return ChangeOfMeasureVerdict(
        verdict="PASS" if ok else "FAIL",
        message=m,
        v_correct=a,
        w_correct=w_corr,
        w_error=w_err,
        divergence=D,
        lhs=lhs,
        rhs=rhs,
        margin=margin,
        printed_lhs=printed,
        printed_margin=(rhs - printed) if math.isfinite(rhs) else math.inf,
    )


def mdp_experiment(schedule, n_list, trials: int, seed: int, W: Channel, M_cap: int = 2 ** 16,
                   threads: int | None = None) -> list[dict]:
    """Random codes at rate ``C - eps_n`` (message count capped), Monte Carlo vs the Gallager bound.

    Codewords are i.i.d. from the capacity-achieving input law; the bound is
    evaluated at the effective rate ``log(M)/n`` actually used.
    """
    cap = capacity(W)
    rows = []
    for n in n_list:
        n = int(n)
        eps = schedule(n)
        R = cap.C - eps
        M_target = math.inf if n * R > 700 else math.ceil(math.exp(max(n * R, 0.0)))
        M = int(min(M_target, M_cap))
        M = max(M, 2)
        R_eff = math.log(M) / n
        cb = random_codebook(cap.P_star, n, M, int(substream(seed, n).integers(2 ** 62)))
        rep = monte_carlo_error(cb, ml_decoder(cb, W), W, trials,
                                int(substream(seed, n, 1).integers(2 ** 62)), threads)
        upper = gallager_upper(n, R_eff, W)
        rows.append({
            "n": n,
            "eps_n": eps,
            "R_target": R,
            "R_effective": R_eff,
            "M": M,
            "capped": bool(M_target > M_cap),
            "estimate": rep.average,
            "ci_low": rep.ci_low,
            "ci_high": rep.ci_high,
            "upper_bound": upper,
            "within_bound": bool(rep.ci_low <= upper),
        })
    return rows


MDP_EXPERIMENT_COLUMNS = ["n", "eps_n", "R_target", "R_effective", "M", "capped", "estimate",
                          "ci_low", "ci_high", "upper_bound", "within_bound"]


@dataclass(frozen=True)
class CorpusInstance:
    index: int
    W: Channel
    V: TestChannel
    codebook: Codebook
    delta: float


def tiny_code_corpus(count: int = 100, seed: int = 0) -> list[CorpusInstance]:
    """Seeded tiny constant-composition codes with alphabets up to 3 and n up to 6.

    Draws are repeated (from the instance's own substream) until every ML
    decoding region is nonempty, so each message has positive correct-decoding
    probability under W.
    """
    out = []
    for i in range(count):
        g = substream(seed, i)
        while True:
            kx = int(g.integers(2, 4))
            ky = int(g.integers(2, 4))
            n = int(g.integers(2, 7))
            M = int(g.integers(2, 5))
            Wm = g.dirichlet(np.ones(ky), size=kx)
            Wm = np.clip(Wm, 1e-3, None)
            Wm /= Wm.sum(axis=1, keepdims=True)
            W = Channel(Wm)
            lam = float(g.uniform(0.5, 1.0))
            row = g.dirichlet(np.ones(ky))
            Vm = (1.0 - lam) * g.dirichlet(np.ones(ky), size=kx) + lam * row[None, :]
            V = TestChannel(Vm / Vm.sum(axis=1, keepdims=True))
            counts = g.multinomial(n, np.ones(kx) / kx)
            cb = constant_composition_codebook(counts / n, n, M, int(g.integers(2 ** 31)))
            if np.unique(ml_decoder(cb, W).region_table()).size == M:
                break
        p = counts / n
        R = math.log(M) / n
        I = mutual_information(p, V.probabilities)
        delta = 0.45 * (R - I) if R > I else 0.25 * R
        out.append(CorpusInstance(index=i, W=W, V=V, codebook=cb, delta=float(delta)))
    return out
