"""Command-line entry point: ``mdcc <command> --channel FILE ...``.

Exit codes: 0 success, 1 usage or input error, 2 numerical non-convergence,
3 a theorem-instance verdict failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .bounds import bound_csv, bound_report, constant_A
from .capacity import capacity, channel_dispersion
from .channel import TestChannel, channel_to_dict, load_channel
from .codes import (
    MDP_EXPERIMENT_COLUMNS,
    exact_error,
    load_codebook,
    mdp_experiment,
    ml_decoder,
    monte_carlo_error,
    tiny_code_corpus,
    verify_eq34,
    verify_lemma31,
)
from .errors import (
    EnumerationTooLarge,
    HypothesisFails,
    MdccError,
    NoConvergence,
    ZeroCorrectProbability,
    ZeroDispersion,
    ZeroDispersionWarning,
)
from .exponents import critical_rate, exponent_csv, exponent_curve
from .gallager import third_derivative_bound
from .mdp import convergence_report, make_schedule, mdp_parameters
from .parallel import resolve_threads

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERDICT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": "UsageError", "message": message}) + "\n")
        raise SystemExit(EXIT_USAGE)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
        return x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (frozenset, set)):
        return sorted(_jsonable(v) for v in x)
    return x


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _int_list(s: str) -> list[int]:
    try:
        return [int(float(v)) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def _float_list(s: str) -> list[float]:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _schedule(s: str):
    parts = s.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("schedule must be 'a,t'")
    try:
        a, t = float(parts[0]), _fraction(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad schedule {s!r}")
    return a, t


def _fraction(s: str) -> float:
    if "/" in s:
        num, den = s.split("/")
        return float(num) / float(den)
    return float(s)


def _positive(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("value must be positive")
    return v


def _rows_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        out = []
        for c in columns:
            v = r[c]
            if isinstance(v, bool):
                out.append("1" if v else "0")
            elif isinstance(v, float):
                out.append("%.17g" % v)
            else:
                out.append(str(v))
        w.writerow(out)
    return buf.getvalue()


def cmd_analyze(args) -> int:
    W = load_channel(args.channel)
    cap = capacity(W, tol=args.tol)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ZeroDispersionWarning)
        disp = channel_dispersion(W, cap)
    report = {
        "channel": channel_to_dict(W),
        "removed_columns": list(W.removed_columns),
        "C": cap.C,
        "capacity_gap": cap.gap,
        "P_star": cap.P_star.weights,
        "Q_star": cap.Q_star,
        "admissible_inputs": cap.admissible_inputs,
        "tol_kkt": cap.tol_kkt,
        "sigma_sq": disp.sigma_sq,
        "P_tilde": disp.minimizer.weights,
    }
    if any(issubclass(w.category, ZeroDispersionWarning) for w in caught):
        report["warning"] = "zero-dispersion"
    try:
        cr = critical_rate(W)
        report.update({"R_cr": cr.R_cr, "R_inf": cr.R_inf, "no_critical_rate": cr.no_critical_rate})
    except ZeroDispersion:
        report.update({"R_cr": None, "R_inf": None, "no_critical_rate": True})
    consts = constant_A(W, restarts=8, seed=args.seed, gamma=args.gamma, threads=args.threads)
    M = third_derivative_bound(W, seed=args.seed, threads=args.threads)
    report.update({
        "A": consts.A, "A_certified": consts.certified, "psi": consts.psi, "gamma": consts.gamma,
        "M": M.M, "M_certified": M.certified, "M_rho": M.rho_at_max, "M_P": M.P_at_max.weights,
    })
    _emit(_dump_json(report), args.out)
    return EXIT_OK


def cmd_exponents(args) -> int:
    W = load_channel(args.channel)
    C = capacity(W, tol=args.tol).C
    rates = args.rates if args.rates is not None else list(np.linspace(0.0, C, args.points))
    pts = exponent_curve(W, rates, threads=args.threads)
    if args.format == "json":
        _emit(_dump_json([{"R": p.R, "E_r": p.E_r, "E_SP": p.E_SP, "rho_star_r": p.rho_star_r,
                           "rho_star_sp": p.rho_star_sp, "finite_flag": p.esp_finite,
                           "P_star": p.P_star.weights} for p in pts]), args.out)
    else:
        _emit(exponent_csv(pts), args.out)
    return EXIT_OK


def cmd_mdp(args) -> int:
    W = load_channel(args.channel)
    sched = make_schedule(*args.schedule)
    params = mdp_parameters(W, sched, gamma=args.gamma, seed=args.seed, threads=args.threads)
    rep = convergence_report(args.n_grid, params, W, threads=args.threads)
    if args.format == "json":
        _emit(_dump_json({"target": rep.target, "lower_target": rep.lower_target,
                          "A": params.consts.A, "M": params.M.M, "heuristic_constants": True,
                          "rows": [r.__dict__ for r in rep.rows]}), args.out)
    else:
        _emit(rep.csv(), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    W = load_channel(args.channel)
    C = capacity(W, tol=args.tol).C
    sched = make_schedule(*args.schedule)
    consts = constant_A(W, restarts=8, seed=args.seed, gamma=args.gamma, threads=args.threads)
    P = channel_dispersion(W, capacity(W, tol=args.tol)).minimizer
    reports = [bound_report(n, C - sched(n), W, consts, P_n=P, eps=args.eps) for n in args.n_grid]
    if args.format == "json":
        rows = []
        for r in reports:
            c = r.lower_com
            rows.append({"n": r.n, "R": r.R, "upper": r.upper, "lower_sc": r.lower_sc,
                         "lower_com_a": c.form_a if c else None, "lower_com_b": c.form_b if c else None,
                         "normal_rate": r.normal_rate, "applicable_flag": r.applicable})
        _emit(_dump_json({"A": consts.A, "A_certified": consts.certified, "rows": rows}), args.out)
    else:
        _emit(bound_csv(reports), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    W = load_channel(args.channel)
    if args.codebook:
        cb = load_codebook(args.codebook)
        dec = ml_decoder(cb, W)
        out = {"n": cb.n, "M": cb.M, "rate": cb.rate}
        try:
            ex = exact_error(cb, dec, W, tag="W")
            out["exact"] = {"per_message": ex.per_message, "average": ex.average, "maximal": ex.maximal}
        except EnumerationTooLarge:
            out["exact"] = None
        mc = monte_carlo_error(cb, dec, W, args.trials, args.seed, threads=args.threads)
        out["monte_carlo"] = {"trials": mc.trials, "average": mc.average, "maximal": mc.maximal,
                              "ci_low": mc.ci_low, "ci_high": mc.ci_high, "per_message": mc.per_message,
                              "per_message_ci": mc.per_message_ci}
        _emit(_dump_json(out), args.out)
        return EXIT_OK
    sched = make_schedule(*args.schedule)
    rows = mdp_experiment(sched, args.n_grid, args.trials, args.seed, W, M_cap=args.max_messages,
                          threads=args.threads)
    if args.format == "json":
        _emit(_dump_json(rows), args.out)
    else:
        _emit(_rows_csv(MDP_EXPERIMENT_COLUMNS, rows), args.out)
    return EXIT_OK


def _verify_instance(cb, W, V, delta, gamma):
    dec = ml_decoder(cb, W)
    consts = constant_A(W, gamma=gamma)
    rec = {}
    try:
        rec["strong_converse"] = verify_lemma31(cb, dec, V, delta, consts).to_dict()
    except HypothesisFails as e:
        rec["strong_converse"] = {"check": "strong_converse", "verdict": "NO_CLAIM", "reason": str(e)}
    eq = []
    for m in range(cb.M):
        try:
            eq.append(verify_eq34(cb, dec, m, V, W).to_dict())
        except ZeroCorrectProbability as e:
            eq.append({"check": "change_of_measure", "message": m, "verdict": "SKIPPED", "reason": str(e)})
    rec["change_of_measure"] = eq
    return rec


def cmd_verify(args) -> int:
    results = []
    if args.codebook:
        W = load_channel(args.channel)
        V = TestChannel(load_channel(args.test_channel).probabilities) if args.test_channel else W
        cb = load_codebook(args.codebook)
        results.append({"instance": 0, **_verify_instance(cb, W, V, args.delta, args.gamma)})
    else:
        for inst in tiny_code_corpus(args.corpus_size, args.seed):
            results.append({"instance": inst.index, "n": inst.codebook.n, "M": inst.codebook.M,
                            **_verify_instance(inst.codebook, inst.W, inst.V, inst.delta, args.gamma)})
    verdicts = []
    for r in results:
        verdicts.append(r["strong_converse"]["verdict"])
        verdicts.extend(e["verdict"] for e in r["change_of_measure"])
    summary = {v: verdicts.count(v) for v in sorted(set(verdicts))}
    _emit(_dump_json({"summary": summary, "instances": results}), args.out)
    return EXIT_VERDICT if "FAIL" in summary else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mdcc", description="Moderate-deviations toolkit for discrete memoryless channels.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed_required=False, channel_required=True):
        sp.add_argument("--channel", required=channel_required, help="channel JSON file")
        sp.add_argument("--tol", type=_positive, default=1e-12, help="capacity bracket tolerance (nats)")
        sp.add_argument("--gamma", type=float, default=0.1, help="converse slack parameter in (0, 1/2)")
        sp.add_argument("--seed", type=int, required=seed_required, help="seed for randomized steps")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (else MDCC_THREADS, else 1)")
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="csv")

    def sched(sp, grid_default):
        sp.add_argument("--schedule", type=_schedule, default=(1.0, 1.0 / 3.0),
                        help="back-off eps_n = a*n^(-t), given as 'a,t'")
        sp.add_argument("--n-grid", type=_int_list, default=grid_default, help="comma-separated blocklengths")

    a = sub.add_parser("analyze", help="capacity, dispersion, critical rate and converse constants")
    common(a, seed_required=True)
    a.set_defaults(func=cmd_analyze, format="json")

    e = sub.add_parser("exponents", help="random-coding and sphere-packing exponent curve")
    common(e)
    e.add_argument("--rates", type=_float_list, default=None, help="comma-separated rates (nats)")
    e.add_argument("--points", type=int, default=21, help="grid size on [0, C] when --rates is absent")
    e.set_defaults(func=cmd_exponents)

    m = sub.add_parser("mdp", help="normalized-exponent convergence report")
    common(m, seed_required=True)
    sched(m, [10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6])
    m.set_defaults(func=cmd_mdp)

    b = sub.add_parser("bounds", help="finite-blocklength bound table along a schedule")
    common(b, seed_required=True)
    sched(b, [10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6])
    b.add_argument("--eps", type=float, default=0.1, help="target error for the normal approximation")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("simulate", help="Monte Carlo simulation of an explicit or random code")
    common(s, seed_required=True)
    sched(s, [100, 200])
    s.add_argument("--codebook", default=None, help="codebook JSON; omit to run the random-code experiment")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--max-messages", type=int, default=4096, help="message-count cap for random codes")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="theorem-instance checks on explicit or corpus codes")
    common(v, seed_required=True, channel_required=False)
    v.add_argument("--codebook", default=None, help="codebook JSON (needs --channel)")
    v.add_argument("--test-channel", default=None, help="auxiliary channel V (default: the channel itself)")
    v.add_argument("--delta", type=_positive, default=0.05)
    v.add_argument("--corpus-size", type=int, default=100)
    v.set_defaults(func=cmd_verify, format="json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "codebook", None) and args.command == "verify" and not args.channel:
        parser.error("--codebook requires --channel")
    if args.threads is not None:
        args.threads = resolve_threads(args.threads)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ZeroDispersionWarning)
            return args.func(args)
    except NoConvergence as e:
        sys.stderr.write(json.dumps(_jsonable({"error": "NoConvergence", "message": str(e),
                                               "payload": e.payload})) + "\n")
        return EXIT_NUMERIC
    except (MdccError, ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
