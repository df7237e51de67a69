"""Run a declarative experiment and write its report bundle.

Outputs (all CSV floats with 17 significant digits):

``tail.csv``      seed, x, p_hat, hits, n_effective, ci_low, ci_high, batches, burn_in, no_hits
``bounds.csv``    x, lower, upper, asymptotic and the label of each form
``verdict.csv``   check, seed, x, passed, counted, detail
``bigjump.csv``   seed, x, window, slope, a_hat, conditioning_events, matched_events, frequency
``hill.csv``      seed, fraction, m, alpha_hat, samples_used, predicted
``moments.csv``   seed, gamma, prefix, estimate, ratio, stabilizing, predicted
``majorant.csv``  seed, t, count, frequency, slope
``coupling.csv``  seed, steps, violations
``slln.csv``      seed, servers, n, w_min_over_n, w_max_over_n, target
``qk.csv``        held, count, hand_example
``bigjump_trace.csv`` (with trace) seed, x, n, lag_1..lag_{s-k}

Only verdicts with ``counted = 1`` decide the exit status; the others are
reported for information (for instance tail points the run cannot resolve).
"""
from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bounds import bound_report, moment_condition
from .config import ConfigError, ExperimentConfig
from .dist import Deterministic, Pareto, tail_class
from .estimate import (
    TailCounter,
    Thinner,
    default_burn_in,
    empirical_moment,
    hill_sensitivity,
    majorant_exceedance_profile,
    make_bigjump_scanner,
    run_stationary,
    sandwich_verdict,
)
from .queue import QueueConfig, coupled_comparison, majorant_coupled_path, unstable_drift
from .verify import suite_qk

TRACE_CAP = 10_000


class RunRefused(RuntimeError):
    pass


def validate(exp: ExperimentConfig) -> QueueConfig:
    """Check the preconditions of everything the config asks for."""
    cfg = exp.queue_config()
    degenerate = cfg.service.mean == 0.0
    if degenerate:
        return cfg
    if cfg.integer_rho:
        raise ConfigError(f"integer rho outside theorem hypotheses (rho={cfg.rho:g}; the bounds need k < rho < k+1)")
    if not cfg.stable:
        raise ConfigError(f"stationary estimation requires rho < s (stability), got rho={cfg.rho:g}, s={cfg.s}")
    d = exp.diagnostics
    det = isinstance(cfg.interarrival, Deterministic)
    if "bigjump" in d:
        if not det:
            raise ConfigError("big-jump diagnostic needs deterministic interarrival times (big-jump theorem setting)")
        if not tail_class(cfg.service).irv:
            raise ConfigError("big-jump theorem requires an intermediate regularly varying service law")
    if "majorant" in d and not det:
        raise ConfigError("majorant lemma requires deterministic interarrival times")
    if "slln" in d and cfg.k < 1:
        raise ConfigError("SLLN diagnostic uses the k-server subsystem and needs rho > 1 (k >= 1)")
    if "moments" in d and isinstance(cfg.service, Deterministic):
        raise ConfigError("moment criterion presumes an unbounded service law")
    h = exp.bounds["h"]
    if h != "midpoint" and ("bigjump" in d or "majorant" in d):
        b, a, k = cfg.b, cfg.a, cfg.k
        lo, hi = k / (k + 1) * (a - b / (k + 1)), a - b / (k + 1)
        if not lo < h < hi:
            raise ConfigError(f"h={h} outside the admissible interval ({lo:g}, {hi:g}) of the majorant construction")
    return cfg


@dataclass
class SeedResult:
    seed: int
    tail: list
    bigjump: list = field(default_factory=list)
    hill: list = field(default_factory=list)
    moments: list = field(default_factory=list)
    majorant: object = None
    coupling: object = None
    slln: object = None


def _run_seed(exp: ExperimentConfig, cfg: QueueConfig, seed: int, trace: bool) -> SeedResult:
    n = exp.run["n"]
    burn = exp.burn_in()
    burn = default_burn_in(n) if burn is None else burn
    xs = exp.xs()
    d = exp.diagnostics
    h = None if exp.bounds["h"] == "midpoint" else exp.bounds["h"]
    counter = TailCounter(xs, n, burn, exp.run["batches"])
    consumers = [counter]
    scanners = []
    if "bigjump" in d:
        bx = d["bigjump"]["x"] or list(xs)
        win = d["bigjump"]["window"] or None
        for x in bx:
            scanners.append(make_bigjump_scanner(cfg, x, burn, win, h, d["bigjump"]["slope"], TRACE_CAP if trace else 0))
        consumers += scanners
    hill_thin = mom_thin = None
    if "hill" in d:
        hill_thin = Thinner(burn, d["hill"]["every"])
        consumers.append(hill_thin)
    if "moments" in d:
        mom_thin = Thinner(burn, 1, d["moments"]["n"])
        consumers.append(mom_thin)
    run_stationary(cfg, n, seed, consumers, chunk=exp.run["chunk"])
    out = SeedResult(seed, counter.result(), [s.result() for s in scanners])
    if hill_thin is not None:
        sample = hill_thin.result()
        out.hill = list(zip(d["hill"]["fractions"], hill_sensitivity(sample, d["hill"]["fractions"])))
    if mom_thin is not None:
        sample = mom_thin.result()
        out.moments = [empirical_moment(sample, g, tol=d["moments"]["tolerance"]) for g in d["moments"]["gamma"]]
    if "majorant" in d:
        t = d["majorant"]["t"] or list(np.linspace(0.0, cfg.a, 21))
        nm = d["majorant"]["n"]
        path = majorant_coupled_path(cfg, nm, seed, h)
        out.majorant = majorant_exceedance_profile(path, t, burn_in=min(default_burn_in(nm), nm // 10))
    if "coupling" in d:
        tt = Deterministic(cfg.a * d["coupling"]["ratio"])
        out.coupling = coupled_comparison(cfg.s, cfg.service, tt, cfg.interarrival, d["coupling"]["n"], seed,
                                          record=False)
    if "slln" in d:
        sub = QueueConfig(cfg.k, cfg.interarrival, cfg.service)
        out.slln = (sub.s, d["slln"]["n"], *unstable_drift(sub, d["slln"]["n"], seed))
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


@dataclass
class Verdict:
    check: str
    seed: int | None
    x: float | None
    passed: bool
    counted: bool
    detail: str


def _verdicts(exp: ExperimentConfig, cfg: QueueConfig, report, results: list[SeedResult], qk) -> list[Verdict]:
    out = []
    b = exp.bounds
    d = exp.diagnostics
    for r in results:
        for v in sandwich_verdict(r.tail, report, b["slack"], b["power_hits"]):
            detail = f"p_hat={v.p_hat:.6g} band=[{v.lower:.6g}, {v.upper:.6g}] slack={b['slack']:g}"
            if not v.powered:
                detail += " (not powered)"
            out.append(Verdict("sandwich", r.seed, v.x, v.passed, v.powered or report.lower_label.startswith("degenerate"),
                               detail))
        if "bigjump" in d:
            powered = [j for j in r.bigjump if j.conditioning_events >= b["power_hits"]]
            freqs = [j.frequency for j in powered]
            mono = all(f1 >= f0 for f0, f1 in zip(freqs, freqs[1:]))
            top = freqs[-1] if freqs else None
            ok = bool(powered) and mono and top >= d["bigjump"]["threshold"]
            detail = "frequencies " + ", ".join(f"{j.x:g}:{j.frequency if j.frequency is not None else 'n/a'}" for j in r.bigjump)
            out.append(Verdict("bigjump", r.seed, powered[-1].x if powered else None, ok, True,
                               detail + ("" if powered else " (no powered x)")))
        if r.hill:
            pred = _hill_prediction(cfg)
            for frac, est in r.hill:
                counted = pred is not None and math.isclose(frac, 0.01)
                ok = pred is None or abs(est.alpha_hat - pred) <= d["hill"]["tolerance"]
                out.append(Verdict("hill", r.seed, None, ok, counted,
                                   f"m={est.m} alpha_hat={est.alpha_hat:.4f} predicted={pred}"))
        for mr in r.moments:
            pred = moment_condition(mr.gamma, cfg.service, cfg.s, cfg.k)
            counted = pred != "undecided"
            ok = (mr.stabilizing == (pred == "finite")) if counted else True
            out.append(Verdict("moments", r.seed, None, ok, counted,
                               f"gamma={mr.gamma:g} stabilizing={mr.stabilizing} predicted={pred} "
                               f"ratios={[round(x, 4) for x in mr.ratios]}"))
        if r.majorant is not None:
            p = r.majorant
            usable = np.flatnonzero(p.counts >= 50)
            top_f = float(p.frequency[usable[-1]]) if len(usable) else None
            ok = p.slope is not None and p.slope < 0 and top_f < d["majorant"]["max_frequency"]
            out.append(Verdict("majorant", r.seed, None, ok, True,
                               f"slope={p.slope} frequency_at_largest_powered_t={top_f}"))
        if r.coupling is not None:
            out.append(Verdict("coupling", r.seed, None, r.coupling.violations == 0, True,
                               f"violations={r.coupling.violations}"))
        if r.slln is not None:
            k, n, lo, hi = r.slln
            target = (cfg.b - k * cfg.a) / k
            tol = d["slln"]["tolerance"]
            ok = abs(lo - target) < tol * target and abs(hi - target) < tol * target
            out.append(Verdict("slln", r.seed, None, ok, True, f"W_min/n={lo:.6g} W_max/n={hi:.6g} target={target:.6g}"))
    if qk is not None:
        out.append(Verdict("qk", None, None, qk.passed, True, qk.summary))
    return out


def _hill_prediction(cfg: QueueConfig):
    if isinstance(cfg.service, Pareto):
        return (cfg.s - cfg.k) * (cfg.service.alpha - 1.0)
    return None


def _check_directory(outdir: str, digest: str, force: bool) -> None:
    path = os.path.join(outdir, "manifest.json")
    if not os.path.exists(path) or force:
        return
    try:
        with open(path) as fh:
            old = json.load(fh).get("config_hash")
    except (OSError, ValueError):
        old = None
    if old != digest:
        raise RunRefused(f"{outdir} holds a run of a different config (hash {old}); use --force to overwrite")


def versions() -> dict:
    import numba
    import scipy

    return {"kwqueue": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


@dataclass
class RunOutcome:
    exit_code: int
    directory: str
    verdicts: list
    results: list
    report: object


def run_experiment(exp: ExperimentConfig, *, seeds=None, threads: int = 1, force: bool = False, trace: bool = False,
                   directory: str | None = None) -> RunOutcome:
    if seeds is not None:
        exp = exp.with_seeds(seeds)
    cfg = validate(exp)
    digest = exp.digest()
    outdir = directory or exp.output["directory"]
    _check_directory(outdir, digest, force)
    t0 = time.time()
    report = bound_report(cfg, exp.xs(), exp.bounds["delta_lower"], exp.bounds["delta_upper"], exp.bounds["h"])
    seeds = exp.run["seeds"]
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = list(pool.map(lambda s: _run_seed(exp, cfg, s, trace), seeds))
    qk = suite_qk(exp.diagnostics["qk"]["count"]) if "qk" in exp.diagnostics else None
    verdicts = _verdicts(exp, cfg, report, results, qk)
    wall = time.time() - t0
    os.makedirs(outdir, exist_ok=True)
    files = _write_bundle(outdir, exp, report, results, verdicts, qk, trace)
    ok = all(v.passed for v in verdicts if v.counted)
    manifest = {
        "name": exp.name,
        "config": exp.canonical(),
        "config_hash": digest,
        "seeds": seeds,
        "versions": versions(),
        "wall_time_seconds": round(wall, 3),
        "files": files,
        "all_verdicts_pass": ok,
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return RunOutcome(0 if ok else 1, outdir, verdicts, results, report)


def _write_bundle(outdir, exp, report, results, verdicts, qk, trace) -> list[str]:
    files = []

    def put(name, header, rows):
        write_csv(os.path.join(outdir, name), header, rows)
        files.append(name)

    put("tail.csv", ["seed", "x", "p_hat", "hits", "n_effective", "ci_low", "ci_high", "batches", "burn_in", "no_hits"],
        [(r.seed, e.x, e.p_hat, e.hits, e.n_effective, e.ci_low, e.ci_high, e.batches, e.burn_in, e.no_hits)
         for r in results for e in r.tail])
    report.to_csv(os.path.join(outdir, "bounds.csv"))
    files.append("bounds.csv")
    put("verdict.csv", ["check", "seed", "x", "passed", "counted", "detail"],
        [(v.check, v.seed, v.x, v.passed, v.counted, v.detail) for v in verdicts])
    d = exp.diagnostics
    if "bigjump" in d:
        put("bigjump.csv", ["seed", "x", "window", "slope", "a_hat", "conditioning_events", "matched_events", "frequency"],
            [(r.seed, j.x, j.window, j.slope, j.a_hat, j.conditioning_events, j.matched_events, j.frequency)
             for r in results for j in r.bigjump])
        if trace:
            need = max((j.jumps_needed for r in results for j in r.bigjump), default=1)
            put("bigjump_trace.csv", ["seed", "x", "n"] + [f"lag_{i + 1}" for i in range(need)],
                [(r.seed, j.x, row[-1] + 1, *row[:-1]) for r in results for j in r.bigjump for row in j.lags])
    if "hill" in d:
        put("hill.csv", ["seed", "fraction", "m", "alpha_hat", "samples_used", "predicted"],
            [(r.seed, f, e.m, e.alpha_hat, e.samples_used, _hill_prediction(exp.queue_config()))
             for r in results for f, e in r.hill])
    if "moments" in d:
        cfg = exp.queue_config()
        rows = []
        for r in results:
            for mr in r.moments:
                pred = moment_condition(mr.gamma, cfg.service, cfg.s, cfg.k)
                ratios = [None] + list(mr.ratios)
                for size, est, ratio in zip(mr.prefix_sizes, mr.estimates, ratios):
                    rows.append((r.seed, mr.gamma, size, est, ratio, mr.stabilizing, pred))
        put("moments.csv", ["seed", "gamma", "prefix", "estimate", "ratio", "stabilizing", "predicted"], rows)
    if "majorant" in d:
        put("majorant.csv", ["seed", "t", "count", "frequency", "slope"],
            [(r.seed, t, c, f, r.majorant.slope)
             for r in results for t, c, f in zip(r.majorant.t, r.majorant.counts, r.majorant.frequency)])
    if "coupling" in d:
        put("coupling.csv", ["seed", "steps", "violations"],
            [(r.seed, d["coupling"]["n"], r.coupling.violations) for r in results])
    if "slln" in d:
        cfg = exp.queue_config()
        put("slln.csv", ["seed", "servers", "n", "w_min_over_n", "w_max_over_n", "target"],
            [(r.seed, *r.slln, (cfg.b - r.slln[0] * cfg.a) / r.slln[0]) for r in results])
    if qk is not None:
        put("qk.csv", ["held", "count", "hand_example"], [(qk.details["held"], qk.details["count"], qk.details["hand_ok"])])
    return files


def write_bounds(exp: ExperimentConfig, directory: str | None = None):
    """Analytic bounds only: bounds.csv and bounds.json, no simulation."""
    cfg = validate(exp)
    report = bound_report(cfg, exp.xs(), exp.bounds["delta_lower"], exp.bounds["delta_upper"], exp.bounds["h"])
    outdir = directory or exp.output["directory"]
    os.makedirs(outdir, exist_ok=True)
    report.to_csv(os.path.join(outdir, "bounds.csv"))
    payload = report.to_json()
    payload["config_hash"] = exp.digest()
    with open(os.path.join(outdir, "bounds.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return report, outdir
