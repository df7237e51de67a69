"""Exact property suites behind ``kwqueue verify``.

Every suite runs at fixed internal seeds and returns a :class:`SuiteResult`.
Failures carry enough information (seed, inputs) to replay them by hand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate

from . import _kernels as K
from .bounds import quadrature
from .dist import (
    Deterministic,
    Exponential,
    Lognormal,
    Pareto,
    ResidualDistribution,
    Weibull,
    named_stream,
)
from .estimate import lemma_qk_bruteforce
from .queue import coupled_comparison, kw_step, lindley_step, quantize

SUITE_SEED = 20240611


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: str
    failures: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}: {self.summary}"]
        out += [f"  replay: {f}" for f in self.failures[:20]]
        return out


# ---------------------------------------------------------------- coupling

def _random_law(rng: np.random.Generator, mean: float):
    kind = rng.integers(5)
    if kind == 0:
        return Pareto.with_mean(float(rng.uniform(1.3, 4.0)), mean)
    if kind == 1:
        shape = float(rng.uniform(0.3, 1.0))
        return Weibull(shape, mean / math.gamma(1 + 1 / shape))
    if kind == 2:
        s2 = float(rng.uniform(0.1, 2.0))
        return Lognormal(math.log(mean) - s2 / 2, s2)
    if kind == 3:
        return Exponential(1.0 / mean)
    return Deterministic(mean)


def coupling_case(i: int, seed: int = SUITE_SEED):
    """Configuration of the i-th comparison case: (s, service, tau_tilde, tau_hat, run seed).

    Even cases use a constant tau_tilde = a' >= a (the deterministic-arrival
    comparison); odd cases pit two arbitrary random interarrival laws.
    """
    rng = named_stream(seed, f"coupling-case-{i}")
    s = int(rng.integers(1, 5))
    b = float(rng.uniform(0.5, 3.0))
    a = b / float(rng.uniform(0.2, 0.95 * s))
    service = _random_law(rng, b)
    tau_hat = _random_law(rng, a)
    if i % 2 == 0:
        tau_tilde = Deterministic(a * float(rng.uniform(1.0, 1.5)))
    else:
        tau_tilde = _random_law(rng, a * float(rng.uniform(0.7, 1.5)))
    return s, service, tau_tilde, tau_hat, int(rng.integers(2**31))


def suite_coupling(cases: int = 100, steps: int = 10**6, seed: int = SUITE_SEED) -> SuiteResult:
    bad_total = 0
    failures = []
    for i in range(cases):
        s, service, tt, th, run_seed = coupling_case(i, seed)
        rec = coupled_comparison(s, service, tt, th, steps, run_seed, bits=20, record=False)
        if rec.violations:
            bad_total += rec.violations
            failures.append(f"case={i} seed={run_seed} s={s} service={service} tau~={tt} tau^={th} violations={rec.violations}")
    total = cases * steps
    return SuiteResult(
        "coupling", bad_total == 0, f"{bad_total} violations over {_pow10(total)} coupled steps", failures,
        {"violations": bad_total, "steps": total, "cases": cases},
    )


def _pow10(n: int) -> str:
    e = round(math.log10(n)) if n > 0 else 0
    return f"10^{e}" if 10**e == n else str(n)


# ------------------------------------------------------------ monotonicity

def _kw_batch(w: np.ndarray, sigma: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Row-wise kw_step on a batch of sorted workload vectors."""
    w = w.copy()
    w[:, 0] = w[:, 0] + sigma
    w = w - tau[:, None]
    return np.sort(np.maximum(w, 0.0), axis=1)


def suite_monotonicity(pairs: int = 10**5, length: int = 50, seed: int = SUITE_SEED, block: int = 5000) -> SuiteResult:
    """Both monotonicity properties on randomly dominated paired paths.

    Part 1: dominated initial state, service and interarrival inputs give
    dominated workloads at every step.  Part 2: with shared draws and a
    dominated start, the total workload of the smaller system grows at least
    as fast.  Draws are dyadic so the sums in part 2 are exact.
    """
    bad1 = bad2 = 0
    failures = []
    done = 0
    bi = 0
    while done < pairs:
        p = min(block, pairs - done)
        rng = named_stream(seed, f"monotonicity-{bi}")
        s = 1 + bi % 4
        scale = float(rng.uniform(0.5, 3.0))
        w1 = np.sort(quantize(rng.exponential(scale, (p, s)) * (rng.random((p, s)) < 0.7)), axis=1)
        w2 = np.sort(w1 + quantize(rng.exponential(scale, (p, s)) * (rng.random((p, 1)) < 0.5)), axis=1)
        sig1 = quantize(rng.pareto(2.0, (length, p)) * scale)
        sig2 = sig1 + quantize(rng.exponential(0.5, (length, p)) * (rng.random((1, p)) < 0.5))
        tau2 = quantize(rng.exponential(scale / max(s - 0.5, 0.5), (length, p)))
        tau1 = tau2 + quantize(rng.exponential(0.3, (length, p)) * (rng.random((1, p)) < 0.5))
        # part 2 uses shared draws sig1/tau1 from the dominated starts
        a1, a2 = w1.copy(), w2.copy()
        b1, b2 = w1.copy(), w2.copy()
        for j in range(length):
            a1 = _kw_batch(a1, sig1[j], tau1[j])
            a2 = _kw_batch(a2, sig2[j], tau2[j])
            nb1 = _kw_batch(b1, sig1[j], tau1[j])
            nb2 = _kw_batch(b2, sig1[j], tau1[j])
            v1 = np.any(a1 > a2, axis=1)
            inc1 = nb1.sum(axis=1) - b1.sum(axis=1)
            inc2 = nb2.sum(axis=1) - b2.sum(axis=1)
            v2 = inc1 < inc2
            for name, v in (("part1", v1), ("part2", v2)):
                if v.any():
                    r = int(np.flatnonzero(v)[0])
                    failures.append(f"{name} block={bi} seed={seed} row={r} step={j + 1} s={s}")
            bad1 += int(v1.sum())
            bad2 += int(v2.sum())
            b1, b2 = nb1, nb2
        done += p
        bi += 1
    ok = bad1 == 0 and bad2 == 0
    return SuiteResult(
        "monotonicity", ok,
        f"part 1: {bad1} violations, part 2: {bad2} violations over {pairs} paired paths of {length} steps",
        failures, {"part1": bad1, "part2": bad2, "pairs": pairs, "length": length},
    )


# --------------------------------------------------------------------- qk

HAND_EXAMPLE = ((Fraction(1), Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)), 2)
# pairs: 1/2 + 1/4 + 1/8 + 1/8 + 1/16 + 1/32; tail sum starts at q_2 = 1/2
HAND_LHS = Fraction(35, 32)
HAND_RHS = Fraction(1, 2) * Fraction(7, 8) ** 2


def qk_case(i: int, seed: int = SUITE_SEED):
    """Geometric-decay sequence with random dyadic ratio and a random perturbation."""
    rng = named_stream(seed, f"qk-case-{i}")
    s = int(rng.integers(1, 5))
    length = int(rng.integers(s, 17))
    ratio = Fraction(int(rng.integers(1, 16)), 16)
    q = [Fraction(int(rng.integers(1, 9)), 8)]
    for _ in range(length - 1):
        shrink = Fraction(int(rng.integers(12, 17)), 16)
        q.append(q[-1] * (ratio if rng.random() < 0.5 else shrink))
    return q, s


def suite_qk(count: int = 1000, seed: int = SUITE_SEED) -> SuiteResult:
    q, s = HAND_EXAMPLE
    lhs, rhs, ok = lemma_qk_bruteforce(q, s)
    failures = []
    hand_ok = ok and lhs == HAND_LHS and rhs == HAND_RHS
    if not hand_ok:
        failures.append(f"hand example lhs={lhs} rhs={rhs}")
    held = 0
    for i in range(count):
        q, s = qk_case(i, seed)
        lhs, rhs, ok = lemma_qk_bruteforce(q, s)
        held += ok
        if not ok:
            failures.append(f"case={i} seed={seed} s={s} q={[str(v) for v in q]}")
    return SuiteResult(
        "qk", held == count and hand_ok,
        f"{held}/{count} hold; hand example lhs={float(HAND_LHS)} rhs={float(HAND_RHS)} "
        f"{'matches' if hand_ok else 'MISMATCH'}",
        failures, {"held": held, "count": count, "hand_ok": hand_ok},
    )


# ---------------------------------------------------------------- lindley

TWO_POINT_LAWS = (
    # (service values, weights), (interarrival values, weights)
    (((0, 3), (3, 1)), ((1, 2), (1, 1))),
    (((1, 5), (2, 1)), ((2, 3), (1, 2))),
)


def lindley_distributions(n: int, sigma_law, tau_law, block: int = 1 << 20):
    """Exact laws of D_{n+1} (Lindley from 0) and max_{k<=n} S_k by enumeration.

    ``sigma_law``/``tau_law`` are ((v0, v1), (w0, w1)) with integer values and
    integer weights.  Returns two dicts value -> integer weight over all
    (w0+w1)**(2n) outcome sequences.  The forward partial sums S_k of the same
    increments are used, so agreement is a statement about laws, not paths.
    """
    (sv, sw), (tv, tw) = sigma_law, tau_law
    sv, sw, tv, tw = (np.asarray(z, dtype=np.int64) for z in (sv, sw, tv, tw))
    total = 1 << (2 * n)
    lo = -n * int(tv.max())
    size = n * int(sv.max()) - lo + 1
    acc_d = np.zeros(size)
    acc_m = np.zeros(size)
    for start in range(0, total, block):
        idx = np.arange(start, min(start + block, total), dtype=np.int64)
        d = np.zeros(idx.shape, dtype=np.int64)
        sk = np.zeros_like(d)
        mx = np.zeros_like(d)
        wt = np.ones_like(d)
        for j in range(n):
            bs = (idx >> j) & 1
            bt = (idx >> (n + j)) & 1
            xi = sv[bs] - tv[bt]
            wt = wt * sw[bs] * tw[bt]
            d = np.maximum(d + xi, 0)
            sk = sk + xi
            mx = np.maximum(mx, sk)
        # weights are integers below 2**53, so float accumulation is exact
        acc_d += np.bincount(d - lo, weights=wt, minlength=size)
        acc_m += np.bincount(mx - lo, weights=wt, minlength=size)
    if acc_d.sum() >= 2.0**53:
        raise OverflowError("weight total exceeds exact float range")
    to_dict = lambda acc: {int(v) + lo: int(w) for v, w in enumerate(acc) if w}  # noqa: E731
    return to_dict(acc_d), to_dict(acc_m)


def suite_lindley(max_n: int = 12) -> SuiteResult:
    failures = []
    checked = 0
    for li, (sl, tl) in enumerate(TWO_POINT_LAWS):
        for n in range(1, max_n + 1):
            dd, dm = lindley_distributions(n, sl, tl)
            checked += 1
            if dd != dm:
                failures.append(f"law={li} n={n}")
    return SuiteResult(
        "lindley", not failures,
        f"{checked - len(failures)}/{checked} exact distribution matches (n=1..{max_n}, {len(TWO_POINT_LAWS)} law pairs)",
        failures, {"checked": checked},
    )


# -------------------------------------------------------------- reduction

def suite_reduction(count: int = 10**6, path_steps: int = 10**6, seed: int = SUITE_SEED) -> SuiteResult:
    """kw_step with one server against lindley_step, per call and along a path."""
    rng = named_stream(seed, "reduction")
    d = rng.exponential(2.0, count) * (rng.random(count) < 0.8)
    sig = rng.pareto(1.5, count)
    tau = rng.exponential(1.0, count)
    bad = 0
    failures = []
    for j in range(count):
        x, y, z = float(d[j]), float(sig[j]), float(tau[j])
        if kw_step((x,), y, z)[0] != lindley_step(x, y, z):
            bad += 1
            if len(failures) < 20:
                failures.append(f"d={x!r} sigma={y!r} tau={z!r}")
    rs = rng.pareto(1.5, path_steps)
    rt = rng.exponential(2.0, path_steps)
    dk = np.empty(path_steps)
    dl = np.empty(path_steps)
    K.kw_advance(np.zeros(1), rs, rt, dk, np.empty(0, np.int64), np.empty((0, 1)), False, False)
    K.lindley_advance(0.0, rs, rt, dl)
    path_bad = int(np.count_nonzero(dk != dl))
    if path_bad:
        failures.append(f"path seed={seed} first mismatch at n={int(np.flatnonzero(dk != dl)[0]) + 1}")
    return SuiteResult(
        "reduction", bad == 0 and path_bad == 0,
        f"{count - bad}/{count} single steps identical; {path_steps - path_bad}/{path_steps} path delays identical",
        failures, {"step_mismatches": bad, "path_mismatches": path_bad},
    )


# ------------------------------------------------------------- quadrature

def _simpson_log(f, lo: float, hi: float, m: int = 20000) -> float:
    """Composite Simpson on [lo, hi] after the substitution z = e^v - 1."""
    v0, v1 = math.log1p(lo), math.log1p(hi)
    v = np.linspace(v0, v1, 2 * m + 1)
    z = np.expm1(v)
    g = f(z) * np.exp(v)
    h = (v1 - v0) / (2 * m)
    return float(h / 3 * (g[0] + g[-1] + 4 * g[1:-1:2].sum() + 2 * g[2:-1:2].sum()))


def quadrature_cases():
    """(label, integrand, lo, hi, exact value)."""
    return [
        ("partial fractions", lambda z: 1.0 / ((1 + z) * (1 + z / 2) ** 2), 0.0, math.inf, 4 * math.log(2) - 2),
        ("pareto tail", Pareto(2.5, 0.6).tail, 0.0, math.inf, Pareto(2.5, 0.6).mean),
        ("exponential tail", Exponential(0.5).tail, 1.0, math.inf, 2.0 * math.exp(-0.5)),
        ("weibull tail", Weibull(0.5, 1.0).tail, 0.0, math.inf, 2.0),
        ("lognormal tail", Lognormal(0.0, 1.0).tail, 0.0, math.inf, math.exp(0.5)),
        ("finite range", lambda z: np.sin(z) ** 2, 0.0, math.pi, math.pi / 2),
    ]


def suite_quadrature(tol: float = 1e-8) -> SuiteResult:
    worst = 0.0
    failures = []
    for label, f, lo, hi, exact in quadrature_cases():
        r = quadrature(f, lo, hi)
        err = abs(r.value - exact)
        worst = max(worst, err)
        if err >= tol or not r.converged:
            failures.append(f"{label}: got {r.value!r}, exact {exact!r}")
    # the same partial-fraction integral through a fixed-grid rule on a finite cut
    cut = 1e6
    f0 = quadrature_cases()[0][1]
    simpson = _simpson_log(f0, 0.0, cut) + 2.0 / cut**2  # integrand ~ 4/z**3 beyond the cut
    err_s = abs(simpson - (4 * math.log(2) - 2))
    if err_s >= 1e-6:
        failures.append(f"fixed-grid cross-check off by {err_s:g}")
    return SuiteResult(
        "quadrature", not failures, f"max abs deviation {worst:.3g} (tol {tol:g}); fixed-grid cross-check {err_s:.3g}",
        failures, {"max_abs": worst},
    )


# --------------------------------------------------------------- residual

def residual_cases():
    return [
        Pareto(2.5, 0.6), Pareto(3.0, 1.0), Pareto(1.2, 2.0),
        Weibull(0.5, 1.0), Weibull(0.3, 0.2), Weibull(1.0, 2.0),
        Lognormal(0.0, 1.0), Lognormal(-0.5, 2.0),
        Exponential(1.0), Exponential(0.25),
        Deterministic(1.5),
    ]


def _oracle_residual(base, x: float) -> float:
    if x <= 0:
        return 1.0
    bp = [p for p in base.breakpoints if p > x]
    pieces = [x] + bp
    total = 0.0
    for lo, hi in zip(pieces, pieces[1:]):
        total += integrate.quad(base.tail, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    if base.unbounded:
        total += integrate.quad(base.tail, pieces[-1], math.inf, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return total / base.mean


def residual_grid() -> np.ndarray:
    return np.unique(np.concatenate([np.geomspace(1e-3, 1e3, 121), [0.0, 0.6, 1.0, 1.5, 2.0]]))


def suite_residual(tol: float = 1e-8) -> SuiteResult:
    worst = 0.0
    failures = []
    xs = residual_grid()
    for base in residual_cases():
        for method in ("closed", "quadrature"):
            got = ResidualDistribution(base, method).tail(xs)
            for x, g in zip(xs, np.atleast_1d(got)):
                err = abs(float(g) - _oracle_residual(base, float(x)))
                worst = max(worst, err)
                if err >= tol:
                    failures.append(f"{base} method={method} x={x!r} deviation={err:.3g}")
    return SuiteResult(
        "residual", not failures, f"max abs deviation vs quadrature oracle {worst:.3g} (tol {tol:g})",
        failures, {"max_abs": worst},
    )


SUITES = {
    "coupling": suite_coupling,
    "monotonicity": suite_monotonicity,
    "qk": suite_qk,
    "lindley": suite_lindley,
    "reduction": suite_reduction,
    "quadrature": suite_quadrature,
    "residual": suite_residual,
}


def run_suite(name: str, **kwargs) -> SuiteResult:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    return fn(**kwargs)
