"""Monte Carlo tail estimation and the diagnostics that confront it with theory.

Long runs are streamed chunk by chunk through small consumer objects so one
simulated path can feed the tail counter, several big-jump scanners and a
sample thinner at once without holding the path in memory.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from . import _kernels as K
from .bounds import BoundReport
from .dist import Deterministic, tail_class
from .queue import DEFAULT_CHUNK, MajorantPath, QueueConfig, choice_h_interval, iter_path_chunks

__all__ = [
    "TailEstimate",
    "BigJumpReport",
    "HillEstimate",
    "MomentReport",
    "MajorantProfile",
    "Verdict",
    "TailCounter",
    "BigJumpScanner",
    "Thinner",
    "default_burn_in",
    "run_stationary",
    "estimate_tail",
    "bigjump_frequency",
    "bigjump_setup",
    "make_bigjump_scanner",
    "default_window",
    "hill_index",
    "hill_sensitivity",
    "empirical_moment",
    "majorant_exceedance_profile",
    "lemma_qk_bruteforce",
    "sandwich_verdict",
]


def default_burn_in(n: int) -> int:
    return min(max(100_000, n // 100), n // 10)


@dataclass(frozen=True)
class TailEstimate:
    x: float
    p_hat: float
    hits: int
    n_effective: int
    ci_low: float
    ci_high: float
    batches: int
    burn_in: int
    no_hits: bool = False


class TailCounter:
    """Batch-means estimator of P{D > x} on a fixed grid."""

    def __init__(self, xs, n: int, burn_in: int, batches: int = 32):
        xs = np.asarray(xs, dtype=float)
        self.order = np.argsort(xs, kind="stable")
        self.xs = np.ascontiguousarray(xs[self.order])
        self.burn_in = int(burn_in)
        self.batches = int(batches)
        self.batch_len = (n - self.burn_in) // self.batches
        if self.batch_len < 1:
            raise ValueError("not enough post-burn-in steps for the requested batches")
        self.hist = np.zeros((self.batches, len(self.xs) + 1), dtype=np.int64)

    def consume(self, chunk: dict) -> None:
        K.count_exceedances(chunk["delays"], chunk["start"], self.burn_in, self.batch_len, self.batches, self.xs, self.hist)

    def result(self) -> list[TailEstimate]:
        # hits for x_g: delays with more than g grid points strictly below them
        above = np.cumsum(self.hist[:, ::-1], axis=1)[:, ::-1][:, 1:]
        per_batch = above / self.batch_len
        n_eff = self.batch_len * self.batches
        q = stats.t.ppf(0.975, self.batches - 1)
        out = [None] * len(self.xs)
        for g in range(len(self.xs)):
            hits = int(above[:, g].sum())
            p = hits / n_eff
            if hits == 0:
                est = TailEstimate(float(self.xs[g]), 0.0, 0, n_eff, 0.0, 3.0 / n_eff, self.batches, self.burn_in, True)
            else:
                half = q * per_batch[:, g].std(ddof=1) / math.sqrt(self.batches)
                est = TailEstimate(float(self.xs[g]), p, hits, n_eff, max(p - half, 0.0), p + half, self.batches, self.burn_in)
            out[self.order[g]] = est
        return out


@dataclass
class BigJumpReport:
    x: float
    window: int
    conditioning_events: int
    matched_events: int
    frequency: float | None
    a_hat: float
    slope: float
    jumps_needed: int
    no_events: bool
    lags: list = field(default_factory=list)


class BigJumpScanner:
    """Counts arrivals with D_n > x that are preceded by s-k qualifying service times.

    Lag ``l`` qualifies when ``sigma_{n-l} > x + l * slope`` and ``l <= window``.
    """

    def __init__(self, x: float, window: int, slope: float, need: int, burn_in: int, a_hat: float, trace: int = 0):
        if window < 0:
            raise ValueError("window must be nonnegative")
        self.x, self.window, self.slope, self.need = float(x), int(window), float(slope), int(need)
        self.burn_in, self.a_hat = int(burn_in), float(a_hat)
        self.cond = 0
        self.matched = 0
        self.history = np.empty(0)
        self.lags = np.zeros((trace, need + 1), dtype=np.int64)
        self.stored = 0

    def consume(self, chunk: dict) -> None:
        sig = chunk["sigma"]
        buf = np.concatenate([self.history, sig])
        offset = len(self.history)
        room = self.lags[self.stored:]
        c, m, st = K.bigjump_scan(buf, chunk["delays"], offset, chunk["start"], self.burn_in, self.x, self.slope,
                                  self.window, self.need, room)
        self.cond += c
        self.matched += m
        self.stored += st
        self.history = buf[-self.window:] if self.window > 0 else np.empty(0)

    def result(self) -> BigJumpReport:
        freq = self.matched / self.cond if self.cond else None
        lags = [tuple(int(v) for v in row) for row in self.lags[: self.stored]]
        return BigJumpReport(self.x, self.window, self.cond, self.matched, freq, self.a_hat, self.slope, self.need,
                             self.cond == 0, lags)


class Thinner:
    """Keeps every ``every``-th post-burn-in delay, up to ``limit`` values."""

    def __init__(self, burn_in: int, every: int = 1, limit: int | None = None):
        self.burn_in, self.every, self.limit = int(burn_in), int(every), limit
        self.parts: list[np.ndarray] = []
        self.count = 0

    def consume(self, chunk: dict) -> None:
        start = chunk["start"]
        d = chunk["delays"]
        first = max(self.burn_in - start, 0)
        # align to the global grid burn_in, burn_in + every, ...
        first += (-(start + first - self.burn_in)) % self.every
        kept = d[first:: self.every]
        if self.limit is not None:
            kept = kept[: max(self.limit - self.count, 0)]
        self.count += len(kept)
        self.parts.append(kept.copy())

    def result(self) -> np.ndarray:
        return np.concatenate(self.parts) if self.parts else np.empty(0)


def run_stationary(cfg: QueueConfig, n: int, seed: int, consumers, init=None, chunk: int = DEFAULT_CHUNK) -> None:
    """Simulate one path of length ``n`` and feed every chunk to each consumer."""
    for c in iter_path_chunks(cfg, n, seed, init, chunk):
        for consumer in consumers:
            consumer.consume(c)


def _check_stationary_args(cfg: QueueConfig, n: int, burn_in: int, batches: int) -> None:
    if not cfg.stable:
        raise ValueError(f"stationary estimation needs rho < s, got rho={cfg.rho}, s={cfg.s}")
    if not 0 <= burn_in < n:
        raise ValueError("burn_in must lie in [0, n)")
    if batches < 10:
        raise ValueError("at least 10 batches are required")


def estimate_tail(cfg: QueueConfig, xs, n: int, seed: int, burn_in: int | None = None, batches: int = 32,
                  chunk: int = DEFAULT_CHUNK) -> list[TailEstimate]:
    """Batch-means estimates of P{D > x} from one long path started empty."""
    burn_in = default_burn_in(n) if burn_in is None else burn_in
    _check_stationary_args(cfg, n, burn_in, batches)
    counter = TailCounter(xs, n, burn_in, batches)
    run_stationary(cfg, n, seed, [counter], chunk=chunk)
    return counter.result()


def bigjump_setup(cfg: QueueConfig, h: float | None = None, slope="drift") -> tuple[float, float]:
    """(a_hat, slope) for the big-jump scan.

    The dominating auxiliary queue that receives the big job sees every
    (k+1)-th arrival and loses a_hat - b of work per own customer, so in lags
    of the original sequence its workload falls by (a_hat - b)/(k+1) per
    arrival.  ``slope="drift"`` uses that rate; ``"spacing"`` uses a_hat
    itself, which asks for far larger jumps; a number is used as is.
    """
    if not isinstance(cfg.interarrival, Deterministic):
        raise ValueError("big-jump scan needs deterministic interarrival times")
    if not tail_class(cfg.service).irv:
        raise ValueError("big-jump principle requires an intermediate regularly varying service law")
    k = cfg.k
    if cfg.integer_rho or not k < cfg.rho < k + 1 or k >= cfg.s:
        raise ValueError(f"big-jump principle requires k < rho < k+1 <= s, got rho={cfg.rho}")
    lo, hi = choice_h_interval(cfg.a, cfg.b, k)
    h = 0.5 * (lo + hi) if h is None else h
    if not lo < h < hi:
        raise ValueError(f"h={h} outside the admissible interval ({lo}, {hi})")
    a_hat = (k + 1) * (cfg.a - h)
    if slope == "drift":
        slope = (a_hat - cfg.b) / (k + 1)
    elif slope == "spacing":
        slope = a_hat
    return a_hat, float(slope)


def default_window(x: float, slope: float) -> int:
    return int(min(math.ceil(10.0 * x / slope), 1_000_000))


def make_bigjump_scanner(cfg: QueueConfig, x: float, burn_in: int, window: int | None = None, h=None,
                         slope="drift", trace: int = 0) -> BigJumpScanner:
    a_hat, sl = bigjump_setup(cfg, h, slope)
    window = default_window(x, sl) if window is None else window
    return BigJumpScanner(x, window, sl, cfg.s - cfg.k, burn_in, a_hat, trace)


def bigjump_frequency(cfg: QueueConfig, x: float, n: int, seed: int, window: int | None = None, h=None,
                      slope="drift", burn_in: int | None = None, trace: int = 0) -> BigJumpReport:
    """Conditional frequency of the s-k big-jump pattern given D_n > x."""
    burn_in = default_burn_in(n) if burn_in is None else burn_in
    scanner = make_bigjump_scanner(cfg, x, burn_in, window, h, slope, trace)
    run_stationary(cfg, n, seed, [scanner])
    return scanner.result()


@dataclass(frozen=True)
class HillEstimate:
    m: int
    alpha_hat: float
    samples_used: int


def hill_index(samples, m: int) -> HillEstimate:
    """Hill estimator from the top ``m`` order statistics (reference X_(m+1))."""
    x = np.sort(np.asarray(samples, dtype=float))[::-1]
    if m < 2:
        raise ValueError("m must be at least 2")
    if m >= len(x):
        raise ValueError(f"m={m} must be smaller than the sample size {len(x)}")
    top = x[: m + 1]
    if not top[-1] > 0:
        raise ValueError("top m+1 order statistics must be strictly positive")
    excess = np.mean(np.log(top[:m] / top[m]))
    if not excess > 0:
        raise ValueError("degenerate sample: top order statistics are tied")
    return HillEstimate(m, float(1.0 / excess), len(x))


def hill_sensitivity(samples, fractions=(0.005, 0.01, 0.02)) -> list[HillEstimate]:
    n = len(samples)
    return [hill_index(samples, max(2, math.ceil(f * n))) for f in fractions]


@dataclass
class MomentReport:
    gamma: float
    prefix_sizes: list
    estimates: list
    ratios: list
    stabilizing: bool
    tolerance: float


DEFAULT_PREFIXES = (0.125, 0.25, 0.5, 1.0)


def empirical_moment(samples, gamma: float, fractions=DEFAULT_PREFIXES, tol: float = 0.1) -> MomentReport:
    """Sample gamma-th moment on nested prefixes.

    Stabilizing when every ratio of consecutive prefix estimates lies within
    ``tol`` of 1; all-zero prefixes count as stable.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    x = np.asarray(samples, dtype=float)
    powered = x**gamma
    csum = np.cumsum(powered)
    sizes = sorted({max(1, int(round(f * len(x)))) for f in fractions})
    est = [float(csum[m - 1] / m) for m in sizes]
    ratios = []
    for e0, e1 in zip(est, est[1:]):
        ratios.append(1.0 if e0 == 0 and e1 == 0 else (e1 / e0 if e0 > 0 else math.inf))
    stable = all(abs(r - 1.0) <= tol for r in ratios)
    return MomentReport(float(gamma), sizes, est, ratios, stable, tol)


@dataclass
class MajorantProfile:
    t: np.ndarray
    frequency: np.ndarray
    counts: np.ndarray
    n: int
    slope: float | None
    fit_points: int


def majorant_exceedance_profile(path: MajorantPath, t_grid, burn_in: int = 0, min_count: int = 50) -> MajorantProfile:
    """Frequencies of {D_n - U_(k+1) > t} and the least-squares slope of their logarithm."""
    gap = path.delays[burn_in:] - path.aux_order[burn_in:]
    t = np.asarray(t_grid, dtype=float)
    srt = np.sort(gap)
    counts = len(srt) - np.searchsorted(srt, t, side="right")
    freq = counts / len(srt)
    use = counts >= min_count
    slope = None
    if use.sum() >= 2:
        slope = float(np.polyfit(t[use], np.log(freq[use]), 1)[0])
    return MajorantProfile(t, freq, counts, len(srt), slope, int(use.sum()))


def lemma_qk_bruteforce(q, s: int) -> tuple[Fraction, Fraction, bool]:
    """Exact check of sum_{i1<...<is} q_i1...q_is >= (q_s + q_{s+1} + ...)^s / s!.

    Both sides use the same finite sequence; arithmetic is exact (Fractions).
    """
    if s < 1:
        raise ValueError("s must be at least 1")
    if len(q) > 25 or s > 4:
        raise ValueError("enumeration limited to length <= 25 and s <= 4")
    qs = [Fraction(v) for v in q]
    if any(v <= 0 for v in qs):
        raise ValueError("sequence must be positive")
    if any(b > a for a, b in zip(qs, qs[1:])):
        raise ValueError("sequence must be nonincreasing")
    lhs = Fraction(0)
    for combo in itertools.combinations(qs, s):
        prod = Fraction(1)
        for v in combo:
            prod *= v
        lhs += prod
    rhs = sum(qs[s - 1:], Fraction(0)) ** s / math.factorial(s)
    return lhs, rhs, lhs >= rhs


@dataclass(frozen=True)
class Verdict:
    x: float
    p_hat: float
    lower: float
    upper: float
    lower_ok: bool
    upper_ok: bool
    powered: bool

    @property
    def passed(self) -> bool:
        return self.lower_ok and self.upper_ok


def sandwich_verdict(estimates, report: BoundReport, slack: float = 2.0, power_hits: float = 30.0) -> list[Verdict]:
    """Compare estimates with the band, conservatively using the CI endpoints.

    Lower check: ci_high >= lower/slack.  Upper check: ci_low <= upper*slack.
    A side whose bound is NaN passes.  A no-hits point passes the lower check
    only when the lower bound predicts fewer than 3 hits.  ``powered`` marks
    points where the lower bound predicts at least ``power_hits`` hits.
    """
    if len(estimates) != len(report.x) or any(
        not math.isclose(e.x, float(x), rel_tol=1e-12, abs_tol=0.0) and e.x != x for e, x in zip(estimates, report.x)
    ):
        raise ValueError("estimate and bound grids do not match")
    out = []
    for e, lo, up in zip(estimates, report.lower, report.upper):
        lo, up = float(lo), float(up)
        if math.isnan(lo):
            lower_ok = True
        elif e.no_hits:
            lower_ok = lo * e.n_effective < 3
        else:
            lower_ok = e.ci_high >= lo / slack
        upper_ok = True if math.isnan(up) else e.ci_low <= up * slack
        powered = not math.isnan(lo) and lo * e.n_effective >= power_hits
        out.append(Verdict(e.x, e.p_hat, lo, up, lower_ok, upper_ok, powered))
    return out
