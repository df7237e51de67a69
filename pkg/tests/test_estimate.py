import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kwqueue import _kernels as K
from kwqueue.bounds import bound_report
from kwqueue.dist import Deterministic, Exponential, Pareto, named_stream
from kwqueue.estimate import (
    BigJumpScanner,
    TailCounter,
    TailEstimate,
    Thinner,
    bigjump_frequency,
    bigjump_setup,
    default_burn_in,
    default_window,
    empirical_moment,
    estimate_tail,
    hill_index,
    hill_sensitivity,
    lemma_qk_bruteforce,
    majorant_exceedance_profile,
    run_stationary,
    sandwich_verdict,
)
from kwqueue.queue import QueueConfig, iter_path_chunks, majorant_coupled_path

from oracles import elementary_symmetric

HEAVY = QueueConfig(2, Deterministic(1.0), Pareto.with_mean(3.0, 1.5))


# -- tail estimation -----------------------------------------------------------------

def test_zero_service_has_empty_tail():
    est = estimate_tail(QueueConfig(2, Exponential(1.0), Deterministic(0.0)), [0.5, 1.0], 100_000, seed=1)
    assert all(e.p_hat == 0 and e.no_hits and e.ci_low == 0 for e in est)


def test_estimates_are_consistent_and_monotone():
    xs = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
    est = estimate_tail(HEAVY, xs, 400_000, seed=3, burn_in=10_000)
    p = [e.p_hat for e in est]
    assert all(a >= b for a, b in zip(p, p[1:]))
    for e in est:
        assert e.ci_low <= e.p_hat <= e.ci_high
        assert e.p_hat == e.hits / e.n_effective
        assert e.batches == 32 and e.burn_in == 10_000


def test_grid_order_does_not_matter():
    a = estimate_tail(HEAVY, [1.0, 4.0, 2.0], 100_000, seed=2)
    b = estimate_tail(HEAVY, [4.0, 2.0, 1.0], 100_000, seed=2)
    assert {(e.x, e.hits) for e in a} == {(e.x, e.hits) for e in b}


def test_single_server_matches_lindley_reimplementation():
    cfg = QueueConfig(1, Exponential(0.5), Pareto.with_mean(2.5, 1.0))
    n, burn = 300_000, 30_000
    xs = np.array([0.5, 2.0, 8.0])
    est = estimate_tail(cfg, xs, n, seed=4, burn_in=burn)
    d = np.empty(n)
    sig = np.concatenate([c["sigma"] for c in iter_path_chunks(cfg, n, 4)])
    tau = np.concatenate([c["tau"] for c in iter_path_chunks(cfg, n, 4)])
    K.lindley_advance(0.0, sig, tau, d)
    batch = (n - burn) // 32
    used = d[burn: burn + 32 * batch]
    for e, x in zip(est, xs):
        assert e.hits == int(np.count_nonzero(used > x))


def test_two_seeds_agree_within_joint_intervals():
    a = estimate_tail(HEAVY, [2.0], 2_000_000, seed=1)[0]
    b = estimate_tail(HEAVY, [2.0], 2_000_000, seed=2)[0]
    half = lambda e: (e.ci_high - e.ci_low) / 2  # noqa: E731
    assert abs(a.p_hat - b.p_hat) <= 1.5 * math.hypot(half(a), half(b))


def test_stationary_argument_checks():
    with pytest.raises(ValueError):
        estimate_tail(QueueConfig(1, Deterministic(1.0), Pareto.with_mean(3.0, 1.5)), [1.0], 1000, seed=1)
    with pytest.raises(ValueError):
        estimate_tail(HEAVY, [1.0], 1000, seed=1, burn_in=1000)
    with pytest.raises(ValueError):
        estimate_tail(HEAVY, [1.0], 100_000, seed=1, batches=5)


def test_default_burn_in():
    assert default_burn_in(10**8) == 10**6
    assert default_burn_in(10**7) == 10**5
    assert default_burn_in(10**5) == 10**4  # capped at a tenth of the run


def test_thinner_alignment_is_chunk_independent():
    chunks = lambda size: list(iter_path_chunks(HEAVY, 10_000, 5, chunk=size))  # noqa: E731
    outs = []
    for size in (10_000, 999, 64):
        t = Thinner(burn_in=1234, every=7, limit=500)
        for c in chunks(size):
            t.consume(c)
        outs.append(t.result())
    assert all(np.array_equal(outs[0], o) for o in outs[1:])
    full = np.concatenate([c["delays"] for c in chunks(10_000)])
    assert np.array_equal(outs[0], full[1234::7][:500])


# -- big jumps --------------------------------------------------------------------------

def test_zero_window_matches_nothing():
    r = bigjump_frequency(HEAVY, 5.0, 200_000, seed=1, window=0)
    assert r.conditioning_events > 0 and r.matched_events == 0 and r.frequency == 0


def test_unreachable_level_is_flagged():
    r = bigjump_frequency(HEAVY, 1e9, 100_000, seed=1)
    assert r.no_events and r.frequency is None


def test_frequency_nondecreasing_in_window():
    chunks = list(iter_path_chunks(HEAVY, 300_000, 8, chunk=50_000))
    a_hat, slope = bigjump_setup(HEAVY)
    freqs = []
    for window in (0, 5, 20, 80, 320, 2000):
        sc = BigJumpScanner(5.0, window, slope, 1, 10_000, a_hat)
        for c in chunks:
            sc.consume(c)
        freqs.append(sc.result().matched_events)
    assert all(a <= b for a, b in zip(freqs, freqs[1:]))


def test_literal_spacing_threshold_misses_most_long_waits():
    drift = bigjump_frequency(HEAVY, 10.0, 5_000_000, seed=1)
    literal = bigjump_frequency(HEAVY, 10.0, 5_000_000, seed=1, slope="spacing")
    assert drift.conditioning_events == literal.conditioning_events > 1000
    assert drift.frequency > 0.9 and literal.frequency < 0.5


def test_scanner_against_direct_search():
    n = 60_000
    chunks = list(iter_path_chunks(QueueConfig(3, Deterministic(1.0), Pareto.with_mean(2.5, 1.4)), n, 3, chunk=7_001))
    d = np.concatenate([c["delays"] for c in chunks])
    sig = np.concatenate([c["sigma"] for c in chunks])
    x, window, slope, need, burn = 3.0, 40, 0.3, 2, 1000
    sc = BigJumpScanner(x, window, slope, need, burn, 1.0, trace=10**5)
    for c in chunks:
        sc.consume(c)
    rep = sc.result()
    cond = matched = 0
    for i in range(burn, n):
        if d[i] > x:
            cond += 1
            lags = [lag for lag in range(1, min(window, i) + 1) if sig[i - lag] > x + lag * slope]
            matched += len(lags) >= need
    assert (rep.conditioning_events, rep.matched_events) == (cond, matched)
    assert len(rep.lags) == matched and all(len(t) == need + 1 for t in rep.lags)


def test_bigjump_setup_and_window():
    a_hat, slope = bigjump_setup(HEAVY)
    assert a_hat == pytest.approx(1.625) and slope == pytest.approx(0.0625)
    assert bigjump_setup(HEAVY, slope="spacing")[1] == pytest.approx(1.625)
    assert default_window(10.0, 0.0625) == 1600 and default_window(1e9, 0.125) == 1_000_000
    with pytest.raises(ValueError):
        bigjump_setup(QueueConfig(2, Exponential(1.0), Pareto.with_mean(3.0, 1.5)))
    with pytest.raises(ValueError):
        bigjump_setup(QueueConfig(2, Deterministic(1.0), Exponential(1 / 1.5)))


# -- Hill ---------------------------------------------------------------------------------

def test_hill_hand_example():
    est = hill_index([math.e**3, math.e**2, math.e], 2)
    assert est.alpha_hat == pytest.approx(2 / 3) and est.m == 2 and est.samples_used == 3


def test_hill_rejections():
    with pytest.raises(ValueError):
        hill_index(np.ones(100), 10)
    with pytest.raises(ValueError):
        hill_index(np.zeros(100), 10)
    with pytest.raises(ValueError):
        hill_index(np.arange(10.0), 10)
    with pytest.raises(ValueError):
        hill_index(np.arange(10.0), 1)


@pytest.mark.parametrize("seed", range(10))
def test_hill_recovers_pareto_index(seed):
    x = Pareto(2.0, 1.0).sample(named_stream(seed, "hill"), 10**6)
    est = hill_index(x, 10**4)
    assert 1.9 <= est.alpha_hat <= 2.1
    assert abs(est.alpha_hat - 2.0) <= 0.15


def test_hill_sensitivity_grid():
    x = Pareto(3.0, 1.0).sample(named_stream(1, "hill"), 10**5)
    ms = [e.m for e in hill_sensitivity(x)]
    assert ms == [500, 1000, 2000]


# -- moments -----------------------------------------------------------------------------

def test_moment_all_zero():
    r = empirical_moment(np.zeros(1000), 2.0)
    assert r.stabilizing and all(e == 0 for e in r.estimates)


def test_moment_finite_case_converges_to_truth():
    x = Pareto(2.0, 1.0).sample(named_stream(2, "mom"), 10**6)
    r = empirical_moment(x, 0.5)
    assert r.stabilizing
    assert r.estimates[-1] == pytest.approx(2.0 * 1.0 / (2.0 - 0.5), rel=0.01)
    assert r.prefix_sizes == [125_000, 250_000, 500_000, 1_000_000]


def test_moment_infinite_case_diverges():
    x = Pareto(2.0, 1.0).sample(named_stream(2, "mom"), 10**6)
    assert not empirical_moment(x, 3.0).stabilizing


# -- majorant profile ------------------------------------------------------------------------

def test_majorant_profile_decays():
    path = majorant_coupled_path(HEAVY, 1_000_000, seed=1)
    prof = majorant_exceedance_profile(path, np.linspace(0, 1, 21), burn_in=10_000)
    assert np.all(np.diff(prof.frequency) <= 0)
    assert prof.slope is not None and prof.slope < 0
    assert prof.frequency[-1] < 1e-3


def test_majorant_profile_suppresses_fit_without_data():
    path = majorant_coupled_path(HEAVY, 1000, seed=1)
    prof = majorant_exceedance_profile(path, [100.0, 200.0])
    assert prof.slope is None and prof.fit_points == 0


# -- symmetric-sum inequality --------------------------------------------------------------------------------

def test_qk_examples():
    lhs, rhs, ok = lemma_qk_bruteforce([1], 1)
    assert lhs == rhs == 1 and ok
    lhs, rhs, ok = lemma_qk_bruteforce([1, Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)], 2)
    assert lhs == Fraction(35, 32) and rhs == Fraction(49, 128) and ok
    with pytest.raises(ValueError):
        lemma_qk_bruteforce([1, 2], 1)


@given(st.integers(1, 4), st.lists(st.fractions(Fraction(1, 64), 1), min_size=1, max_size=12))
def test_qk_holds_and_matches_symmetric_polynomial(s, q):
    q = sorted(q, reverse=True)
    if len(q) < s:
        return
    lhs, rhs, ok = lemma_qk_bruteforce(q, s)
    assert ok
    assert lhs == elementary_symmetric(q, s)
    assert rhs == sum(q[s - 1:], Fraction(0)) ** s / math.factorial(s)


# -- sandwich verdict ---------------------------------------------------------------------------

def _report(lower, upper, x=(1.0,)):
    from kwqueue.bounds import BoundReport

    return BoundReport(np.array(x), np.array(lower), np.array(upper), np.full(len(x), np.nan), "lo", "up", "n/a")


def _est(p, n=10**6, width=0.0, x=1.0):
    hits = round(p * n)
    return TailEstimate(x, hits / n, hits, n, max(hits / n - width, 0), hits / n + width, 32, 0, hits == 0)


def test_sandwich_rules():
    assert sandwich_verdict([_est(0.5)], _report([0.25], [0.75]), slack=1)[0].passed
    missed = sandwich_verdict([_est(0.0)], _report([10 / 10**6], [1.0]))[0]
    assert not missed.passed
    weak = sandwich_verdict([_est(0.0)], _report([2 / 10**6], [1.0]))[0]
    assert weak.passed and not weak.powered
    assert not sandwich_verdict([_est(0.01)], _report([0.1], [1.0]), slack=2)[0].passed
    assert sandwich_verdict([_est(0.01, width=0.05)], _report([0.1], [1.0]), slack=2)[0].passed
    assert not sandwich_verdict([_est(0.5)], _report([0.01], [0.1]), slack=2)[0].passed
    with pytest.raises(ValueError):
        sandwich_verdict([_est(0.5, x=2.0)], _report([0.1], [1.0]))


def test_light_load_sandwich_small_run():
    cfg = QueueConfig(2, Exponential(0.5), Pareto.with_mean(2.5, 1.0))
    xs = [1.0, 2.0, 4.0]
    v = sandwich_verdict(estimate_tail(cfg, xs, 2_000_000, seed=1), bound_report(cfg, xs))
    assert all(r.passed for r in v)


def test_run_stationary_feeds_all_consumers():
    t1, t2 = Thinner(0, 1), Thinner(0, 2)
    counter = TailCounter([1.0], 1000, 0, 10)
    run_stationary(HEAVY, 1000, 1, [t1, t2, counter])
    assert len(t1.result()) == 1000 and len(t2.result()) == 500
    assert counter.result()[0].hits == int(np.count_nonzero(t1.result() > 1.0))
