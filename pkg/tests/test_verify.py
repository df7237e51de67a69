from fractions import Fraction

import numpy as np
import pytest

from kwqueue.estimate import lemma_qk_bruteforce
from kwqueue.verify import (
    HAND_LHS,
    HAND_RHS,
    SUITES,
    TWO_POINT_LAWS,
    _kw_batch,
    coupling_case,
    lindley_distributions,
    qk_case,
    run_suite,
    suite_coupling,
    suite_lindley,
    suite_monotonicity,
    suite_qk,
    suite_quadrature,
    suite_reduction,
    suite_residual,
)


def test_suite_registry():
    assert set(SUITES) == {"coupling", "monotonicity", "qk", "lindley", "reduction", "quadrature", "residual"}
    with pytest.raises(ValueError, match="unknown suite"):
        run_suite("nope")


def test_small_coupling_suite():
    r = suite_coupling(cases=6, steps=20_000)
    assert r.passed and r.details["violations"] == 0 and r.details["steps"] == 120_000
    assert r.lines()[0].startswith("coupling: PASS")


def test_coupling_cases_are_stable_and_varied():
    assert coupling_case(3) == coupling_case(3)
    kinds = {type(coupling_case(i)[2]).__name__ for i in range(10)}
    assert "Deterministic" in kinds and len(kinds) > 1
    for i in range(20):
        s, service, _, th, _ = coupling_case(i)
        assert service.mean / th.mean < s


def test_small_monotonicity_suite():
    r = suite_monotonicity(pairs=4000, length=30, block=1000)
    assert r.passed and r.details["part1"] == r.details["part2"] == 0


def test_monotonicity_checker_sees_reversed_dominance():
    rng = np.random.default_rng(0)
    p, s = 500, 2
    a = b = np.zeros((p, s))
    seen = False
    for _ in range(30):
        sig = rng.exponential(2.0, p)
        tau = rng.exponential(1.0, p)
        a, b = _kw_batch(a, sig + 1.0, tau), _kw_batch(b, sig, tau)
        seen |= bool(np.any(a > b))
    assert seen


def test_qk_suite_and_cases():
    r = suite_qk(count=200)
    assert r.passed and r.details == {"held": 200, "count": 200, "hand_ok": True}
    assert (float(HAND_LHS), float(HAND_RHS)) == (1.09375, 0.3828125)
    for i in range(50):
        q, s = qk_case(i)
        assert q == sorted(q, reverse=True) and len(q) >= s and all(v > 0 for v in q)


def test_qk_inequality_is_not_vacuous():
    # flat sequence, s = 2: lhs = n(n-1)/2 against rhs = (n-1)^2/2, so the ratio tends to 1
    for n in (2, 5, 12, 25):
        lhs, rhs, ok = lemma_qk_bruteforce([Fraction(1)] * n, 2)
        assert ok and lhs == Fraction(n * (n - 1), 2) and rhs == Fraction((n - 1) ** 2, 2)
        assert lhs / rhs == Fraction(n, n - 1)


def test_lindley_suite_small():
    r = suite_lindley(max_n=7)
    assert r.passed and r.details["checked"] == 2 * 7


def test_lindley_enumeration_distinguishes_laws():
    sl, tl = TWO_POINT_LAWS[0]
    d5, _ = lindley_distributions(5, sl, tl)
    d6, m6 = lindley_distributions(6, sl, tl)
    assert d6 == m6 and d5 != d6


def test_reduction_suite_small():
    r = suite_reduction(count=20_000, path_steps=100_000)
    assert r.passed and r.details == {"step_mismatches": 0, "path_mismatches": 0}


def test_quadrature_suite():
    r = suite_quadrature()
    assert r.passed and r.details["max_abs"] < 1e-8


def test_residual_suite():
    r = suite_residual()
    assert r.passed and r.details["max_abs"] < 1e-8


def test_residual_checker_reports_deviations():
    r = suite_residual(tol=0.0)
    assert not r.passed and r.failures and "replay" in r.lines()[1]


def test_failures_carry_replay_lines():
    r = suite_qk(count=3)
    r.failures.append("case=0")
    assert r.lines()[1] == "  replay: case=0"
