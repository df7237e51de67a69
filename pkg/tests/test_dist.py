import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from kwqueue.dist import (
    Deterministic,
    Exponential,
    Lognormal,
    Pareto,
    ResidualDistribution,
    Weibull,
    make_distribution,
    min_residual_tail,
    named_stream,
    residual_tail_class,
    tail_class,
)

from oracles import pareto_residual_tail

FAMILIES = [
    Pareto(2.0, 1.0), Pareto(3.0, 1.0), Pareto(1.5, 0.4),
    Weibull(0.5, 1.0), Weibull(0.35, 2.0), Weibull(1.0, 1.5),
    Lognormal(0.0, 1.0), Lognormal(1.0, 0.5),
    Exponential(1.0), Exponential(0.3),
]


# -- tail, mean, sampling ------------------------------------------------

def test_tail_examples():
    assert Pareto(2.0, 1.0).tail(2.0) == 0.25
    assert Deterministic(3.0).tail(2.0) == 1.0
    assert Deterministic(3.0).tail(4.0) == 0.0
    assert Exponential(1.0).tail(1.0) == pytest.approx(math.exp(-1), rel=1e-15)


def test_negative_argument_gives_one():
    for d in FAMILIES + [Deterministic(2.0)]:
        assert d.tail(-1.0) == 1.0


def test_mean_examples():
    assert Pareto(2.0, 1.0).mean == 2.0
    assert Exponential(0.5).mean == 2.0
    assert Lognormal(0.0, 1.0).mean == pytest.approx(math.exp(0.5), rel=1e-15)
    assert Weibull(0.5, 1.0).mean == pytest.approx(2.0, rel=1e-14)


def test_inverse_transform_examples():
    assert Pareto(2.0, 1.0).from_uniform(0.25) == pytest.approx(2.0, rel=1e-15)
    assert Exponential(1.0).from_uniform(math.exp(-1)) == pytest.approx(1.0, rel=1e-15)
    assert np.all(Deterministic(3.0).sample(named_stream(1, "x"), 5) == 3.0)


@pytest.mark.parametrize("bad", [
    lambda: Pareto(1.0, 1.0), lambda: Pareto(0.5, 1.0), lambda: Pareto(2.0, 0.0),
    lambda: Weibull(1.5, 1.0), lambda: Weibull(0.5, -1.0), lambda: Exponential(0.0),
    lambda: Deterministic(-1.0), lambda: Lognormal(0.0, 0.0),
])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_make_distribution_records():
    p = make_distribution("pareto", {"alpha": 3.0, "mean": 1.5})
    assert p.mean == pytest.approx(1.5) and p.xm == pytest.approx(1.0)
    assert make_distribution("Exponential", {"rate": 2.0}) == Exponential(2.0)
    with pytest.raises(ValueError):
        make_distribution("cauchy", {})


def test_named_streams_are_reproducible_and_distinct():
    a = named_stream(7, "service").random(4)
    b = named_stream(7, "service").random(4)
    c = named_stream(7, "interarrival").random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sampler_matches_tail():
    rng = named_stream(3, "tail-check")
    n = 200_000
    for d in FAMILIES:
        x = d.sample(rng, n)
        assert np.all(x >= 0)
        for q in (0.5, 0.9, 0.99):
            t = float(d.from_uniform(1 - q))
            emp = np.mean(x > t)
            se = math.sqrt(q * (1 - q) / n)
            assert abs(emp - (1 - q)) < 4 * se, (d, q)


@given(st.sampled_from(FAMILIES), st.floats(0, 1e4), st.floats(0, 1e4))
def test_tail_nonincreasing_and_bounded(d, x, y):
    lo, hi = min(x, y), max(x, y)
    assert 0.0 <= d.tail(hi) <= d.tail(lo) <= 1.0


# -- residual law --------------------------------------------------------

def test_residual_examples():
    r = ResidualDistribution(Pareto(2.0, 1.0))
    assert r.tail(0.0) == 1.0
    assert r.tail(2.0) == pytest.approx(0.25, rel=1e-15)
    assert r.tail(0.5) == pytest.approx(0.75, rel=1e-15)
    assert r.from_uniform(0.25) == pytest.approx(2.0, rel=1e-14)
    assert ResidualDistribution(Exponential(1.0)).from_uniform(math.exp(-1)) == pytest.approx(1.0, rel=1e-15)
    assert ResidualDistribution(Weibull(0.5)).from_uniform(1 - 1e-12) < 1e-9


def test_min_residual_examples():
    r = ResidualDistribution(Pareto(2.0, 1.0))
    assert min_residual_tail(r, 1, 3.0) == r.tail(3.0)
    assert min_residual_tail(r, 2, 2.0) == pytest.approx(0.0625, rel=1e-15)
    for base in FAMILIES:
        assert min_residual_tail(ResidualDistribution(base), 3, 0.0) == 1.0


def _quad_oracle(base, x):
    pts = sorted({x, *[p for p in base.breakpoints if p > x]})
    total = sum(integrate.quad(base.tail, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)[0] for a, b in zip(pts, pts[1:]))
    total += integrate.quad(base.tail, pts[-1], np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return total / base.mean


@pytest.mark.parametrize("base", FAMILIES, ids=repr)
def test_residual_matches_quadrature_oracle(base):
    rng = np.random.default_rng(11)
    xs = np.concatenate([[0.0], np.exp(rng.uniform(np.log(1e-3), np.log(1e3), 1000))])
    got = ResidualDistribution(base).tail(xs)
    want = np.array([1.0 if x <= 0 else _quad_oracle(base, float(x)) for x in xs])
    assert np.max(np.abs(got - want)) < 1e-8


def test_pareto_residual_against_closed_form_oracle():
    xs = np.linspace(0, 50, 2001)
    for a, xm in ((2.0, 1.0), (3.0, 0.5), (1.2, 2.0)):
        got = ResidualDistribution(Pareto(a, xm)).tail(xs)
        assert np.allclose(got, pareto_residual_tail(a, xm, xs), rtol=1e-13, atol=0)


def test_quadrature_method_agrees_with_closed():
    xs = np.array([0.0, 0.3, 1.0, 2.5, 10.0, 100.0])
    for base in FAMILIES + [Deterministic(2.0)]:
        a = ResidualDistribution(base, "closed").tail(xs)
        b = ResidualDistribution(base, "quadrature").tail(xs)
        assert np.max(np.abs(a - b)) < 1e-9, base


def test_deterministic_residual_is_uniform():
    r = ResidualDistribution(Deterministic(4.0))
    assert r.tail(1.0) == pytest.approx(0.75)
    assert r.tail(5.0) == 0.0
    assert r.from_uniform(0.25) == pytest.approx(3.0)


@given(st.sampled_from(FAMILIES), st.floats(0, 500), st.floats(0, 500))
def test_residual_tail_nonincreasing(base, x, y):
    r = ResidualDistribution(base)
    lo, hi = min(x, y), max(x, y)
    assert 0.0 <= r.tail(hi) <= r.tail(lo) <= 1.0


@given(st.sampled_from([b for b in FAMILIES if not isinstance(b, (Pareto, Exponential))]), st.floats(1e-6, 1 - 1e-6))
def test_bisection_inverse_within_tolerance(base, u):
    r = ResidualDistribution(base)
    x = r.from_uniform(u)
    assert abs(r.tail(x) - u) < 1e-9


def test_pareto_residual_continuous_at_scale():
    r = ResidualDistribution(Pareto(2.5, 0.6))
    assert abs(r.tail(0.6 - 1e-12) - r.tail(0.6 + 1e-12)) < 1e-10


@pytest.mark.parametrize("base", [Pareto(2.5, 1.0), Weibull(0.5, 1.0), Lognormal(0.0, 1.0)], ids=repr)
def test_residual_sampler_matches_tail(base):
    r = ResidualDistribution(base)
    n = 10**6
    x = r.sample(named_stream(5, "residual"), n)
    for t in r.from_uniform(np.array([0.5, 0.1, 0.01])):
        p = float(r.tail(t))
        se = math.sqrt(p * (1 - p) / n)
        assert abs(np.mean(x > t) - p) < 3 * se


def test_min_residual_matches_simulation():
    r = ResidualDistribution(Pareto(3.0, 1.0))
    n = 10**6
    x = np.minimum(r.sample(named_stream(1, "m1"), n), r.sample(named_stream(1, "m2"), n))
    for t in (0.5, 1.0, 3.0):
        p = float(min_residual_tail(r, 2, t))
        assert abs(np.mean(x > t) - p) < 3 * math.sqrt(p * (1 - p) / n)


# -- class table -----------------------------------------------------------

def test_class_table_respects_inclusions():
    for d in FAMILIES + [Deterministic(1.0)]:
        assert tail_class(d).consistent(), d
        assert residual_tail_class(d).consistent(), d


def test_class_table_entries():
    p = Pareto(3.0, 1.0)
    assert tail_class(p).rv and tail_class(p).index == 3.0
    assert residual_tail_class(p).rv and residual_tail_class(p).index == 2.0
    for d in (Weibull(0.5), Lognormal(0.0, 1.0)):
        c = tail_class(d)
        assert c.subexponential and c.long_tailed and not c.dominated and not c.irv
    for d in (Exponential(1.0), Deterministic(1.0), Weibull(1.0)):
        assert not tail_class(d).subexponential
