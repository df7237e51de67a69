"""Analytic tail bounds, asymptotic forms and the moment criterion.

Every bound here is the right-hand side of a limit statement with its o(1)
term dropped, so values are "asymptotic forms" and only meaningful for large
x.  Integer loads are rejected throughout: each statement needs
k < rho < k+1 strictly.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .dist import Deterministic, Distribution, Pareto, ResidualDistribution, residual_tail_class
from .queue import QueueConfig, choice_h_interval

__all__ = [
    "QuadResult",
    "quadrature",
    "singleserver_asymptotic",
    "theorem5_constants",
    "theorem6_lower",
    "theorem6_upper",
    "corollary1_band",
    "theorem1_asymptotic",
    "theorem1_bound_constants",
    "theorem1_rv_constant",
    "theorem2_bounds",
    "theorem6_consistency_with_s2",
    "theorem7_upper_with_correction",
    "moment_condition",
    "BoundReport",
    "bound_report",
    "CorrectedUpperBound",
    "Band",
]

ASYMPTOTIC = "asymptotic form"


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    converged: bool


def quadrature(f, lo: float, hi: float = math.inf, abs_tol: float = 1e-10, rel_tol: float = 1e-10, limit: int = 500):
    """Adaptive Gauss-Kronrod integration of ``f`` over [lo, hi], hi may be inf.

    Never raises on budget exhaustion; ``converged`` is False and ``error``
    carries the achieved estimate instead.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err, info, *rest = integrate.quad(
            lambda t: float(f(t)), lo, hi, epsabs=abs_tol, epsrel=rel_tol, limit=limit, full_output=1
        )
    ok = not rest and err <= max(abs_tol, rel_tol * abs(value))
    return QuadResult(float(value), float(err), bool(ok))


def _check_rho(rho: float) -> None:
    if not rho > 0:
        raise ValueError(f"load must be positive, got {rho}")
    if rho == math.floor(rho):
        raise ValueError(f"integer rho={rho} lies outside every theorem's hypotheses")


def _require_subexp(res: ResidualDistribution, what: str) -> None:
    if not res.heavy_tail_class.subexponential:
        raise ValueError(f"{what} requires a subexponential residual law; {res.base!r} is not flagged")


def singleserver_asymptotic(x, rho: float, res: ResidualDistribution):
    """rho/(1-rho) times the residual tail; the single-server equivalent."""
    if not 0 < rho < 1:
        raise ValueError(f"single-server asymptotic requires 0 < rho < 1, got {rho}")
    return rho / (1.0 - rho) * res.tail(x)


def theorem5_constants(rho: float, s: int) -> tuple[float, float]:
    """(rho^s/s!, (rho/(1-rho))^s): the light-load sandwich constants."""
    if not 0 < rho < 1:
        raise ValueError(f"light-load sandwich requires 0 < rho < 1, got {rho}")
    return rho**s / math.factorial(s), (rho / (1.0 - rho)) ** s


def theorem6_lower(x, rho: float, k: int, s: int, delta: float, res: ResidualDistribution):
    """rho^(s-k)/(s-k)! * Br^(s-k)(x (rho+delta)/(rho-k)); holds for any service law."""
    if not rho > k:
        raise ValueError(f"general lower bound requires rho > k, got rho={rho}, k={k}")
    if not delta > 0:
        raise ValueError("delta must be positive")
    _check_rho(rho)
    m = s - k
    scale = (rho + delta) / (rho - k)
    return rho**m / math.factorial(m) * res.tail(scale * np.asarray(x, dtype=float)) ** m


def theorem6_upper_constant(rho: float, k: int, s: int) -> float:
    return math.comb(s, k) * ((k + 1) * rho / (k + 1 - rho)) ** (s - k)


def theorem6_upper(x, rho: float, k: int, s: int, delta: float, res: ResidualDistribution):
    """C(s,k) ((k+1)rho/(k+1-rho))^(s-k) Br^(s-k)(x(1-delta)); needs subexponential Br."""
    if not rho < k + 1:
        raise ValueError(f"general upper bound requires rho < k+1, got rho={rho}, k={k}")
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    _require_subexp(res, "the general upper bound")
    return theorem6_upper_constant(rho, k, s) * res.tail(np.asarray(x, dtype=float) * (1.0 - delta)) ** (s - k)


@dataclass
class Band:
    """c1 * Br^(s-k)(x) <= P{D > x} <= c2 * Br^(s-k)(x) (or argument-scaled forms)."""

    lower: np.ndarray
    upper: np.ndarray
    c1: float | None
    c2: float | None
    constant_form: bool


def corollary1_band(x, rho: float, k: int, s: int, res: ResidualDistribution, delta_lower=0.1, delta_upper=0.05):
    """Order-exact sandwich for long-tailed, dominated-varying residual laws.

    For a regularly varying residual law the argument scalings of the general
    bounds become exact constant factors (valid where the tail is a pure power,
    i.e. above the Pareto scale).  Otherwise the argument-scaled forms are
    returned and ``c1``/``c2`` are None.
    """
    cls = res.heavy_tail_class
    if not cls.ld:
        raise ValueError("order-exact sandwich requires a long-tailed, dominated-varying residual law")
    _check_rho(rho)
    if not k < rho < k + 1:
        raise ValueError(f"need k < rho < k+1, got rho={rho}, k={k}")
    m = s - k
    x = np.asarray(x, dtype=float)
    if cls.rv:
        scale = (rho + delta_lower) / (rho - k)
        c1 = rho**m / math.factorial(m) * scale ** (-cls.index * m)
        c2 = theorem6_upper_constant(rho, k, s) * (1.0 - delta_upper) ** (-cls.index * m)
        base = res.tail(x) ** m
        return Band(c1 * base, c2 * base, c1, c2, True)
    lo = theorem6_lower(x, rho, k, s, delta_lower, res)
    up = theorem6_upper(x, rho, k, s, delta_upper, res)
    return Band(lo, up, None, None, False)


def _breaks(x, a, b, service: Distribution) -> list[float]:
    """Kinks of the integrand in the scaled variable z = y / x."""
    pts = []
    for p in service.breakpoints:
        for slope in (a, a - b):
            z = (p - x) / (slope * x)
            if z > 0:
                pts.append(z)
    return sorted(set(pts))


def theorem1_asymptotic(x: float, a: float, service: Distribution, rel_tol: float = 1e-11) -> float:
    """Two-server light-load equivalent of P{D > x}.

    rho^2/(2-rho) [Br(x)^2 + int_0^inf Br(x + y a) B(x + y(a-b)) dy].
    The integral is computed as x Br(x) B(x) int_0^inf g(z) dz with y = x z
    and g normalised to g(0) = 1, so the tolerance is relative at any x.
    """
    b = service.mean
    rho = b / a
    if not 0 < rho < 1:
        raise ValueError(f"two-server light-load asymptotic requires rho < 1, got {rho}")
    if not x > 0:
        raise ValueError("x must be positive")
    res = ResidualDistribution(service)
    _require_subexp(res, "the two-server asymptotic")
    r0, b0 = float(res.tail(x)), float(service.tail(x))
    if r0 == 0.0 or b0 == 0.0:
        return 0.0
    g = lambda z: res.tail(x * (1 + z * a)) / r0 * service.tail(x * (1 + z * (a - b))) / b0  # noqa: E731
    edges = [0.0, *_breaks(x, a, b, service), math.inf]
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        r = quadrature(g, lo, hi, abs_tol=1e-13, rel_tol=rel_tol)
        if not r.converged:
            raise ArithmeticError(f"quadrature did not converge on [{lo}, {hi}]: error {r.error:.3e}")
        total += r.value
    return rho**2 / (2.0 - rho) * (r0**2 + x * r0 * b0 * total)


def theorem1_bound_constants(rho: float) -> tuple[float, float]:
    if not 0 < rho < 1:
        raise ValueError(f"need 0 < rho < 1, got {rho}")
    return rho**2 * (2.0 + rho) / (2.0 * (2.0 - rho)), rho**2 / (2.0 * (1.0 - rho))


def theorem1_rv_constant(gamma: float, rho: float) -> float:
    """Exact constant c in P{D > x} ~ c Br(x)^2 for s=2, rho<1, B regularly varying of index gamma.

    c = rho^2/(2-rho) [1 + rho (gamma-1) int_0^inf dz / ((1+z)^(gamma-1) (1+z(1-rho))^gamma)].
    """
    if not gamma > 1:
        raise ValueError(f"index must exceed 1, got {gamma}")
    if not 0 < rho < 1:
        raise ValueError(f"need 0 < rho < 1, got {rho}")
    f = lambda z: 1.0 / ((1.0 + z) ** (gamma - 1.0) * (1.0 + z * (1.0 - rho)) ** gamma)  # noqa: E731
    r = quadrature(f, 0.0, math.inf, abs_tol=1e-12, rel_tol=1e-12)
    if not r.converged:
        raise ArithmeticError(f"quadrature did not converge: error {r.error:.3e}")
    return rho**2 / (2.0 - rho) * (1.0 + rho * (gamma - 1.0) * r.value)


def theorem2_bounds(x, rho: float, delta: float, res: ResidualDistribution):
    """(lower, upper) asymptotic forms for s=2 and 1 < rho < 2."""
    if not 1 < rho < 2:
        raise ValueError(f"two-server heavy-load bounds require 1 < rho < 2, got {rho}")
    if not delta > 0:
        raise ValueError("delta must be positive")
    _require_subexp(res, "the two-server heavy-load bounds")
    x = np.asarray(x, dtype=float)
    c = rho / (2.0 - rho)
    return c * res.tail((rho + delta) / (rho - 1.0) * x), c * res.tail(2.0 * x)


def theorem2_irv_asymptotic(x, rho: float, res: ResidualDistribution):
    if not 1 < rho < 2:
        raise ValueError(f"need 1 < rho < 2, got {rho}")
    if not res.heavy_tail_class.irv:
        raise ValueError("exact two-server heavy-load asymptotic needs an IRV residual law")
    return rho / (2.0 - rho) * res.tail(rho / (rho - 1.0) * np.asarray(x, dtype=float))


def theorem6_consistency_with_s2(rho: float, delta: float) -> dict:
    """Compare the general s=2, k=1 lower constant with the specialised one.

    ``flag`` is True when the general bound would be the tighter one, which
    must never happen.
    """
    if not 1 < rho < 2:
        raise ValueError(f"need 1 < rho < 2, got {rho}")
    general = rho  # rho^(s-k)/(s-k)! at s=2, k=1
    special_ = rho / (2.0 - rho)
    scale = (rho + delta) / (rho - 1.0)
    return {
        "rho": rho,
        "delta": delta,
        "general_lower_constant": general,
        "specialised_lower_constant": special_,
        "argument_scale": scale,
        "flag": general > special_,
    }


@dataclass(frozen=True)
class CorrectedUpperBound:
    """C(s,k) Fbar(x)^(s-k) + const * exp(-beta * y).

    ``first_term`` uses Fbar(x) ~ b/((k+1)(a-h)-b) Br(x).  The pair
    (const, beta) is only known to exist and is never given a number.
    """

    x: float
    y: float
    h: float
    a_hat: float
    walk_tail: float
    first_term: float
    first_term_constant: float
    correction: str = "const * exp(-beta * y)"
    const: None = None
    beta: None = None
    caveat: str = "(const, beta) exist but are not explicit; first term uses the asymptotic tail of the walk maximum"


def theorem7_upper_with_correction(x: float, y: float, cfg: QueueConfig, h: float | None = None) -> CorrectedUpperBound:
    a, b, k, s = cfg.a, cfg.b, cfg.k, cfg.s
    _check_rho(cfg.rho)
    lo, hi = choice_h_interval(a, b, k)
    if h is None:
        h = 0.5 * (lo + hi)
    if not lo < h < hi:
        raise ValueError(f"h={h} outside the admissible interval ({lo}, {hi})")
    a_hat = (k + 1) * (a - h)
    drift = a_hat - b
    if not drift > 0:
        raise ValueError("auxiliary walk has nonnegative drift")
    res = ResidualDistribution(cfg.service)
    coef = b / drift
    fbar = coef * float(res.tail(x))
    const = math.comb(s, k) * coef ** (s - k)
    return CorrectedUpperBound(
        float(x), float(y), float(h), a_hat, fbar, math.comb(s, k) * fbar ** (s - k), const
    )


def moment_condition(gamma: float, service: Distribution, s: int, k: int) -> str:
    """'finite', 'infinite' or 'undecided' for E D^gamma, via the minimum of s-k residual draws."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if isinstance(service, Deterministic):
        raise ValueError("moment criterion presumes a service law with unbounded support")
    if not 0 <= k < s:
        raise ValueError(f"need 0 <= k < s, got k={k}, s={s}")
    if isinstance(service, Pareto):
        return "finite" if gamma < (s - k) * (service.alpha - 1.0) else "infinite"
    cls = residual_tail_class(service)
    if not cls.rv and service.family in ("weibull", "lognormal", "exponential"):
        return "finite"
    return "undecided"


@dataclass
class BoundReport:
    x: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    asymptotic: np.ndarray
    lower_label: str
    upper_label: str
    asymptotic_label: str
    constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def rows(self):
        for j, x in enumerate(self.x):
            yield {
                "x": float(x),
                "lower": float(self.lower[j]),
                "upper": float(self.upper[j]),
                "asymptotic": float(self.asymptotic[j]),
                "lower_label": self.lower_label,
                "upper_label": self.upper_label,
                "asymptotic_label": self.asymptotic_label,
            }

    def to_csv(self, path) -> None:
        names = ["x", "lower", "upper", "asymptotic", "lower_label", "upper_label", "asymptotic_label"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=names)
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in row.items()})

    def to_json(self) -> dict:
        return {
            "rows": list(self.rows()),
            "constants": self.constants,
            "notes": self.notes,
            "form": ASYMPTOTIC,
        }


def bound_report(cfg: QueueConfig, x, delta_lower: float = 0.1, delta_upper: float = 0.05, h="midpoint") -> BoundReport:
    """Evaluate the applicable band and asymptotic for ``cfg`` on the grid ``x``.

    Light load (rho < 1) uses the s-power sandwich; otherwise the general
    (s-k)-power bounds.  A side that does not apply is NaN with a note.
    """
    x = np.asarray(x, dtype=float)
    nan = np.full_like(x, np.nan)
    s, rho, k = cfg.s, cfg.rho, cfg.k
    if cfg.service.mean == 0.0:
        zero = np.zeros_like(x)
        return BoundReport(x, zero, zero, zero, "degenerate: zero service", "degenerate: zero service",
                           "degenerate: zero service", {"rho": 0.0, "k": 0, "s": s})
    _check_rho(rho)
    if not cfg.stable:
        raise ValueError(f"bounds need a stable system: rho={rho} >= s={s}")
    res = ResidualDistribution(cfg.service)
    cls = res.heavy_tail_class
    lo_h, hi_h = choice_h_interval(cfg.a, cfg.b, k)
    hval = 0.5 * (lo_h + hi_h) if h == "midpoint" else float(h)
    consts = {"rho": rho, "k": k, "s": s, "delta_lower": delta_lower, "delta_upper": delta_upper, "h": hval}
    notes = []
    asym, asym_label = nan, "n/a"
    if k == 0:
        c_low, c_up = theorem5_constants(rho, s)
        tail_s = res.tail(x) ** s
        lower, lower_label = c_low * tail_s, "light-load lower form (rho^s/s!) Br^s(x)"
        if cls.subexponential:
            upper, upper_label = c_up * tail_s, "light-load upper form (rho/(1-rho))^s Br^s(x)"
        else:
            upper, upper_label = nan, "n/a: residual law not subexponential"
        consts.update(c_low=c_low, c_up=c_up)
        if s == 1 and cls.subexponential:
            asym, asym_label = singleserver_asymptotic(x, rho, res), "single-server equivalent rho/(1-rho) Br(x)"
        elif s == 2 and cls.subexponential:
            asym = np.array([theorem1_asymptotic(float(xi), cfg.a, cfg.service) for xi in x])
            asym_label = "two-server asymptotic equivalent"
    else:
        lower = theorem6_lower(x, rho, k, s, delta_lower, res)
        lower_label = f"k < rho < k+1 lower form (delta={delta_lower})"
        if cls.subexponential:
            upper = theorem6_upper(x, rho, k, s, delta_upper, res)
            upper_label = f"k < rho < k+1 upper form (delta={delta_upper})"
        else:
            upper, upper_label = nan, "n/a: residual law not subexponential"
        if s == 2 and cls.irv:
            asym, asym_label = theorem2_irv_asymptotic(x, rho, res), "two-server IRV asymptotic form"
    notes.append("lower side holds without assumptions on the service law")
    if not cls.ld and cls.subexponential:
        notes.append("residual law outside L∩D: lower and upper forms need not be of the same order")
    if not cls.subexponential:
        notes.append("service law not heavy-tailed; upper bound not applicable")
    return BoundReport(x, np.asarray(lower, float), np.asarray(upper, float), np.asarray(asym, float),
                       lower_label, upper_label, asym_label, consts, notes)
