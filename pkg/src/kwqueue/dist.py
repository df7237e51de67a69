"""Service and interarrival laws with exact tails and the integrated-tail transform.

Every family is sampled by inverse transform of a single uniform draw, so two
systems fed from the same named stream see identical uniforms (common random
numbers).  ``from_uniform(u)`` maps a tail probability ``u`` in (0, 1] to the
point ``x`` with ``tail(x) == u``.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy import special

__all__ = [
    "Distribution",
    "Pareto",
    "Weibull",
    "Lognormal",
    "Exponential",
    "Deterministic",
    "ResidualDistribution",
    "HeavyTailClass",
    "tail_class",
    "residual_tail_class",
    "make_distribution",
    "named_stream",
    "min_residual_tail",
]


def named_stream(seed: int, name: str) -> np.random.Generator:
    """Seedable stream keyed by ``(seed, name)``.

    Distinct names give statistically independent PCG64 substreams; the same
    pair always reproduces the same sequence.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()),))
    return np.random.Generator(np.random.PCG64(ss))


def _uniform_tail(rng: np.random.Generator, size) -> np.ndarray:
    # (0, 1]: keeps log/power inversions finite
    return 1.0 - rng.random(size)


@dataclass(frozen=True)
class HeavyTailClass:
    """Static membership flags for the nested classes RV, IRV, L∩D, S."""

    rv: bool = False
    irv: bool = False
    long_tailed: bool = False
    dominated: bool = False
    subexponential: bool = False
    index: float | None = None

    @property
    def ld(self) -> bool:
        return self.long_tailed and self.dominated

    def consistent(self) -> bool:
        """True when the flags respect RV ⊂ IRV ⊂ L∩D ⊂ S."""
        if self.rv and not self.irv:
            return False
        if self.irv and not self.ld:
            return False
        if self.ld and not self.subexponential:
            return False
        if self.rv != (self.index is not None):
            return False
        return True


_LIGHT = HeavyTailClass()


class Distribution:
    """Base class; subclasses are frozen dataclasses holding the parameters."""

    family: ClassVar[str] = ""

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def tail(self, x):
        """P{X > x}, vectorised over ``x``."""
        raise NotImplementedError

    def from_uniform(self, u):
        """Inverse tail transform: the ``x`` with ``tail(x) == u``."""
        raise NotImplementedError

    def integrated_tail(self, x):
        """Closed form of the integral of ``tail`` over (x, inf), x >= 0."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        return self.from_uniform(_uniform_tail(rng, size))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where the tail is not smooth (for quadrature splitting)."""
        return ()

    @property
    def unbounded(self) -> bool:
        return True

    def params(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}  # type: ignore[attr-defined]

    def to_record(self) -> dict:
        return {"family": self.family, "params": self.params()}


@dataclass(frozen=True)
class Pareto(Distribution):
    alpha: float
    xm: float = 1.0
    family: ClassVar[str] = "pareto"

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError(f"Pareto shape must exceed 1 for a finite mean, got {self.alpha}")
        if not self.xm > 0.0:
            raise ValueError(f"Pareto scale must be positive, got {self.xm}")

    @classmethod
    def with_mean(cls, alpha: float, mean: float) -> "Pareto":
        return cls(alpha, mean * (alpha - 1.0) / alpha)

    @property
    def mean(self) -> float:
        return self.alpha * self.xm / (self.alpha - 1.0)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(x < self.xm, 1.0, (self.xm / np.maximum(x, self.xm)) ** self.alpha)
        return out[()] if out.ndim == 0 else out

    def from_uniform(self, u):
        return self.xm * np.asarray(u, dtype=float) ** (-1.0 / self.alpha)

    def integrated_tail(self, x):
        x = np.asarray(x, dtype=float)
        a, xm = self.alpha, self.xm
        above = xm ** a * np.maximum(x, xm) ** (1.0 - a) / (a - 1.0)
        below = xm - x + xm / (a - 1.0)
        out = np.where(x >= xm, above, below)
        return out[()] if out.ndim == 0 else out

    @property
    def breakpoints(self):
        return (self.xm,)


@dataclass(frozen=True)
class Weibull(Distribution):
    shape: float
    scale: float = 1.0
    family: ClassVar[str] = "weibull"

    def __post_init__(self):
        if not 0.0 < self.shape <= 1.0:
            raise ValueError(f"Weibull shape must lie in (0, 1], got {self.shape}")
        if not self.scale > 0.0:
            raise ValueError(f"Weibull scale must be positive, got {self.scale}")

    @property
    def mean(self) -> float:
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        out = np.exp(-((np.maximum(x, 0.0) / self.scale) ** self.shape))
        return out[()] if out.ndim == 0 else out

    def from_uniform(self, u):
        return self.scale * (-np.log(np.asarray(u, dtype=float))) ** (1.0 / self.shape)

    def integrated_tail(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self.mean * special.gammaincc(1.0 / self.shape, (x / self.scale) ** self.shape)


@dataclass(frozen=True)
class Lognormal(Distribution):
    mu: float = 0.0
    sigma2: float = 1.0
    family: ClassVar[str] = "lognormal"

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise ValueError(f"Lognormal variance must be positive, got {self.sigma2}")

    @property
    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma2)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        sd = math.sqrt(self.sigma2)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, 0.0)) - self.mu) / sd
        out = special.ndtr(-z)
        return out[()] if np.ndim(out) == 0 else out

    def from_uniform(self, u):
        return np.exp(self.mu - math.sqrt(self.sigma2) * special.ndtri(np.asarray(u, dtype=float)))

    def integrated_tail(self, x):
        # E(X - x)^+ for x > 0
        x = np.asarray(x, dtype=float)
        sd = math.sqrt(self.sigma2)
        with np.errstate(divide="ignore"):
            lx = np.log(np.maximum(x, 0.0))
        first = self.mean * special.ndtr((self.mu + self.sigma2 - lx) / sd)
        second = np.where(x > 0, x * special.ndtr((self.mu - lx) / sd), 0.0)
        out = np.maximum(first - second, 0.0)
        return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float = 1.0
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        if not self.rate > 0.0:
            raise ValueError(f"Exponential rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        out = np.exp(-self.rate * np.maximum(x, 0.0))
        return out[()] if out.ndim == 0 else out

    def from_uniform(self, u):
        return -np.log(np.asarray(u, dtype=float)) / self.rate

    def integrated_tail(self, x):
        return np.exp(-self.rate * np.maximum(np.asarray(x, dtype=float), 0.0)) / self.rate


@dataclass(frozen=True)
class Deterministic(Distribution):
    value: float = 0.0
    family: ClassVar[str] = "deterministic"

    def __post_init__(self):
        if not self.value >= 0.0:
            raise ValueError(f"Deterministic value must be nonnegative, got {self.value}")

    @property
    def mean(self) -> float:
        return float(self.value)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < self.value, 1.0, 0.0)
        return out[()] if out.ndim == 0 else out

    def from_uniform(self, u):
        return np.full(np.shape(u), float(self.value))[()]

    def sample(self, rng, size=None):
        # consumes nothing from the stream
        return np.full(() if size is None else size, float(self.value))[()]

    def integrated_tail(self, x):
        return np.maximum(self.value - np.asarray(x, dtype=float), 0.0)

    @property
    def breakpoints(self):
        return (float(self.value),)

    @property
    def unbounded(self) -> bool:
        return False


_FAMILIES = {cls.family: cls for cls in (Pareto, Weibull, Lognormal, Exponential, Deterministic)}


def make_distribution(family: str, params: dict | None = None) -> Distribution:
    """Build a distribution from a ``{family, params}`` record.

    Pareto also accepts ``{alpha, mean}`` in place of ``{alpha, xm}``.
    """
    params = dict(params or {})
    try:
        cls = _FAMILIES[family.lower()]
    except KeyError:
        raise ValueError(f"unknown distribution family {family!r}; expected one of {sorted(_FAMILIES)}") from None
    if cls is Pareto and "mean" in params:
        return Pareto.with_mean(params["alpha"], params["mean"])
    return cls(**params)


def tail_class(dist: Distribution) -> HeavyTailClass:
    """Class flags of the law itself."""
    if isinstance(dist, Pareto):
        return HeavyTailClass(True, True, True, True, True, dist.alpha)
    if isinstance(dist, Weibull) and dist.shape < 1.0:
        return HeavyTailClass(long_tailed=True, subexponential=True)
    if isinstance(dist, Lognormal):
        return HeavyTailClass(long_tailed=True, subexponential=True)
    return _LIGHT


def residual_tail_class(dist: Distribution) -> HeavyTailClass:
    """Class flags of the integrated-tail law built from ``dist``."""
    if isinstance(dist, Pareto):
        return HeavyTailClass(True, True, True, True, True, dist.alpha - 1.0)
    return tail_class(dist)


class ResidualDistribution:
    """Integrated-tail (stationary excess) law of a base distribution.

    Its tail is ``integral_x^inf base.tail(y) dy / base.mean``.  ``method`` is
    ``"closed"`` (analytic, the default) or ``"quadrature"`` (numerical
    integration of the base tail, kept as a fallback and cross-check).
    """

    def __init__(self, base: Distribution, method: str = "closed", inverse_tol: float = 1e-10):
        if not base.mean > 0.0:
            raise ValueError("residual law needs a base distribution with positive mean")
        if method not in ("closed", "quadrature"):
            raise ValueError(f"method must be 'closed' or 'quadrature', got {method!r}")
        self.base = base
        self.method = method
        self.inverse_tol = inverse_tol

    closed_form = property(lambda self: self.method == "closed")

    @property
    def mean_base(self) -> float:
        return self.base.mean

    @property
    def heavy_tail_class(self) -> HeavyTailClass:
        return residual_tail_class(self.base)

    def __repr__(self):
        return f"ResidualDistribution({self.base!r})"

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        if self.method == "quadrature":
            from .bounds import quadrature

            flat = np.atleast_1d(x).ravel()
            vals = np.empty_like(flat)
            for j, xj in enumerate(flat):
                if xj <= 0:
                    vals[j] = 1.0
                    continue
                lo = float(xj)
                pieces = sorted({lo, *[p for p in self.base.breakpoints if p > lo]})
                total = 0.0
                for p0, p1 in zip(pieces, pieces[1:]):
                    total += quadrature(self.base.tail, p0, p1, abs_tol=1e-13).value
                if self.base.unbounded:
                    total += quadrature(self.base.tail, pieces[-1], np.inf, abs_tol=1e-13).value
                vals[j] = total / self.base.mean
            out = vals.reshape(x.shape)
        else:
            out = np.where(x <= 0.0, 1.0, self.base.integrated_tail(np.maximum(x, 0.0)) / self.base.mean)
            out = np.clip(out, 0.0, 1.0)
        return out[()] if np.ndim(out) == 0 else out

    def from_uniform(self, u):
        """Inverse of ``tail``; closed form where available, bisection otherwise."""
        u = np.asarray(u, dtype=float)
        base = self.base
        if isinstance(base, Pareto):
            a, xm = base.alpha, base.xm
            knee = 1.0 / a  # tail value at xm
            with np.errstate(divide="ignore", invalid="ignore"):
                upper = xm * (a * u) ** (-1.0 / (a - 1.0))
            out = np.where(u <= knee, upper, base.mean * (1.0 - u))
        elif isinstance(base, Exponential):
            out = -np.log(u) / base.rate
        elif isinstance(base, Deterministic):
            out = base.value * (1.0 - u)
        else:
            out = self._bisect(u).reshape(u.shape)
        return out[()] if np.ndim(out) == 0 else out

    def _bisect(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_1d(u).astype(float)
        lo = np.zeros_like(u)
        hi = np.full_like(u, max(self.base.mean, 1.0))
        for _ in range(2000):
            short = self.tail(hi) > u
            if not short.any():
                break
            hi[short] *= 2.0
        else:
            raise RuntimeError("residual inversion failed to bracket the target probability")
        for _ in range(200):
            gap = self.tail(lo) - self.tail(hi)
            if np.all(gap <= self.inverse_tol):
                break
            mid = 0.5 * (lo + hi)
            above = self.tail(mid) > u
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        else:
            raise RuntimeError(f"residual inversion stalled; worst probability gap {gap.max():.3e}")
        return 0.5 * (lo + hi)

    def sample(self, rng: np.random.Generator, size=None):
        return self.from_uniform(_uniform_tail(rng, size))


def min_residual_tail(res: ResidualDistribution, m: int, x):
    """Tail of the minimum of ``m`` independent residual draws."""
    if m < 1:
        raise ValueError("m must be at least 1")
    return res.tail(x) ** m
