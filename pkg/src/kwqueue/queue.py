"""Kiefer-Wolfowitz and Lindley recursions and the coupled constructions.

State conventions: ``W_n`` is the sorted workload vector seen by customer n
(``W_1`` is the initial vector), ``D_n = W_{n,1}`` and the step from n to n+1
consumes ``sigma_n`` and ``tau_{n+1}``.  Internally the engine tracks the
unsorted line workloads ``V_n`` so the lowest-index tie-break for the line
choice ``i_n`` is available; ``R(V_n) == W_n`` holds exactly.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _kernels as K
from .dist import Deterministic, Distribution, named_stream

__all__ = [
    "QueueConfig",
    "PathRecord",
    "ComparisonRecord",
    "MajorantPath",
    "r_sort",
    "kw_step",
    "lindley_step",
    "simulate_path",
    "iter_path_chunks",
    "coupled_comparison",
    "majorant_coupled_path",
    "choice_h_interval",
    "unstable_drift",
    "quantize",
]

DEFAULT_CHUNK = 1 << 20


@dataclass(frozen=True)
class QueueConfig:
    """An s-server FCFS queue with i.i.d. interarrival and service laws."""

    s: int
    interarrival: Distribution
    service: Distribution

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"server count must be a positive integer, got {self.s}")
        if not self.interarrival.mean > 0:
            raise ValueError("interarrival mean must be positive")

    @property
    def a(self) -> float:
        return self.interarrival.mean

    @property
    def b(self) -> float:
        return self.service.mean

    @property
    def rho(self) -> float:
        return self.b / self.a

    @property
    def k(self) -> int:
        return int(math.floor(self.rho))

    @property
    def stable(self) -> bool:
        return self.rho < self.s

    @property
    def integer_rho(self) -> bool:
        return self.rho == self.k

    def to_record(self) -> dict:
        return {
            "s": self.s,
            "interarrival": self.interarrival.to_record(),
            "service": self.service.to_record(),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_record(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class PathRecord:
    """Output of :func:`simulate_path`; optional arrays are ``None`` when not captured."""

    delays: np.ndarray
    seed: int
    config_hash: str
    workloads: np.ndarray | None = None
    assignments: np.ndarray | None = None
    sigma: np.ndarray | None = None
    tau: np.ndarray | None = None
    final: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.delays)

    def to_csv(self, path) -> None:
        """Columnar export: n, D_n, W_1..W_s, i_n, sigma_n, tau_n (captured ones only)."""
        cols = {"n": np.arange(1, self.n + 1), "D_n": self.delays}
        if self.workloads is not None:
            for r in range(self.workloads.shape[1]):
                cols[f"W_{r + 1}"] = self.workloads[:, r]
        if self.assignments is not None:
            cols["i_n"] = self.assignments + 1
        if self.sigma is not None:
            cols["sigma_n"] = self.sigma
        if self.tau is not None:
            cols["tau_n"] = self.tau
        names = list(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in zip(*(cols[c] for c in names)):
                w.writerow([_fmt(v) for v in row])

    def manifest(self, cfg: QueueConfig) -> dict:
        return {
            "config": cfg.to_record(),
            "config_hash": self.config_hash,
            "seed": self.seed,
            "n": self.n,
            "content_hash": hashlib.sha256(self.delays.tobytes()).hexdigest(),
        }


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v)) if not math.isfinite(v) else format(float(v), ".17g")


def r_sort(v) -> np.ndarray:
    """Coordinates in nondecreasing order (the operator R)."""
    return np.sort(np.asarray(v, dtype=float))


def kw_step(w, sigma: float, tau: float) -> np.ndarray:
    """One Kiefer-Wolfowitz step: R((W1+sigma-tau)^+, (W2-tau)^+, ..., (Ws-tau)^+)."""
    w = np.array(w, dtype=float)
    w[0] = w[0] + sigma
    w = w - tau
    return np.sort(np.maximum(w, 0.0))


def lindley_step(d: float, sigma: float, tau: float) -> float:
    return max((d + sigma) - tau, 0.0)


def quantize(x, bits: int = 20):
    """Round to the dyadic grid 2**-bits.

    Sums and differences of grid values below 2**(52 - bits) are exact in
    binary64, which makes coupled pathwise inequalities checkable without
    any tolerance.
    """
    scale = float(1 << bits)
    return np.round(np.asarray(x, dtype=float) * scale) / scale


def _draws(dist: Distribution, rng: np.random.Generator, size: int, bits: int | None):
    out = np.asarray(dist.sample(rng, size), dtype=float)
    if out.shape != (size,):
        out = np.broadcast_to(out, (size,)).copy()
    return quantize(out, bits) if bits is not None else out


def _init_vector(init, s: int) -> np.ndarray:
    v = np.zeros(s) if init is None else np.array(init, dtype=float).reshape(-1)
    if v.shape != (s,):
        raise ValueError(f"initial workload must have {s} coordinates, got {v.shape}")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("initial workload must be finite and nonnegative")
    return v.copy()


def iter_path_chunks(
    cfg: QueueConfig,
    n: int,
    seed: int,
    init=None,
    chunk: int = DEFAULT_CHUNK,
    want_assignments: bool = False,
    want_workloads: bool = False,
    bits: int | None = None,
) -> Iterator[dict]:
    """Stream a path in chunks.

    Yields dicts with ``start`` (0-based index of the first customer in the
    chunk), ``delays``, ``sigma``, ``tau`` (``tau[j]`` is the gap after
    customer j) and, when requested, ``assignments``/``workloads``.  The
    concatenation does not depend on ``chunk``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    v = _init_vector(init, cfg.s)
    rs = named_stream(seed, "service")
    rt = named_stream(seed, "interarrival")
    dummy_i = np.empty(0, dtype=np.int64)
    dummy_w = np.empty((0, cfg.s))
    start = 0
    while start < n:
        m = min(chunk, n - start)
        sig = _draws(cfg.service, rs, m, bits)
        tau = _draws(cfg.interarrival, rt, m, bits)
        delays = np.empty(m)
        idx = np.empty(m, dtype=np.int64) if want_assignments else dummy_i
        trace = np.empty((m, cfg.s)) if want_workloads else dummy_w
        K.kw_advance(v, sig, tau, delays, idx, trace, want_assignments, want_workloads)
        out = {"start": start, "delays": delays, "sigma": sig, "tau": tau, "state": v.copy()}
        if want_assignments:
            out["assignments"] = idx
        if want_workloads:
            out["workloads"] = trace
        yield out
        start += m


def simulate_path(
    cfg: QueueConfig,
    n: int,
    seed: int,
    init=None,
    *,
    capture_workloads: bool = False,
    capture_assignments: bool = False,
    capture_draws: bool = False,
    chunk: int = DEFAULT_CHUNK,
) -> PathRecord:
    """Simulate D_1..D_n from ``init`` (zeros by default); deterministic in ``seed``."""
    parts: dict[str, list] = {"delays": [], "workloads": [], "assignments": [], "sigma": [], "tau": []}
    final = None
    for c in iter_path_chunks(cfg, n, seed, init, chunk, capture_assignments, capture_workloads):
        parts["delays"].append(c["delays"])
        if capture_workloads:
            parts["workloads"].append(c["workloads"])
        if capture_assignments:
            parts["assignments"].append(c["assignments"])
        if capture_draws:
            parts["sigma"].append(c["sigma"])
            parts["tau"].append(c["tau"])
        final = c["state"]
    cat = lambda key: np.concatenate(parts[key]) if parts[key] else None  # noqa: E731
    return PathRecord(
        delays=cat("delays"),
        seed=seed,
        config_hash=cfg.digest(),
        workloads=cat("workloads"),
        assignments=cat("assignments"),
        sigma=cat("sigma"),
        tau=cat("tau"),
        final=np.sort(final),
    )


@dataclass
class ComparisonRecord:
    d_tilde: np.ndarray
    d_hat: np.ndarray
    m_prev: np.ndarray
    violations: int

    def holds(self) -> bool:
        return self.violations == 0


def coupled_comparison(
    s: int,
    service: Distribution,
    tau_tilde: Distribution,
    tau_hat: Distribution,
    n: int,
    seed: int,
    *,
    bits: int | None = 20,
    record: bool = True,
    chunk: int = DEFAULT_CHUNK,
) -> ComparisonRecord:
    """Two s-server systems sharing service times, differing in interarrivals.

    Checks ``D~_n <= D^_n + M_{n-1}`` with ``M_0 = 0`` and
    ``M_n = (M_{n-1} + tau^_{n+1} - tau~_{n+1})^+`` at every step.  When
    ``tau_tilde is tau_hat`` the same draws feed both systems.  ``bits``
    quantizes all draws (see :func:`quantize`) so the check is exact;
    ``None`` uses raw doubles.
    """
    rs = named_stream(seed, "service")
    rt = named_stream(seed, "interarrival")
    rh = named_stream(seed, "interarrival-hat")
    vt = np.zeros(s)
    vh = np.zeros(s)
    m = 0.0
    bad = 0
    out_t, out_h, out_m = [], [], []
    start = 0
    while start < n:
        c = min(chunk, n - start)
        sig = _draws(service, rs, c, bits)
        tt = _draws(tau_tilde, rt, c, bits)
        th = tt if tau_hat is tau_tilde else _draws(tau_hat, rh, c, bits)
        dt = np.empty(c if record else 0)
        dh = np.empty_like(dt)
        mm = np.empty_like(dt)
        b, m = K.comparison_advance(vt, vh, sig, tt, th, m, dt, dh, mm, record)
        bad += b
        if record:
            out_t.append(dt)
            out_h.append(dh)
            out_m.append(mm)
        start += c
    if bits is not None:
        _check_exact(max(vt.max(), vh.max(), m), bits)
    cat = lambda xs: np.concatenate(xs) if xs else np.empty(0)  # noqa: E731
    return ComparisonRecord(cat(out_t), cat(out_h), cat(out_m), int(bad))


def _check_exact(largest: float, bits: int) -> None:
    if largest >= 2.0 ** (52 - bits):
        raise ArithmeticError(f"workload {largest:g} left the exact dyadic range for {bits}-bit grid")


def choice_h_interval(a: float, b: float, k: int) -> tuple[float, float]:
    """Open interval of admissible spacing reductions h for the majorant."""
    hi = a - b / (k + 1)
    return k / (k + 1) * hi, hi


@dataclass
class MajorantPath:
    """Joint path of the D/GI/s system and its s auxiliary D/GI/1 queues."""

    delays: np.ndarray
    aux: np.ndarray
    aux_order: np.ndarray
    assignments: np.ndarray
    k: int
    h: float
    a_hat: float
    seed: int


def majorant_coupled_path(
    cfg: QueueConfig, n: int, seed: int, h: float | None = None, chunk: int = DEFAULT_CHUNK
) -> MajorantPath:
    """Order-statistic majorant construction with auxiliary spacing (k+1)(a-h).

    ``cfg.interarrival`` must be deterministic.  ``h`` defaults to the midpoint
    of the admissible interval.
    """
    if not isinstance(cfg.interarrival, Deterministic):
        raise ValueError("majorant construction needs deterministic interarrival times")
    a, b, k, s = cfg.a, cfg.b, cfg.k, cfg.s
    if not cfg.rho < k + 1 or cfg.integer_rho:
        raise ValueError(f"majorant construction requires k < rho < k+1, got rho={cfg.rho}")
    if k >= s:
        raise ValueError("majorant construction requires a stable system (rho < s)")
    lo, hi = choice_h_interval(a, b, k)
    if h is None:
        h = 0.5 * (lo + hi)
    if not lo < h < hi:
        raise ValueError(f"h={h} outside the admissible interval ({lo}, {hi})")
    a_hat = (k + 1) * (a - h)
    streams = [named_stream(seed, f"service-{i}") for i in range(s)]
    v = np.zeros(s)
    u = np.zeros(s)
    ds, us, uo, ix = [], [], [], []
    start = 0
    while start < n:
        c = min(chunk, n - start)
        sig = np.column_stack([_draws(cfg.service, r, c, None) for r in streams])
        d = np.empty(c)
        uu = np.empty((c, s))
        o = np.empty(c)
        i = np.empty(c, dtype=np.int64)
        K.majorant_advance(v, u, sig, float(a), float(a_hat), k, d, uu, o, i)
        ds.append(d)
        us.append(uu)
        uo.append(o)
        ix.append(i)
        start += c
    return MajorantPath(
        np.concatenate(ds), np.concatenate(us), np.concatenate(uo), np.concatenate(ix), k, float(h), float(a_hat), seed
    )


def unstable_drift(cfg: QueueConfig, n: int, seed: int, init=None) -> tuple[float, float]:
    """(W_{n,1}/n, W_{n,s}/n) for an overloaded system; both tend to (b - s a)/s."""
    if not cfg.rho > cfg.s:
        raise ValueError(f"drift check needs rho > s, got rho={cfg.rho}, s={cfg.s}")
    v = _init_vector(init, cfg.s)
    if n > 1:
        *_, last = iter_path_chunks(cfg, n - 1, seed, v)
        v = last["state"]
    w = np.sort(v)
    return float(w[0] / n), float(w[-1] / n)
