"""Experiment configuration: TOML in, canonical JSON for hashing.

A config file looks like::

    name = "sandwich"
    x_grid = { geometric = { start = 5.0, ratio = 2.0, count = 4 } }

    [queue]
    s = 2
    interarrival = { family = "deterministic", params = { value = 1.0 } }
    service = { family = "pareto", params = { alpha = 3.0, mean = 1.5 } }

    [run]
    n = 100000000
    seeds = [1]

Missing sections take the defaults below.  ``canonical()`` fills every
default in, so two files that differ only in spelled-out defaults hash alike.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields

import numpy as np
import tomli
import tomli_w

from .dist import make_distribution
from .queue import QueueConfig

DIAGNOSTICS = ("bigjump", "hill", "moments", "majorant", "coupling", "slln", "qk")

DIAGNOSTIC_DEFAULTS = {
    "bigjump": {"x": [], "window": 0, "slope": "drift", "threshold": 0.8},
    "hill": {"every": 100, "fractions": [0.005, 0.01, 0.02], "tolerance": 0.3},
    "moments": {"gamma": [1.0, 2.5], "n": 10**7, "tolerance": 0.1},
    "majorant": {"t": [], "n": 10**7, "max_frequency": 1e-3},
    "coupling": {"n": 10**6, "ratio": 1.1},
    "slln": {"n": 10**6, "tolerance": 0.05},
    "qk": {"count": 1000},
}


class ConfigError(ValueError):
    pass


def _dist_record(d: dict, where: str) -> dict:
    if not isinstance(d, dict) or "family" not in d:
        raise ConfigError(f"{where} needs a 'family' key")
    params = {k: float(v) for k, v in sorted(dict(d.get("params", {})).items())}
    out = {"family": str(d["family"]).lower(), "params": params}
    try:
        make_distribution(out["family"], params)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{where}: {e}") from None
    return out


def expand_grid(spec) -> list[float]:
    """Explicit list, or ``{"geometric": {start, ratio, count}}``."""
    if isinstance(spec, dict):
        g = spec.get("geometric")
        if not isinstance(g, dict):
            raise ConfigError("x_grid table must be {geometric = {start, ratio, count}}")
        start, ratio, count = float(g["start"]), float(g["ratio"]), int(g["count"])
        if start <= 0 or ratio <= 1 or count < 1:
            raise ConfigError("geometric x_grid needs start > 0, ratio > 1, count >= 1")
        return [start * ratio**i for i in range(count)]
    xs = [float(v) for v in spec]
    if not xs or any(not math.isfinite(v) or v < 0 for v in xs) or xs != sorted(set(xs)):
        raise ConfigError("x_grid must be a nonempty strictly increasing list of nonnegative numbers")
    return xs


def _grid_record(spec):
    if isinstance(spec, dict):
        g = spec["geometric"]
        return {"geometric": {"start": float(g["start"]), "ratio": float(g["ratio"]), "count": int(g["count"])}}
    return [float(v) for v in spec]


@dataclass
class ExperimentConfig:
    name: str
    queue: dict
    x_grid: object
    run: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        for key in ("name", "queue", "x_grid"):
            if key not in raw:
                raise ConfigError(f"missing required key {key!r}")
        q = raw["queue"]
        queue = {
            "s": int(q["s"]),
            "interarrival": _dist_record(q["interarrival"], "queue.interarrival"),
            "service": _dist_record(q["service"], "queue.service"),
        }
        if queue["s"] < 1:
            raise ConfigError("queue.s must be at least 1")
        grid = _grid_record(raw["x_grid"])
        expand_grid(grid)
        r = dict(raw.get("run", {}))
        run = {
            "n": int(r.get("n", 10**7)),
            "burn_in": int(r.get("burn_in", -1)),
            "batches": int(r.get("batches", 32)),
            "seeds": [int(v) for v in r.get("seeds", [1])],
            "chunk": int(r.get("chunk", 1 << 20)),
        }
        if not run["seeds"]:
            raise ConfigError("run.seeds must not be empty")
        b = dict(raw.get("bounds", {}))
        h = b.get("h", "midpoint")
        bounds = {
            "delta_lower": float(b.get("delta_lower", 0.1)),
            "delta_upper": float(b.get("delta_upper", 0.05)),
            "h": h if h == "midpoint" else float(h),
            "slack": float(b.get("slack", 2.0)),
            "power_hits": float(b.get("power_hits", 30.0)),
        }
        d = raw.get("diagnostics", {})
        if isinstance(d, list):
            d = {name: {} for name in d}
        diagnostics = {}
        for name, opts in sorted(dict(d).items()):
            if name not in DIAGNOSTIC_DEFAULTS:
                raise ConfigError(f"unknown diagnostic {name!r}; choose from {list(DIAGNOSTICS)}")
            merged = dict(DIAGNOSTIC_DEFAULTS[name])
            extra = set(opts) - set(merged)
            if extra:
                raise ConfigError(f"diagnostics.{name}: unknown keys {sorted(extra)}")
            merged.update(opts)
            diagnostics[name] = _normalize(merged, DIAGNOSTIC_DEFAULTS[name])
        o = dict(raw.get("output", {}))
        output = {"directory": str(o.get("directory", f"runs/{raw['name']}"))}
        return cls(str(raw["name"]), queue, grid, run, bounds, diagnostics, output)

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as e:
            raise ConfigError(f"config is not valid TOML: {e}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_toml(fh.read().decode("utf-8"))

    def canonical(self) -> dict:
        return {
            "name": self.name,
            "queue": self.queue,
            "x_grid": self.x_grid,
            "run": self.run,
            "bounds": self.bounds,
            "diagnostics": self.diagnostics,
            "output": self.output,
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.canonical())

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(blob.encode()).hexdigest()

    def queue_config(self) -> QueueConfig:
        q = self.queue
        return QueueConfig(
            q["s"],
            make_distribution(q["interarrival"]["family"], q["interarrival"]["params"]),
            make_distribution(q["service"]["family"], q["service"]["params"]),
        )

    def xs(self) -> np.ndarray:
        return np.asarray(expand_grid(self.x_grid), dtype=float)

    def burn_in(self) -> int | None:
        return None if self.run["burn_in"] < 0 else self.run["burn_in"]

    def with_seeds(self, seeds) -> "ExperimentConfig":
        raw = self.canonical()
        raw = json.loads(json.dumps(raw))
        raw["run"]["seeds"] = [int(v) for v in seeds]
        return ExperimentConfig.from_dict(raw)


def _normalize(opts: dict, defaults: dict) -> dict:
    out = {}
    for key, dv in defaults.items():
        v = opts[key]
        if isinstance(dv, list):
            out[key] = [float(z) for z in v]
        elif isinstance(dv, bool):
            out[key] = bool(v)
        elif isinstance(dv, int) and not isinstance(v, str):
            out[key] = int(v)
        elif isinstance(dv, float):
            out[key] = float(v)
        elif key == "slope" and not isinstance(v, str):
            out[key] = float(v)
        else:
            out[key] = v
    return dict(sorted(out.items()))
