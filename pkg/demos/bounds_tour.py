"""The analytic side alone: no simulation, runs in a second or two.

1. For two servers under light load with a regularly varying service law,
   P{D > x} / Br(x)^2 tends to a constant that depends only on the index and
   the load.  The constant must lie in the band the general bounds allow.
2. The same ratio computed from the integral formula at finite x.  For a
   pure Pareto law every tail involved is an exact power beyond the scale
   parameter, so the ratio equals the limit constant from there on; below
   the scale it differs.
3. For k < rho < k+1 the bounds keep the exponent s - k fixed while the
   constants blow up as rho approaches an integer.
"""
import numpy as np

from kwqueue.bounds import (
    bound_report,
    theorem1_asymptotic,
    theorem1_bound_constants,
    theorem1_rv_constant,
    theorem6_upper_constant,
)
from kwqueue.dist import Deterministic, Pareto, ResidualDistribution
from kwqueue.queue import QueueConfig

print("1. limit constant c(index, rho) against the band [low, high]")
print(f"{'rho':>5} " + " ".join(f"{'index ' + str(g):>22}" for g in (1.5, 2.5, 4.0)))
for rho in (0.1, 0.5, 0.9):
    lo, hi = theorem1_bound_constants(rho)
    cells = [f"{lo:.4f}<{theorem1_rv_constant(g, rho):.4f}<{hi:.4f}" for g in (1.5, 2.5, 4.0)]
    print(f"{rho:5g} " + " ".join(f"{c:>22}" for c in cells))

print("\n2. finite-x ratio for Pareto(2.5) service of mean 1 (scale 0.6), spacing 2 (rho = 0.5)")
service = Pareto.with_mean(2.5, 1.0)
res = ResidualDistribution(service)
limit = theorem1_rv_constant(2.5, 0.5)
for x in (0.05, 0.2, 0.4, 0.6, 1.0, 1e3):
    ratio = theorem1_asymptotic(float(x), 2.0, service) / float(res.tail(x)) ** 2
    print(f"   x={x:8g}  ratio={ratio:.5f}  (limit {limit:.5f})")

print("\n3. three servers, Pareto(3) service, loads between 1 and 2 (k = 1)")
for rho in (1.1, 1.5, 1.9):
    cfg = QueueConfig(3, Deterministic(1.0), Pareto.with_mean(3.0, rho))
    rep = bound_report(cfg, [10.0, 100.0])
    lo, up = rep.lower, rep.upper
    print(f"   rho={rho}: upper constant {theorem6_upper_constant(rho, 1, 3):8.1f}; "
          f"x=10: [{lo[0]:.2e}, {up[0]:.2e}]  x=100: [{lo[1]:.2e}, {up[1]:.2e}]")
