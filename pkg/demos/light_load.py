"""Light load: one long queue against two parallel lines.

With Poisson arrivals every 2 time units on average and Pareto(2.5) service
of mean 1, the load is rho = 0.5.  A single server waits more than x with
probability close to rho/(1-rho) times the residual tail Br(x).  Adding a
second server squares the residual tail: the delay tail of the two-server
queue sits between (rho^2/2) Br(x)^2 and (rho/(1-rho))^2 Br(x)^2.

Run:  python3 demos/light_load.py  [steps]   (default 4e6, about ten seconds)
"""
import sys

import numpy as np

from kwqueue.bounds import bound_report, singleserver_asymptotic
from kwqueue.dist import Exponential, Pareto, ResidualDistribution
from kwqueue.estimate import estimate_tail
from kwqueue.queue import QueueConfig

n = int(float(sys.argv[1])) if len(sys.argv) > 1 else 4_000_000
service = Pareto.with_mean(2.5, 1.0)
res = ResidualDistribution(service)
xs = np.array([1.0, 2.0, 4.0, 8.0, 16.0, 32.0])

one = QueueConfig(1, Exponential(0.5), service)
print(f"single server, rho = {one.rho:g}, {n:.0e} customers")
print(f"{'x':>6} {'simulated':>11} {'rho/(1-rho) Br':>15} {'ratio':>7}")
for e in estimate_tail(one, xs, n, seed=1):
    pred = float(singleserver_asymptotic(e.x, one.rho, res))
    print(f"{e.x:6g} {e.p_hat:11.3e} {pred:15.3e} {e.p_hat / pred:7.3f}")

two = QueueConfig(2, Exponential(0.5), service)
rep = bound_report(two, xs)
print(f"\ntwo servers, same traffic: the tail now decays like Br(x)^2")
print(f"{'x':>6} {'lower':>11} {'simulated':>11} {'upper':>11} {'two-server limit':>17}")
for e, lo, up, asym in zip(estimate_tail(two, xs, n, seed=1), rep.lower, rep.upper, rep.asymptotic):
    print(f"{e.x:6g} {lo:11.3e} {e.p_hat:11.3e} {up:11.3e} {asym:17.3e}")
print("\nthe simulated column should sit inside [lower, upper] and approach the limit as x grows;")
print("at the largest x the run may not have seen enough waits to say much.")
