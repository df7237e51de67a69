"""How a long wait happens when one server is not enough.

Two servers, a customer every time unit, Pareto(3) service of mean 1.5:
rho = 1.5, so one server alone would be overloaded but two cope.  A long wait
at the second line needs one huge service time sitting in front of the
arriving customer (s - k = 1 of them).  The scanner counts, among customers
waiting more than x, how many had such a service time in the recent past,
and the traced lags show how far back it was.

The tail then behaves like Br(x)^(s-k) = Br(x), a power law of index 2,
which the Hill estimator recovers from a thinned sample of delays.

Run:  python3 demos/big_jumps.py  [steps]   (default 2e7, under a minute)
"""
import sys

import numpy as np

from kwqueue.bounds import bound_report
from kwqueue.dist import Deterministic, Pareto
from kwqueue.estimate import TailCounter, Thinner, default_burn_in, hill_sensitivity, make_bigjump_scanner, run_stationary
from kwqueue.queue import QueueConfig

n = int(float(sys.argv[1])) if len(sys.argv) > 1 else 20_000_000
cfg = QueueConfig(2, Deterministic(1.0), Pareto.with_mean(3.0, 1.5))
burn = default_burn_in(n)
xs = [5.0, 10.0, 20.0, 40.0]

counter = TailCounter(xs, n, burn)
scanners = [make_bigjump_scanner(cfg, x, burn, trace=5) for x in (10.0, 20.0, 40.0)]
thin = Thinner(burn, every=20)
run_stationary(cfg, n, seed=1, consumers=[counter, *scanners, thin])

print(f"rho = {cfg.rho:g}, s = {cfg.s}, k = {cfg.k}; {n:.0e} customers after {burn:.0e} burn-in\n")
rep = bound_report(cfg, xs)
print(f"{'x':>5} {'lower':>10} {'simulated':>10} {'upper':>10}")
for e, lo, up in zip(counter.result(), rep.lower, rep.upper):
    print(f"{e.x:5g} {lo:10.3e} {e.p_hat:10.3e} {up:10.3e}")

print("\nlong waits explained by one big service time:")
for sc in scanners:
    r = sc.result()
    freq = "n/a" if r.frequency is None else f"{r.frequency:.3f}"
    print(f"  x={r.x:4g}: {r.matched_events}/{r.conditioning_events} = {freq}   (window {r.window}, slope {r.slope:g})")
    for row in r.lags[:3]:
        print(f"      customer {row[-1] + 1}: big service {row[0]} arrivals earlier")

sample = thin.result()
print(f"\nHill estimates of the delay tail index from {len(sample)} delays (predicted 2):")
for est in hill_sensitivity(sample):
    print(f"  top {est.m:6d}: {est.alpha_hat:.3f}")
print(f"largest delay seen: {np.max(sample):.1f}")
