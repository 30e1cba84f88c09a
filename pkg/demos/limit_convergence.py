"""Large-market limit of the herding chain and the convergence rate.

Simulates the two-state market at increasing sizes from a common initial
opinion, compares each path against the deterministic opinion ODE, and
checks the measured sup-distances against the 1/sqrt(n) theoretical bound.
"""

import math

import numpy as np

from herdmarket import (
    LuxPureParams,
    convergence_constant,
    rate_comparison,
    simulate_pure,
)
from herdmarket.lux import pure_limit_ode


def main():
    beta, gamma, v0, horizon = 0.3, 0.8, 0.5, 0.15
    ns = [100, 400, 1600]
    seeds = range(50)
    family = lambda n: LuxPureParams(n=n, beta=beta, gamma=gamma, initial_vbar=v0)
    limit = pure_limit_ode(family(ns[0]), v0, horizon)
    out = rate_comparison(
        family, limit, ns=ns, horizon=horizon, seeds=seeds,
        observable=lambda p: (p.times, p.vbar, p.initial_vbar),
        simulate=simulate_pure,
    )
    const = convergence_constant(beta, gamma)
    print("sup-distance between the n-agent opinion path and its ODE limit")
    print("theoretical bound: %.4f / sqrt(n)" % const)
    print()
    print("%-8s %-12s %-12s %-12s" % ("n", "mean dist", "max dist", "bound"))
    for n, mx in zip(out["ns"], out["max_distance"]):
        mean = float(np.mean(out["distances"][n]))
        print("%-8d %-12.4f %-12.4f %-12.4f" % (n, mean, mx, const / math.sqrt(n)))
    print()
    print("log-log regression slope: %.3f (theory: -1/2)" % out["slope"])


if __name__ == "__main__":
    main()
