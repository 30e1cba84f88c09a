"""Closed-form stationary law of the two-state herding market.

Sweeps the herding strength through the critical value and shows the
stationary distribution of the average opinion switching from a single
peak at zero to two symmetric peaks, plus the exact location of the
switch for n = 100 agents.
"""

import numpy as np

from herdmarket import LuxPureParams, gamma_threshold, stationary_distribution


def main():
    n = 100
    thr = gamma_threshold(n)
    print("critical herding strength for n=%d: %.6f" % (n, thr))
    print()
    print("%-8s %-16s %-10s %-10s" % ("gamma", "mode structure", "P(|v|<0.1)", "P(|v|>0.5)"))
    for gamma in (0.5, 0.8, thr - 1e-3, thr + 1e-3, 1.2, 1.5):
        dist = stationary_distribution(LuxPureParams(n=n, beta=0.2, gamma=gamma))
        lattice, p = dist.lattice, dist.probabilities
        center = float(p[np.abs(lattice) < 0.1].sum())
        tails = float(p[np.abs(lattice) > 0.5].sum())
        print("%-8.4f %-16s %-10.3f %-10.3f" % (gamma, dist.mode_structure, center, tails))

    print()
    print("supercritical (gamma=1.2) peak locations:")
    dist = stationary_distribution(LuxPureParams(n=n, beta=0.2, gamma=1.2))
    k = int(np.argmax(dist.probabilities[n // 2 :])) + n // 2
    print("  mode at vbar = %+.3f (and its mirror image)" % dist.lattice[k])


if __name__ == "__main__":
    main()
