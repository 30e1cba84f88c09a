"""Ergodicity check: one long trajectory against the closed-form law.

Simulates ten million events of the supercritical two-state market and
compares the time-weighted occupation of the average opinion against the
exact stationary distribution.
"""

import numpy as np

from herdmarket import LuxPureParams, occupation_histogram, stationary_distribution


def main():
    params = LuxPureParams(n=100, beta=0.3, gamma=1.2)
    lattice, occ = occupation_histogram(params, n_events=10 ** 7, seed=0, burn_in=0.1)
    target = stationary_distribution(params).probabilities
    tv = 0.5 * float(np.sum(np.abs(occ - target)))
    print("total variation distance after 1e7 events: %.4f" % tv)
    print()
    print("occupation vs closed form around the positive peak:")
    k = int(np.argmax(target[50:])) + 50
    for j in range(k - 3, k + 4):
        print("  vbar=%+.2f  empirical %.4f  exact %.4f" % (lattice[j], occ[j], target[j]))


if __name__ == "__main__":
    main()
