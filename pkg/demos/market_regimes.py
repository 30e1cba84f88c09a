"""Three long-run regimes of the market with fundamentalists.

Runs the three-state market (pessimists, optimists, fundamentalists) at
the three shipped parameter sets and classifies the resulting price
behavior: switching between two displaced equilibria, relaxation to the
fundamental value, or sustained oscillation around it.
"""

from herdmarket import classify_regime, equilibria, simulate_extended
from herdmarket.analytics import FIGURE_SETS, extended_params_for

LABELS = {2: "strong herding, weak signal", 3: "weak everything", 4: "strong signal coupling"}


def main():
    for fig_id in sorted(FIGURE_SETS):
        s = FIGURE_SETS[fig_id]
        eq = equilibria(phi=0.2, w1=1.0, w2=s["w2"], F=50.0, gamma2=s["gamma2"])
        print("parameter set %d (%s):" % (fig_id, LABELS[fig_id]))
        print("  gamma1=%.1f gamma2=%.1f w2 slope=%.2f" % (s["gamma1"], s["gamma2"], s["w2"]))
        print("  limit equilibria: %s" % ["(%.3f, %.2f)" % pt for pt in eq])
        paths = [simulate_extended(extended_params_for(fig_id), 1000.0, seed) for seed in range(5)]
        report = classify_regime(paths, 50.0, eq)
        ev = report.evidence["reports"][0].evidence
        print("  classification over 5 seeds: %s" % report.classification)
        print("  seed 0 evidence: crossing rate %.4f, time average %.2f" % (
            ev["crossing_rate"], ev["time_average"]))
        if ev["dominant_period"] != float("inf"):
            print("  seed 0 dominant period: %.1f time units" % ev["dominant_period"])
        print()


if __name__ == "__main__":
    main()
