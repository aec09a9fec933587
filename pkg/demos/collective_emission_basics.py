"""Collective emission at desk scale: pump scaling and photon statistics.

Solves the identical-emitter model for a few ensemble sizes and prints the
super-linear pump-scaling exponent together with the g2 bunching features.
Runs in well under a minute.
"""

import numpy as np

from cavemit import correlations, dicke
from cavemit.params import DEFAULTS, RateSet

GAMMA = DEFAULTS.gamma
RATES = RateSet(gamma=GAMMA, chi=0.3, eta=2 * GAMMA)


def main():
    eta_grid = GAMMA * np.geomspace(0.05, 20.0, 15)
    print(f"{'N':>4} {'max slope':>10} {'g2 dip':>8} {'g2 peak':>8} "
          f"{'decay (ns)':>11} {'rise (ns)':>10}")
    for n in (1, 2, 5, 10, 20, 40):
        _, _, slope = dicke.pump_scaling_curve(
            n, DEFAULTS.gamma_collective, RATES, eta_grid
        )
        liouv = dicke.build_liouvillian(n, DEFAULTS.gamma_collective, RATES)
        ss = dicke.steady_state(liouv)
        trace = correlations.g2_dicke(liouv, ss)
        feats = correlations.extract_features(trace)

        def fmt(x):
            return f"{x:.3f}" if x is not None else "-"

        print(f"{n:>4} {np.max(slope):>10.3f} {fmt(feats.dip_value):>8} "
              f"{fmt(feats.peak_value):>8} {fmt(feats.decay_time):>11} "
              f"{fmt(feats.rise_time):>10}")
    print("\nA single emitter antibunches (dip 0, no peak, slope <= 1);")
    print("larger ensembles bunch at short delays and pump super-linearly.")


if __name__ == "__main__":
    main()
