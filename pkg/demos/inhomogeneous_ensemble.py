"""Mean-field treatment of a large, inhomogeneously broadened ensemble.

Shows how spectral width and ensemble-cavity detuning suppress collective
enhancement for 500 emitters, using the second-order cumulant solver.
"""

import numpy as np

from cavemit import meanfield
from cavemit.params import DEFAULTS, RateSet

GAMMA = DEFAULTS.gamma
KAPPA = DEFAULTS.kappa
RATES = RateSet(gamma=GAMMA, chi=DEFAULTS.chi_ensemble, eta=0.0)
G = DEFAULTS.g_ensemble


def main():
    eta_grid = GAMMA * np.geomspace(0.05, 2.0, 10)

    print("Pump-scaling exponent versus ensemble spectral width:")
    rows = meanfield.inhomogeneity_sweep(
        500, [KAPPA, 5 * KAPPA, 20 * KAPPA], eta_grid, G, RATES
    )
    for w_over_kappa in (1.0, 5.0, 20.0):
        slope = next(r[4] for r in rows if r[0] == w_over_kappa)
        print(f"  w = {w_over_kappa:>4.0f} kappa : max slope {slope:.3f}")

    print("\nEmission at the strongest pump versus ensemble detuning "
          "(w = 3 kappa):")
    delta_grid = KAPPA * np.array([-12.0, -3.0, 0.0, 3.0, 12.0])
    rows, averaged = meanfield.detuning_sweep_and_average(
        500, delta_grid, eta_grid, G, RATES
    )
    eta_top = eta_grid[-1] / GAMMA
    top = {r[1]: r[3] for r in rows if np.isclose(r[2], eta_top)}
    for delta in (0.0, 3.0, 12.0):
        print(f"  |delta| = {delta:>4.0f} kappa : "
              f"I_rad = {top[delta]:.3f} /ns "
              f"({top[delta] / top[0.0]:.2f} of resonant)")
    avg_slope = meanfield.max_loglog_slope(eta_grid, averaged)
    print(f"\nGaussian-weighted average over detunings keeps max slope "
          f"{avg_slope:.2f} > 1: the collective enhancement survives "
          f"realistic inhomogeneity.")


if __name__ == "__main__":
    main()
