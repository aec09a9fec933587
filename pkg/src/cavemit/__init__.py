"""Cavity-mediated collective emission from incoherently pumped two-level
emitters: Dicke-basis master equation, brute-force oracle, two-time
correlations, second-order mean-field, and photon-statistics analysis."""

from .params import (
    DEFAULTS,
    FWHM_TO_SIGMA,
    CavityParams,
    EmitterEnsembleSpec,
    FrequencyConvention,
    GaussianDistributionSpec,
    RateSet,
    SubEnsemble,
    complex_cavity_frequency,
    complex_emitter_frequency,
    discretize_gaussian,
    effective_rate_gamma_purcell,
    load_config,
)
from .dicke import (
    DickeBasis,
    DickeBlockState,
    DickeLiouvillian,
    build_liouvillian,
    evolve,
    pump_scaling_curve,
    radiation_rate,
    steady_state,
)
from .oracle import (
    build_full_system,
    oracle_evolve,
    oracle_steady_state,
    steady_state_photon_number,
    symmetrize_and_project,
)
from .correlations import (
    CorrelationTrace,
    G2Features,
    default_tau_grid,
    extract_features,
    g2_dicke,
    g2_oracle,
)
from .meanfield import (
    CumulantState,
    MeanfieldError,
    MeanfieldSolution,
    adaptive_n_bins,
    detuning_sweep_and_average,
    effective_chi_for_width,
    inhomogeneity_sweep,
    max_loglog_slope,
    pump_sweep,
    solve_cumulant_steady_state,
)
from .fitting import (
    Channel,
    FitResult,
    G2FitModel,
    PowerSweepRecord,
    estimate_emitter_number,
    fit_g2,
    fit_power_law,
    fit_saturation_lifetime,
    purcell_factor,
    thermal_bunching_limit,
)

__version__ = "0.1.0"
