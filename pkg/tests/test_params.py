import math

import numpy as np
import pytest
from scipy.stats import norm

from cavemit.params import (
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
    parse_config,
)


def test_rateset_rejects_negative():
    with pytest.raises(ValueError):
        RateSet(gamma=-0.1)
    with pytest.raises(ValueError):
        RateSet(gamma=0.1, chi=-1.0)


def test_fwhm_sigma_relation():
    dist = GaussianDistributionSpec(mu=0.0, w=2.0)
    assert dist.sigma == pytest.approx(2.0 * FWHM_TO_SIGMA)
    assert 2.0 * math.sqrt(2.0 * math.log(2.0)) * dist.sigma == pytest.approx(2.0)


def test_single_bin_discretization():
    dist = GaussianDistributionSpec(mu=1.5, w=3.0, n_bins=1)
    spec = discretize_gaussian(dist, 10, 0.5, RateSet(gamma=0.1))
    assert len(spec.sub_ensembles) == 1
    sub = spec.single()
    assert sub.count == 10
    assert sub.omega == 1.5


def test_three_bin_symmetry():
    dist = GaussianDistributionSpec(mu=0.0, w=1.0, n_bins=3, span=1.0)
    spec = discretize_gaussian(dist, 100, 0.5, RateSet(gamma=0.1))
    counts = [s.count for s in spec.sub_ensembles]
    omegas = [s.omega for s in spec.sub_ensembles]
    assert sum(counts) == 100
    assert counts[0] == counts[-1]
    assert omegas[1] == pytest.approx(0.0, abs=1e-12)


def test_apportionment_against_cumulative_oracle():
    """Counts must match an independent largest-remainder apportionment of
    the Gaussian density over the sampled span."""
    kappa = DEFAULTS.kappa
    dist = GaussianDistributionSpec(mu=0.0, w=kappa, n_bins=21)
    total = 500
    spec = discretize_gaussian(dist, total, 0.5, RateSet(gamma=0.1))

    edges = np.linspace(-dist.span * dist.w, dist.span * dist.w, 22)
    centers = 0.5 * (edges[:-1] + edges[1:])
    cdf = norm.cdf(edges, scale=dist.sigma)
    weights = np.diff(cdf)
    weights = weights / weights.sum()
    quota = weights * total
    base = np.floor(quota).astype(int)
    remainder = total - base.sum()
    order = np.argsort(-(quota - base))
    base[order[:remainder]] += 1

    got = {s.omega: s.count for s in spec.sub_ensembles}
    for c, n in zip(centers, base):
        assert got.get(float(c), 0) == n
    assert sum(got.values()) == total


@pytest.mark.parametrize("n_bins,total", [(5, 7), (21, 500), (13, 1), (4, 100)])
def test_count_conservation(n_bins, total):
    dist = GaussianDistributionSpec(mu=0.3, w=2.0, n_bins=n_bins)
    spec = discretize_gaussian(dist, total, 0.5, RateSet(gamma=0.1))
    assert spec.total_count == total


def test_empty_total_rejected():
    dist = GaussianDistributionSpec(mu=0.0, w=1.0, n_bins=5)
    with pytest.raises(ValueError):
        discretize_gaussian(dist, 0, 0.5, RateSet(gamma=0.1))


def test_purcell_rate_resonant_limit():
    gamma = 1e-9
    spec = EmitterEnsembleSpec(
        sub_ensembles=(
            SubEnsemble(count=1, omega=0.0, g=0.05, rates=RateSet(gamma=gamma)),
        ),
        cavity=CavityParams(omega_c=0.0, kappa=10.0),
    )
    gamma_p, delta = effective_rate_gamma_purcell(spec)
    assert gamma_p == pytest.approx(4 * 0.05**2 / 10.0, rel=1e-6)
    assert delta == 0.0


def test_purcell_rate_full_formula():
    rates = RateSet(gamma=0.1, chi=0.4, eta=0.2)
    spec = EmitterEnsembleSpec(
        sub_ensembles=(SubEnsemble(count=1, omega=1.0, g=0.3, rates=rates),),
        cavity=CavityParams(omega_c=3.0, kappa=5.0),
    )
    gamma_p, delta = effective_rate_gamma_purcell(spec)
    d = 3.0 - 1.0
    hw = (5.0 + 0.2 + 0.1) / 2 + 0.4
    assert gamma_p == pytest.approx(0.3**2 * 5.0 / (d**2 + hw**2), rel=1e-12)
    assert delta == pytest.approx(2 * 0.3**2 * d / (d**2 + hw**2), rel=1e-12)


def test_frequency_conventions_differ_as_documented():
    rates = RateSet(gamma=0.2, chi=0.5, eta=0.4)
    half = complex_emitter_frequency(1.0, rates, FrequencyConvention.HALF_WIDTH)
    printed = complex_emitter_frequency(1.0, rates, FrequencyConvention.AS_PRINTED)
    assert half == pytest.approx(1.0 - 1j * ((0.2 + 0.4) / 2 + 0.5))
    assert printed == pytest.approx(1.0 - 1j * (0.2 + 0.4) + 0.5)
    cavity = CavityParams(omega_c=2.0, kappa=6.0)
    assert complex_cavity_frequency(cavity) == pytest.approx(2.0 - 3.0j)


def test_defaults_pin_measured_values():
    assert DEFAULTS.gamma == pytest.approx(1 / 15.8)
    assert DEFAULTS.kappa == pytest.approx(2 * math.pi)
    assert DEFAULTS.inhom_fwhm == pytest.approx(2 * math.pi * 300.0)


def test_parse_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        parse_config({"spam": 1})
    cfg = parse_config({"gamma_per_ns": 0.1, "frequency_convention": "half_width"})
    assert cfg["frequency_convention"] is FrequencyConvention.HALF_WIDTH
