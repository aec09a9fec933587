import numpy as np
import pytest

from cavemit.correlations import (
    CorrelationTrace,
    default_tau_grid,
    extract_features,
    g2_dicke,
    g2_oracle,
)
from cavemit.dicke import build_liouvillian, steady_state
from cavemit.oracle import build_eliminated_system
from cavemit.params import RateSet

GAMMA = 1 / 15.8
BASE = RateSet(gamma=GAMMA, chi=0.3, eta=2 * GAMMA)


def _trace(n, rates=BASE, gamma_c=0.375, tau_grid=None):
    liouv = build_liouvillian(n, gamma_c, rates)
    return g2_dicke(liouv, steady_state(liouv), tau_grid)


def test_default_tau_grid_shape():
    grid = default_tau_grid()
    assert grid[0] == 0.0
    assert grid[1] == pytest.approx(0.01)
    assert grid[-1] == pytest.approx(100.0)
    assert np.all(np.diff(grid) > 0)


def test_trace_validation():
    with pytest.raises(ValueError):
        CorrelationTrace(np.array([0.0, 1.0]), np.array([1.0, -0.5]), 1.0)
    with pytest.raises(ValueError):
        CorrelationTrace(np.array([0.0, 1.0, 0.5]), np.ones(3), 1.0)


def test_single_emitter_antibunching():
    trace = _trace(1)
    assert trace.values[0] == pytest.approx(0.0, abs=1e-10)
    assert trace.values[-1] == pytest.approx(1.0, rel=1e-3)
    feats = extract_features(trace)
    assert feats.peak_value is None
    assert feats.dip_value == pytest.approx(0.0, abs=1e-10)
    assert feats.rise_time is not None


def test_two_emitters_bunching_peak():
    trace = _trace(2)
    feats = extract_features(trace)
    assert feats.peak_value is not None and feats.peak_value > 1.0
    assert feats.decay_time is not None


def test_dicke_matches_oracle_g2():
    """Quantum regression on the block generator against a direct
    product-space regression for the eliminated model."""
    from cavemit.oracle import _site_operator, _SIGMA_M, oracle_evolve, oracle_steady_state

    tau_grid = default_tau_grid(t_min=0.05, t_max=30.0, n=40)
    for n in (1, 2, 3):
        liouv = build_liouvillian(n, 0.375, BASE)
        trace = g2_dicke(liouv, steady_state(liouv), tau_grid)

        system = build_eliminated_system(n, 0.375, BASE)
        lower = sum(_site_operator(_SIGMA_M, i, n) for i in range(n)).toarray()
        rho_ss = oracle_steady_state(system).matrix
        rate = np.trace(lower.conj().T @ lower @ rho_ss).real
        seeded = lower @ rho_ss @ lower.conj().T
        states = oracle_evolve(system, seeded, tau_grid)
        reference = np.array(
            [
                np.trace(lower.conj().T @ lower @ s.matrix).real
                for s in states
            ]
        ) / rate**2
        assert np.max(np.abs(trace.values - reference)) < 1e-6


def test_g2_long_delay_asymptote_is_one():
    for n in (1, 2, 5):
        trace = _trace(n)
        assert extract_features(trace).asymptote == pytest.approx(1.0, rel=5e-3)


def test_feature_extraction_on_synthetic_exponentials():
    tau = default_tau_grid(t_min=0.005, t_max=50.0, n=400)
    decay = 0.5
    values = 1.0 + 0.9 * np.exp(-tau / decay)
    trace = CorrelationTrace(tau, values, 1.0)
    feats = extract_features(trace)
    assert feats.peak_value == pytest.approx(values[0], rel=1e-6)
    assert feats.decay_time == pytest.approx(decay, rel=0.05)
    assert feats.dip_value is None
