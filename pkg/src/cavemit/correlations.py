"""Two-time correlation functions and g2 feature extraction.

g2(tau) is computed by the quantum regression theorem: the ancillary
operator J- rho_ss J+ (or a rho_ss a+ for the cavity-inclusive oracle)
evolves under the same generator as the density matrix, and the correlator
is the expectation of J+J- (a+a) in that evolved operator, normalized by
the squared steady-state rate.  Only tau >= 0 is computed; stationarity
makes g2 even in tau.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dicke as _dicke
from . import oracle as _oracle
from .angular import a_minus_coefficient


def default_tau_grid(t_min=0.01, t_max=100.0, n=241):
    """Logarithmic delay grid (ns) with tau = 0 prepended; spans the
    sub-ns bunching peak and the ~10 ns recovery."""
    return np.concatenate([[0.0], np.geomspace(t_min, t_max, n)])


@dataclass
class CorrelationTrace:
    tau_grid: np.ndarray
    values: np.ndarray
    normalization: float
    source: str = "dicke-model"

    def __post_init__(self):
        self.tau_grid = np.asarray(self.tau_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.tau_grid[0] < 0 or np.any(np.diff(self.tau_grid) <= 0):
            raise ValueError("tau_grid must be strictly increasing from 0")
        if self.tau_grid.shape != self.values.shape:
            raise ValueError("tau/value shape mismatch")
        if np.any(self.values < -1e-12):
            raise ValueError("g2 must be non-negative")


@dataclass
class G2Features:
    """Bunching-peak / antibunching-dip summary of a g2 trace.

    Absent features are None (never reported as zero).
    """

    peak_value: float | None = None
    dip_value: float | None = None
    decay_time: float | None = None
    rise_time: float | None = None
    asymptote: float = 1.0


def _lowering_sandwich(state):
    """J- rho J+ in the block representation: the manifold-summed element
    (J, M, M') maps to (J, M-1, M'-1) scaled by A-(J,M) A-(J,M')."""
    basis = state.basis
    out = [np.zeros_like(b) for b in state.blocks]
    for k, j in enumerate(basis.js):
        d = basis.block_dim(j)
        amp = np.array([a_minus_coefficient(j, -j + i) for i in range(d)])
        if d > 1:
            out[k][:-1, :-1] = np.outer(amp[1:], amp[1:]) * state.blocks[k][1:, 1:]
    return _dicke.DickeBlockState(basis, out)


def g2_dicke(liouv, rho_ss, tau_grid=None, rtol=1e-9):
    """Collective-operator g2 via quantum regression in the Dicke basis.

    Requires the steady state of ``liouv`` with nonzero radiation rate.
    The regression initial condition is diagonal whenever rho_ss is, in
    which case everything evolves in the (much smaller) population sector.
    """
    if tau_grid is None:
        tau_grid = default_tau_grid()
    tau_grid = np.asarray(tau_grid, dtype=float)
    gamma_c = liouv.gamma_collective
    rate = _dicke.radiation_rate(rho_ss, 1.0)  # <J+J-> at steady state
    if rate <= 0:
        raise ZeroDivisionError("steady-state radiation rate is zero")
    anc0 = _lowering_sandwich(rho_ss)

    basis = liouv.basis
    weights = np.array(
        [(j + m) * (j - m + 1) for j, m in basis.levels]
    )
    if rho_ss.is_diagonal():
        p0 = anc0.populations()
        ps = _dicke.evolve_populations(liouv, p0, tau_grid, rtol=rtol)
        numerator = ps @ weights
    else:
        states = _dicke.evolve(liouv, anc0, tau_grid)
        numerator = np.array(
            [_dicke.radiation_rate(s, 1.0) for s in states]
        )
    values = np.maximum(numerator / rate**2, 0.0)
    return CorrelationTrace(tau_grid, values, normalization=gamma_c * rate)


def g2_oracle(system, tau_grid=None, rtol=1e-9):
    """Cavity-photon g2 from the full-space oracle: regression with
    a rho_ss a+ and observable a+a."""
    if tau_grid is None:
        tau_grid = default_tau_grid()
    tau_grid = np.asarray(tau_grid, dtype=float)
    if not system.include_cavity:
        raise ValueError("oracle g2 needs the cavity-inclusive system")
    ss = _oracle.oracle_steady_state(system)
    a = system.annihilation_operator()
    num_op = system.number_operator()
    n_ss = ss.expect(num_op).real
    if n_ss <= 0:
        raise ZeroDivisionError("steady-state photon number is zero")
    anc0 = _oracle.DenseState(a @ ss.matrix @ a.conj().T)
    states = _oracle.oracle_evolve(system, anc0, tau_grid, rtol=rtol)
    numerator = np.array([s.expect(num_op).real for s in states])
    values = np.maximum(numerator / n_ss**2, 0.0)
    return CorrelationTrace(tau_grid, values, normalization=n_ss, source="oracle")


def _exp_time_constant(tau, excess, fallback):
    """Refine a 1/e estimate by a log-linear fit on the decaying segment."""
    mask = excess > max(excess[0] * 1e-3, 0.0)
    mask &= excess > 0
    if mask.sum() < 3:
        return fallback
    t, y = tau[mask], np.log(excess[mask])
    # weight early points where the single-exponential model holds best
    w = excess[mask]
    coef = np.polyfit(t, y, 1, w=np.sqrt(w))
    if coef[0] >= 0:
        return fallback
    return -1.0 / coef[0]


def extract_features(trace, rel_tol=1e-3):
    """Locate the bunching peak and antibunching dip and their 1/e time
    constants relative to the long-delay asymptote.

    The asymptote is the mean over the final decade of the tau range.  The
    1/e times come from the first crossing, refined by a local exponential
    fit.  Features smaller than rel_tol (relative to the asymptote) are
    reported as absent.
    """
    tau = trace.tau_grid
    g2 = trace.values
    tail = tau >= tau[-1] / 10.0
    asym = float(np.mean(g2[tail]))
    feats = G2Features(asymptote=asym)
    tol = rel_tol * max(asym, 1e-12)

    # bunching peak: maximum above the asymptote, search from tau = 0
    i_peak = int(np.argmax(g2))
    if g2[i_peak] > asym + tol:
        feats.peak_value = float(g2[i_peak])
        excess = g2[i_peak:] - asym
        # decay segment: until the excess first goes negative (dip side)
        neg = np.nonzero(excess <= 0)[0]
        stop = neg[0] if neg.size else excess.size
        seg_t = tau[i_peak : i_peak + stop] - tau[i_peak]
        seg_y = excess[:stop]
        target = seg_y[0] / np.e
        below = np.nonzero(seg_y <= target)[0]
        crossing = seg_t[below[0]] if below.size else seg_t[-1]
        feats.decay_time = float(_exp_time_constant(seg_t, seg_y, crossing))

    # antibunching dip: minimum below the asymptote
    i_dip = int(np.argmin(g2))
    if g2[i_dip] < asym - tol:
        feats.dip_value = float(g2[i_dip])
        depth = asym - g2[i_dip:]
        pos = np.nonzero(depth <= 0)[0]
        stop = pos[0] if pos.size else depth.size
        seg_t = tau[i_dip : i_dip + stop] - tau[i_dip]
        seg_y = depth[:stop]
        target = seg_y[0] / np.e
        below = np.nonzero(seg_y <= target)[0]
        crossing = seg_t[below[0]] if below.size else seg_t[-1]
        feats.rise_time = float(_exp_time_constant(seg_t, seg_y, crossing))
    return feats
