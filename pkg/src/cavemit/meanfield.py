"""Second-order mean-field (cumulant) steady state for inhomogeneous
sub-ensembles coupled to one cavity mode.

The closed steady-state system couples, per sub-ensemble k,

* the population difference ``z_k = <sigma_z>_k``,
* the emitter-photon correlation ``s_k = <sigma^+ a>_k``,
* the pairwise emitter-emitter correlations ``c_{kk'} = <sigma^+ sigma^->``,
* and the photon number ``n = <a^+ a>``.

Everything is solved by damped Picard iteration on the s-vector with a
root-finder fallback; emitters inside a sub-ensemble are identical, so a
single correlation value per (k, k') pair is scaled by the counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

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
)

MAX_PHOTON_NUMBER = 1e6


class MeanfieldError(RuntimeError):
    """Raised on non-convergence or divergence; carries the iterate history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass(frozen=True)
class CumulantState:
    """Converged cumulants. Arrays are indexed by sub-ensemble."""

    sigma_z: np.ndarray          # real, in [-1, 1]
    sigma_plus_a: np.ndarray     # complex <sigma^+ a>
    correlations: np.ndarray     # complex K x K, c[k, k'] = <sigma_k^+ sigma_k'^->
    photon_number: float

    def validate(self, atol=1e-8):
        z = np.asarray(self.sigma_z)
        if np.any(z < -1 - atol) or np.any(z > 1 + atol):
            raise ValueError("sigma_z outside [-1, 1]")
        if self.photon_number < -atol:
            raise ValueError("negative photon number")
        c = np.asarray(self.correlations)
        if not np.allclose(c, c.conj().T, atol=1e-7):
            raise ValueError("correlation matrix not Hermitian")
        diag = np.real(np.diag(c))
        # c_kk is the cross-emitter correlation within one sub-ensemble;
        # weak-pump detuned solutions carry small negative values, so the
        # lower bound gets a loose tolerance rather than strict positivity
        if np.any(diag < -0.02) or np.any(diag > 1 + atol):
            raise ValueError("diagonal correlations outside bounds")


@dataclass(frozen=True)
class MeanfieldSolution:
    state: CumulantState
    radiation_rate: float
    residual: float
    iterations: int
    history: tuple = field(repr=False, default=())


def _arrays(spec):
    subs = spec.sub_ensembles
    counts = np.array([s.count for s in subs], dtype=float)
    omega = np.array([s.omega for s in subs], dtype=float)
    g = np.array([s.g for s in subs], dtype=float)
    gamma = np.array([s.rates.gamma for s in subs], dtype=float)
    eta = np.array([s.rates.eta for s in subs], dtype=float)
    chi = np.array([s.rates.chi for s in subs], dtype=float)
    return counts, omega, g, gamma, eta, chi


def _closure(spec, convention):
    """Return a function s -> (s_new, z, c, n) evaluating the steady-state
    expressions at the current NV-photon correlation vector."""
    counts, omega, g, gamma, eta, chi = _arrays(spec)
    wt = np.array(
        [
            complex_emitter_frequency(s.omega, s.rates, convention)
            for s in spec.sub_ensembles
        ]
    )
    wc = complex_cavity_frequency(spec.cavity)
    kappa = spec.cavity.kappa
    wt_conj = wt.conj()
    # denominators: (wt_k^* - wt_k') for c, (wt_k^* - wc) for s
    den_c = wt_conj[:, None] - wt[None, :]
    den_s = wt_conj - wc

    def step(s):
        z = (eta - gamma + 4.0 * g * s.imag) / (gamma + eta)
        n = -2.0 * np.sum(counts * g * s.imag) / kappa
        gz = g * z
        c = (gz[:, None] * s.conj()[None, :] - gz[None, :] * s[:, None]) / den_c
        cross = c @ (counts * g) - np.diag(c) * counts * g
        drive = (
            g * (n * z + 0.5 * (z + 1.0))
            + (counts - 1.0) * g * np.diag(c)
            + cross
        )
        return drive / den_s, z, c, n

    return step


def _picard(step, s0, damping, tol, max_iter):
    """One damped Picard attempt; returns (s, residual, history).

    A growing residual or an exploding photon number aborts the attempt
    early so the caller can retry with heavier damping.
    """
    s = s0.copy()
    history = []
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        s_new, _, _, n = step(s)
        residual = float(np.max(np.abs(s_new - s)))
        history.append(residual)
        if not math.isfinite(residual) or abs(n) > MAX_PHOTON_NUMBER:
            raise MeanfieldError(
                f"cumulant iteration diverged at step {iteration}", history
            )
        s = (1.0 - damping) * s + damping * s_new
        if residual < tol:
            break
        if iteration >= 60 and iteration % 20 == 0:
            if residual > 10.0 * min(history[:40]):
                raise MeanfieldError(
                    f"cumulant iteration diverged at step {iteration}", history
                )
            if residual > 0.5 * history[iteration - 40]:
                break  # stalled; caller hands off to the root finder
    return s, residual, history


def solve_cumulant_steady_state(
    spec,
    convention=FrequencyConvention.HALF_WIDTH,
    damping=0.5,
    tol=1e-10,
    max_iter=5000,
    s0=None,
):
    """Solve the closed cumulant system for the steady state.

    Damped Picard iteration on the <sigma^+ a> vector (initialized at 0,
    sigma_z from the decoupled pump/decay balance); divergence retries
    with heavier damping, and a stall hands the residual equation to a
    root finder.  Raises MeanfieldError with the iterate history when all
    attempts fail.  ``s0`` warm-starts the iteration (sweep continuation).
    """
    step = _closure(spec, convention)
    k = len(spec.sub_ensembles)
    start = np.zeros(k, dtype=complex) if s0 is None else np.asarray(s0, complex)
    history = []
    s = start
    residual = np.inf
    try:
        s, residual, hist = _picard(step, start, damping, tol, max_iter)
        history.extend(hist)
    except MeanfieldError as err:
        history.extend(err.history)
        s = start
    if residual >= tol:
        try:
            s = _root_fallback(step, s, history)
        except MeanfieldError:
            s = _march_to_steady(spec, convention)
            s = _root_fallback(step, s, history)
        residual = float(np.max(np.abs(step(s)[0] - s)))
        history.append(residual)
    # a converged root with negative photon number sits on an unphysical
    # branch; re-approach along the physical attractor instead
    if step(s)[3] < -1e-9:
        s = _march_to_steady(spec, convention)
        polished = _root_fallback(step, s, history)
        if step(polished)[3] >= -1e-9:
            s = polished
        residual = float(np.max(np.abs(step(s)[0] - s)))
        history.append(residual)
    if residual >= math.sqrt(tol):
        # cold starts can sit outside every basin of attraction deep in the
        # collective regime; ramp the pump up from 1% and track the branch
        # connected to the weak-pump limit instead
        if s0 is None:
            sol = _pump_continuation(spec, convention, damping, tol, max_iter)
            if sol is not None:
                return sol
        raise MeanfieldError(
            f"no convergence after {len(history)} steps (residual {residual:.3e})",
            history,
        )
    s_new, z, c, n = step(s)
    state = CumulantState(
        sigma_z=z,
        sigma_plus_a=s,
        correlations=c,
        photon_number=float(max(n, 0.0)),
    )
    state.validate()
    return MeanfieldSolution(
        state=state,
        radiation_rate=spec.cavity.kappa * state.photon_number,
        residual=residual,
        iterations=len(history),
        history=tuple(history),
    )


def _dynamics(spec, convention):
    """Coefficients of the time-dependent cumulant equations.

    Every cumulant obeys dy/dt = a*y + r(rest) with a constant linear
    coefficient a (negative real part); exponential-Euler marching on this
    split follows the stable physical branch through the laser-like
    threshold where plain fixed-point iteration jumps branches.
    """
    counts, omega, g, gamma, eta, chi = _arrays(spec)
    wt = np.array(
        [
            complex_emitter_frequency(s.omega, s.rates, convention)
            for s in spec.sub_ensembles
        ]
    )
    wc = complex_cavity_frequency(spec.cavity)
    kappa = spec.cavity.kappa
    a_z = -(gamma + eta)
    a_n = -kappa
    a_c = 1j * (wt.conj()[:, None] - wt[None, :])
    a_s = 1j * (wt.conj() - wc)

    def rest(z, n, c, s):
        r_z = (eta - gamma) + 4.0 * g * s.imag
        r_n = -2.0 * np.sum(counts * g * s.imag)
        gz = g * z
        r_c = -1j * (gz[:, None] * s.conj()[None, :] - gz[None, :] * s[:, None])
        cross = c @ (counts * g) - np.diag(c) * counts * g
        drive = (
            g * (n * z + 0.5 * (z + 1.0))
            + (counts - 1.0) * g * np.diag(c)
            + cross
        )
        return r_z, r_n, r_c, -1j * drive

    return (a_z, a_n, a_c, a_s), rest, (gamma, eta)


def _march_to_steady(spec, convention, dt=0.01, max_steps=400000, settle_tol=1e-8):
    """Integrate the cumulant equations to their attractor by adaptive
    exponential Euler and return the final <sigma^+ a> vector.

    Starting from vacuum plus the decoupled inversion (pump switched on at
    t = 0) selects the physically reached branch when the algebraic system
    has several roots near the collective threshold.
    """
    (a_z, a_n, a_c, a_s), rest, (gamma, eta) = _dynamics(spec, convention)
    k = len(spec.sub_ensembles)
    z = (eta - gamma) / (gamma + eta) * np.ones(k)
    n = 0.0
    c = np.zeros((k, k), dtype=complex)
    s = np.zeros(k, dtype=complex)

    factors = {}

    def exp_factors(h):
        if h not in factors:
            factors[h] = (np.exp(a_z * h), math.exp(a_n * h),
                          np.exp(a_c * h), np.exp(a_s * h))
        return factors[h]

    step_count = 0
    while step_count < max_steps:
        ez, en, ec, es = exp_factors(dt)
        r_z, r_n, r_c, r_s = rest(z, n, c, s)
        z_new = -r_z / a_z + (z + r_z / a_z) * ez
        n_new = -r_n / a_n + (n + r_n / a_n) * en
        c_new = -r_c / a_c + (c + r_c / a_c) * ec
        s_new = -r_s / a_s + (s + r_s / a_s) * es
        delta = float(np.max(np.abs(s_new - s)))
        scale = max(1.0, float(np.max(np.abs(s))))
        step_count += 1
        if not math.isfinite(delta) or abs(n_new) > MAX_PHOTON_NUMBER or delta > 0.1 * scale:
            if dt < 1e-6:
                raise MeanfieldError("cumulant marching diverged")
            dt *= 0.5
            continue
        # the truncated equations do not preserve the Bloch constraint
        # along transients; project back so the collective burst cannot
        # run away (the fixed point itself is untouched)
        z, n, c, s = np.clip(z_new, -1.0, 1.0), max(n_new, 0.0), c_new, s_new
        cmax = np.max(np.abs(c))
        if cmax > 1.0:
            c = c / cmax
        if delta < settle_tol * dt * scale and step_count > 100:
            break
        if delta < 0.005 * scale:
            # keep dt well under the cavity timescale: the linear stiff
            # part is integrated exactly, but the nonlinear drive is not
            dt = min(dt * 1.1, 0.5 / spec.cavity.kappa)
    return s


def _root_fallback(step, s0, history):
    def residual_fn(x):
        s = x[: x.size // 2] + 1j * x[x.size // 2 :]
        s_new = step(s)[0]
        d = s_new - s
        return np.concatenate([d.real, d.imag])

    x0 = np.concatenate([s0.real, s0.imag])
    sol = optimize.root(residual_fn, x0, method="hybr", tol=1e-12)
    if not sol.success:
        raise MeanfieldError(f"root fallback failed: {sol.message}", history)
    x = sol.x
    return x[: x.size // 2] + 1j * x[x.size // 2 :]


def _pump_continuation(spec, convention, damping, tol, max_iter):
    """Solve a hard cold-start point by ramping every pump rate up from 1%
    of its target, warm-starting each step from the previous one.  Returns
    the final solution or None when the ramp fails or there is no pump."""
    if all(s.rates.eta == 0 for s in spec.sub_ensembles):
        return None
    k = len(spec.sub_ensembles)
    s = np.zeros(k, dtype=complex)
    try:
        for f in np.geomspace(0.01, 1.0, 15):
            scaled = EmitterEnsembleSpec(
                sub_ensembles=tuple(
                    SubEnsemble(
                        count=sub.count,
                        omega=sub.omega,
                        g=sub.g,
                        rates=RateSet(
                            gamma=sub.rates.gamma,
                            chi=sub.rates.chi,
                            eta=float(f) * sub.rates.eta,
                        ),
                    )
                    for sub in spec.sub_ensembles
                ),
                cavity=spec.cavity,
            )
            sol = solve_cumulant_steady_state(
                scaled, convention, damping, tol, max_iter, s0=s
            )
            s = sol.state.sigma_plus_a
    except MeanfieldError:
        return None
    return sol


def _with_eta(spec, eta):
    subs = tuple(
        SubEnsemble(
            count=s.count,
            omega=s.omega,
            g=s.g,
            rates=RateSet(gamma=s.rates.gamma, chi=s.rates.chi, eta=eta),
        )
        for s in spec.sub_ensembles
    )
    return EmitterEnsembleSpec(sub_ensembles=subs, cavity=spec.cavity)


_KINK_LOG_TOL = math.log(1.5)


def _solve_path(spec, eta_values, s_start, convention):
    """Solve sequentially along eta_values, warm-starting each point."""
    s = s_start
    sol = None
    for eta in eta_values:
        sol = solve_cumulant_steady_state(
            _with_eta(spec, float(eta)), convention, s0=s
        )
        s = sol.state.sigma_plus_a
    return sol


def pump_sweep(spec, eta_grid, convention=FrequencyConvention.HALF_WIDTH):
    """Radiation rate versus pump rate for one ensemble spec.

    Consecutive pump values warm-start from the previous solution.  The
    cumulant system holds several fixed points above the collective
    threshold, so a coarse continuation step can hop between branches:
    whenever a solution kinks away from the local log-log trend, the step
    is subdivided until the sweep tracks the branch connected to the
    weak-pump limit.
    """
    eta_grid = np.asarray(eta_grid, dtype=float)
    rates = np.empty(len(eta_grid))
    s_prev = None
    log_pts = []
    for i, eta in enumerate(eta_grid):
        sol = solve_cumulant_steady_state(
            _with_eta(spec, float(eta)), convention, s0=s_prev
        )
        if i >= 2:
            slope = (log_pts[-1][1] - log_pts[-2][1]) / (
                log_pts[-1][0] - log_pts[-2][0]
            )
            predicted = log_pts[-1][1] + slope * (
                math.log(eta) - log_pts[-1][0]
            )
            n_sub = 2
            while (
                abs(math.log(max(sol.radiation_rate, 1e-300)) - predicted)
                > _KINK_LOG_TOL
                and n_sub <= 16
            ):
                path = np.geomspace(eta_grid[i - 1], eta, n_sub + 1)[1:]
                sol = _solve_path(spec, path, s_prev, convention)
                n_sub *= 2
        rates[i] = sol.radiation_rate
        log_pts.append(
            (math.log(eta), math.log(max(sol.radiation_rate, 1e-300)))
        )
        s_prev = sol.state.sigma_plus_a
    return rates


def max_loglog_slope(x, y):
    """Largest local slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.max(np.gradient(ly, lx)))


def adaptive_n_bins(w, kappa=DEFAULTS.kappa, span=DEFAULTS.span,
                    minimum=DEFAULTS.n_bins):
    """Odd bin count keeping the frequency spacing at or below kappa/2.

    Coarser sampling lumps too many emitters into the resonant bin and
    overstates collective enhancement for distributions much wider than
    the cavity line (the w = 20 kappa pump curve looks super-linear with
    21 bins and flattens out once the spacing resolves the Lorentzian
    filter).
    """
    if w <= 0:
        return 1
    needed = int(math.ceil(4.0 * span * w / kappa)) + 1
    if needed % 2 == 0:
        needed += 1
    return max(minimum, needed)


def _gaussian_spec(mu, w, n_bins, span):
    return GaussianDistributionSpec(mu=mu, w=w, n_bins=n_bins, span=span)


def inhomogeneity_sweep(
    total_count,
    w_list,
    eta_grid,
    g,
    rates,
    kappa=DEFAULTS.kappa,
    n_bins=None,
    span=DEFAULTS.span,
    convention=FrequencyConvention.HALF_WIDTH,
):
    """Radiation-vs-pump curves for a resonant Gaussian ensemble of several
    widths.  Returns rows `(w_over_kappa, delta_over_kappa, eta_over_gamma,
    I_rad, max_slope)`; max_slope is repeated down each width's block.
    n_bins=None picks a width-dependent count via adaptive_n_bins.
    """
    cavity = CavityParams(omega_c=0.0, kappa=kappa)
    rows = []
    for w in w_list:
        if w == 0:
            dist = _gaussian_spec(0.0, kappa, 1, span)
        else:
            nb = adaptive_n_bins(w, kappa, span) if n_bins is None else n_bins
            dist = _gaussian_spec(0.0, float(w), nb, span)
        spec = discretize_gaussian(dist, total_count, g, rates, cavity)
        curve = pump_sweep(spec, eta_grid, convention)
        slope = max_loglog_slope(eta_grid, curve)
        for eta, i_rad in zip(eta_grid, curve):
            rows.append((w / kappa, 0.0, eta / rates.gamma, i_rad, slope))
    return rows


def detuning_sweep_and_average(
    total_count,
    delta_grid,
    eta_grid,
    g,
    rates,
    w=None,
    kappa=DEFAULTS.kappa,
    weight_fwhm=DEFAULTS.inhom_fwhm,
    n_bins=None,
    span=DEFAULTS.span,
    convention=FrequencyConvention.HALF_WIDTH,
):
    """Radiation rate versus ensemble-cavity detuning at fixed width w
    (default 3 kappa), plus the Gaussian-weighted average over detuning.

    Returns (rows, averaged) where rows carry one entry per (delta, eta)
    and averaged is the weighted radiation curve over eta_grid.
    """
    delta_grid = np.asarray(delta_grid, dtype=float)
    if not np.allclose(delta_grid + delta_grid[::-1], 0.0, atol=1e-9):
        raise ValueError("delta_grid must be symmetric about zero")
    if w is None:
        w = 3.0 * kappa
    if n_bins is None:
        n_bins = adaptive_n_bins(w, kappa, span)
    cavity = CavityParams(omega_c=0.0, kappa=kappa)
    sigma = weight_fwhm * FWHM_TO_SIGMA
    weights = np.exp(-0.5 * (delta_grid / sigma) ** 2)
    weights = weights / weights.sum()
    rows = []
    averaged = np.zeros(len(eta_grid))
    for delta, weight in zip(delta_grid, weights):
        dist = _gaussian_spec(float(delta), float(w), n_bins, span)
        spec = discretize_gaussian(dist, total_count, g, rates, cavity)
        curve = pump_sweep(spec, eta_grid, convention)
        slope = max_loglog_slope(eta_grid, curve)
        averaged += weight * curve
        for eta, i_rad in zip(eta_grid, curve):
            rows.append((w / kappa, delta / kappa, eta / rates.gamma, i_rad, slope))
    return rows, averaged


def effective_chi_for_width(
    total_count,
    w,
    eta_grid,
    g,
    rates,
    kappa=DEFAULTS.kappa,
    chi_bounds=None,
    n_bins=None,
    span=DEFAULTS.span,
    convention=FrequencyConvention.HALF_WIDTH,
):
    """Single dephasing rate chi_eff whose identical-emitter radiation curve
    best matches the inhomogeneous ensemble of width w (least squares in
    log radiation).  Hands photon statistics off to the identical-emitter
    Dicke model at the returned chi.
    """
    cavity = CavityParams(omega_c=0.0, kappa=kappa)
    if n_bins is None:
        n_bins = adaptive_n_bins(w, kappa, span)
    dist = _gaussian_spec(0.0, float(w), n_bins, span)
    target_spec = discretize_gaussian(dist, total_count, g, rates, cavity)
    target = np.log(pump_sweep(target_spec, eta_grid, convention))

    def mismatch(chi):
        mono = EmitterEnsembleSpec(
            sub_ensembles=(
                SubEnsemble(
                    count=total_count,
                    omega=0.0,
                    g=g,
                    rates=RateSet(gamma=rates.gamma, chi=float(chi), eta=rates.eta),
                ),
            ),
            cavity=cavity,
        )
        curve = np.log(pump_sweep(mono, eta_grid, convention))
        return float(np.sum((curve - target) ** 2))

    if chi_bounds is None:
        chi_bounds = (rates.chi, rates.chi + 2.0 * max(w, kappa))
    result = optimize.minimize_scalar(
        mismatch, bounds=chi_bounds, method="bounded",
        options={"xatol": 1e-4},
    )
    return float(result.x)
