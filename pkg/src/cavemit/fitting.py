"""Analysis chain for measured or synthetic photon statistics.

The g2 model is

    g2(tau) = 1 - (a + b) exp(-|tau|/tau1) + b exp(-|tau|/tau2)
              + c exp(-tau^2 / (2 tau3^2)),

convolved with a Gaussian instrument response of FWHM ``irf_fwhm``.  Both
convolutions are closed-form (exponential x Gaussian via the scaled
complementary error function, Gaussian x Gaussian directly), so model
evaluation is exact.  Background of purity p enters through
g2_meas - 1 = p^2 (g2_true - 1); the same convention is used for the
amplitude correction and the emitter-number estimate N = p^2 / a.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats
from scipy.special import erfcx

from .params import FWHM_TO_SIGMA

SQRT2 = math.sqrt(2.0)


class Channel(enum.Enum):
    ZPL = "ZPL"
    PSB = "PSB"


@dataclass(frozen=True)
class PowerSweepRecord:
    power: float  # excitation power (uW)
    rate: float  # detected count rate (counts/s)
    channel: Channel = Channel.ZPL

    def __post_init__(self):
        if not (self.power > 0):
            raise ValueError("power must be > 0")
        if self.rate < 0:
            raise ValueError("rate must be >= 0")
        if not isinstance(self.channel, Channel):
            object.__setattr__(self, "channel", Channel(self.channel))


@dataclass(frozen=True)
class G2FitModel:
    """Antibunching/bunching/collective-peak model with instrument response.

    Times in ns.  ``c``/``tau3`` parameterize the Gaussian collective peak
    as c * exp(-tau^2 / (2 tau3^2)); tau3 relates to the peak FWHM through
    FWHM = tau3 / FWHM_TO_SIGMA.
    """

    a: float = 0.0
    b: float = 0.0
    tau1: float = 10.0
    tau2: float = 50.0
    c: float = 0.0
    tau3: float = 0.1
    irf_fwhm: float = 0.4

    def __post_init__(self):
        for name in ("tau1", "tau2", "tau3"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be > 0")
        if self.irf_fwhm < 0:
            raise ValueError("irf_fwhm must be >= 0")
        for name in ("a", "b", "c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def evaluate(self, tau):
        """Model curve convolved with the Gaussian instrument response."""
        tau = np.asarray(tau, dtype=float)
        sigma = self.irf_fwhm * FWHM_TO_SIGMA
        out = np.ones_like(tau)
        out -= (self.a + self.b) * _exp_irf(tau, self.tau1, sigma)
        out += self.b * _exp_irf(tau, self.tau2, sigma)
        out += self.c * _gauss_irf(tau, self.tau3, sigma)
        return out

    def zero_delay(self):
        return float(self.evaluate(np.zeros(1))[0])


def _exp_irf(tau, t_const, sigma):
    """exp(-|tau|/T) convolved with a unit-area Gaussian of width sigma.

    erfcx keeps the expression finite where the naive
    exp(sigma^2/2T^2) erfc(...) form overflows for sigma >> T.
    """
    if sigma == 0.0:
        return np.exp(-np.abs(tau) / t_const)
    u = sigma / t_const
    v = np.abs(tau) / sigma
    gauss = np.exp(-0.5 * v**2)
    term_plus = gauss * erfcx((u + v) / SQRT2)
    # u - v can be arbitrarily negative, where erfcx blows up as
    # 2 exp(x^2); fold that exponential into the Gaussian prefactor first
    base = gauss * erfcx(np.abs(u - v) / SQRT2)
    expo = np.where(v > u, 0.5 * u**2 - u * v, -np.inf)
    term_minus = np.where(v > u, 2.0 * np.exp(expo) - base, base)
    return 0.5 * (term_plus + term_minus)


def _gauss_irf(tau, tau3, sigma):
    """Unit-amplitude Gaussian peak convolved with the Gaussian response."""
    width_sq = tau3**2 + sigma**2
    return tau3 / math.sqrt(width_sq) * np.exp(-0.5 * tau**2 / width_sq)


@dataclass
class FitResult:
    parameters: dict
    uncertainties: dict
    covariance: np.ndarray
    residual_rms: float
    success: bool
    message: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in self.uncertainties.values() if np.isfinite(v)):
            raise ValueError("uncertainties must be >= 0")

    def as_dict(self):
        return {
            "parameters": dict(self.parameters),
            "uncertainties": dict(self.uncertainties),
            "residual_rms": self.residual_rms,
            "success": self.success,
            "message": self.message,
            **{k: v for k, v in self.extras.items()},
        }


def normalize_to_plateau(tau, values, plateau_fraction=0.2):
    """Divide out the mean of the last ``plateau_fraction`` of the tau range
    (the long-delay plateau the model pins at 1)."""
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values, dtype=float)
    cut = tau.min() + (1.0 - plateau_fraction) * (tau.max() - tau.min())
    plateau = values[tau >= cut].mean()
    if plateau <= 0:
        raise ValueError("non-positive plateau; cannot normalize")
    return values / plateau


_G2_PARAM_NAMES = ("a", "b", "tau1", "tau2", "c", "tau3", "irf_fwhm")


def fit_g2(
    tau,
    g2,
    model,
    purity=1.0,
    counts=None,
    fit_irf=False,
    normalized=None,
):
    """Least-squares fit of the g2 model to a histogram.

    ``model`` provides the initial guess (and the fixed IRF width unless
    ``fit_irf``).  ``counts`` enables Poisson weighting (sigma ~ sqrt(n)).
    ``normalized=None`` auto-normalizes to the long-delay plateau unless the
    data already averages to ~1 there.  Returns raw parameters plus
    purity-corrected amplitudes via g2_meas - 1 = p^2 (g2_true - 1).
    """
    if not (0.0 < purity <= 1.0):
        raise ValueError("purity must be in (0, 1]")
    tau = np.asarray(tau, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if normalized is None:
        cut = tau.min() + 0.8 * (tau.max() - tau.min())
        normalized = abs(g2[tau >= cut].mean() - 1.0) < 0.05
    if not normalized:
        g2 = normalize_to_plateau(tau, g2)
    if counts is not None:
        weights = 1.0 / np.sqrt(np.maximum(np.asarray(counts, float), 1.0))
        weights /= weights.mean()
    else:
        weights = np.ones_like(g2)

    free = ["a", "b", "tau1", "tau2", "c", "tau3"]
    if fit_irf:
        free.append("irf_fwhm")
    x0 = np.array([getattr(model, name) for name in free])
    lower = np.zeros(len(free))
    lower[[free.index(n) for n in ("tau1", "tau2", "tau3")]] = 1e-6
    upper = np.full(len(free), np.inf)

    def unpack(x):
        return replace(model, **dict(zip(free, np.maximum(x, lower))))

    def residuals(x):
        return (unpack(x).evaluate(tau) - g2) / weights

    sol = optimize.least_squares(
        residuals, x0, bounds=(lower, upper), method="trf", xtol=1e-12
    )
    fitted = unpack(sol.x)
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    cov, sigmas, conditioned = _covariance(sol, len(tau))
    params = {name: float(getattr(fitted, name)) for name in _G2_PARAM_NAMES}
    uncert = {name: 0.0 for name in _G2_PARAM_NAMES}
    uncert.update(dict(zip(free, sigmas)))
    corrected = {
        "a_corrected": params["a"] / purity**2,
        "b_corrected": params["b"] / purity**2,
        "c_corrected": params["c"] / purity**2,
        "zero_delay_raw": fitted.zero_delay(),
        "zero_delay_corrected": 1.0 + (fitted.zero_delay() - 1.0) / purity**2,
    }
    message = sol.message if conditioned else sol.message + "; covariance ill-conditioned"
    if not sol.success:
        raise RuntimeError(f"g2 fit did not converge: {sol.message}")
    return FitResult(
        parameters=params,
        uncertainties=uncert,
        covariance=cov,
        residual_rms=rms,
        success=sol.success,
        message=message,
        extras=corrected,
    )


def _covariance(sol, n_points):
    """Covariance from the Jacobian at the solution; flags ill-conditioning
    instead of failing."""
    jac = sol.jac
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    threshold = np.finfo(float).eps * max(jac.shape) * s[0]
    conditioned = bool(np.all(s > threshold))
    s_inv = np.where(s > threshold, 1.0 / np.maximum(s, threshold), 0.0)
    dof = max(n_points - jac.shape[1], 1)
    scale = 2.0 * sol.cost / dof
    cov = (vt.T * s_inv**2) @ vt * scale
    sigmas = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return cov, sigmas, conditioned


def estimate_emitter_number(a_fitted, purity, a_sigma=0.0, purity_sigma=0.0):
    """N = p^2 / a with first-order uncertainty propagation."""
    if not (a_fitted > 0):
        raise ValueError("a_fitted must be > 0")
    if not (0.0 < purity <= 1.0):
        raise ValueError("purity must be in (0, 1]")
    n = purity**2 / a_fitted
    if n < 1.0:
        raise ValueError(
            f"a = {a_fitted} exceeds p^2 = {purity**2}; implied N = {n:.3f} < 1"
        )
    sigma = n * math.hypot(2.0 * purity_sigma / purity, a_sigma / a_fitted)
    return n, sigma


def thermal_bunching_limit(n_emitters):
    """Zero-delay bunching of N independent thermal-like emitters."""
    if n_emitters < 1:
        raise ValueError("N must be >= 1")
    return 2.0 * (1.0 - 1.0 / n_emitters)


def fit_saturation_lifetime(records, tau_sigmas=None):
    """Fit tau1(I) = tau1(0) / (1 + sigma I tau1(0)) to (intensity, tau1)
    pairs; weighted least squares when per-point uncertainties are given.
    Returns a FitResult with tau1_0 and the saturation coefficient sigma.
    """
    records = [(float(i), float(t)) for i, t in records]
    intensities = np.array([r[0] for r in records])
    taus = np.array([r[1] for r in records])
    if len(np.unique(intensities)) < 3:
        raise ValueError("need >= 3 distinct intensities")
    weights = (
        np.ones_like(taus)
        if tau_sigmas is None
        else 1.0 / np.asarray(tau_sigmas, dtype=float)
    )
    x0 = np.array([taus.max(), 1e-3])

    def model(x):
        tau0, sat = x
        return tau0 / (1.0 + sat * intensities * tau0)

    def residuals(x):
        return (model(x) - taus) * weights

    sol = optimize.least_squares(
        residuals, x0, bounds=([1e-9, 0.0], [np.inf, np.inf]), xtol=1e-14
    )
    if not sol.success:
        raise RuntimeError(f"saturation fit failed: {sol.message}")
    cov, sigmas, _ = _covariance(sol, len(records))
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    return FitResult(
        parameters={"tau1_0": float(sol.x[0]), "sigma": float(sol.x[1])},
        uncertainties={"tau1_0": sigmas[0], "sigma": sigmas[1]},
        covariance=cov,
        residual_rms=rms,
        success=True,
        message=sol.message,
    )


def purcell_factor(tau0, tau_c, debye_waller):
    """Effective and ideal Purcell factors from the lifetime reduction.

    F_eff = tau0/tau_c - 1 counts enhancement of the full emission;
    dividing by the Debye-Waller factor xi refers it to the coupled
    zero-phonon fraction alone.
    """
    if tau0 <= 0 or tau_c <= 0:
        raise ValueError("lifetimes must be > 0")
    if not (0.0 < debye_waller <= 1.0):
        raise ValueError("debye_waller must be in (0, 1]")
    f_eff = tau0 / tau_c - 1.0
    return f_eff, f_eff / debye_waller


def fit_power_law(records, power_range=None):
    """Log-log regression exponent k of rate vs power.

    Accepts PowerSweepRecord instances or bare (power, rate) pairs; mixed
    channels are rejected so ZPL and PSB sweeps are fit separately.
    """
    recs = [
        r if isinstance(r, PowerSweepRecord) else PowerSweepRecord(r[0], r[1])
        for r in records
    ]
    channels = {r.channel for r in recs}
    if len(channels) > 1:
        raise ValueError("records mix channels; fit one channel at a time")
    if power_range is not None:
        lo, hi = power_range
        recs = [r for r in recs if lo <= r.power <= hi]
    if len(recs) < 3:
        raise ValueError("need >= 3 records in range")
    if any(r.rate <= 0 for r in recs):
        raise ValueError("nonpositive rates cannot be log-fit")
    log_p = np.log([r.power for r in recs])
    log_i = np.log([r.rate for r in recs])
    fit = stats.linregress(log_p, log_i)
    return FitResult(
        parameters={"k": float(fit.slope), "intercept": float(fit.intercept)},
        uncertainties={
            "k": float(fit.stderr) if np.isfinite(fit.stderr) else 0.0,
            "intercept": (
                float(fit.intercept_stderr)
                if np.isfinite(fit.intercept_stderr)
                else 0.0
            ),
        },
        covariance=np.array([[fit.stderr**2 if np.isfinite(fit.stderr) else 0.0]]),
        residual_rms=float(
            np.sqrt(np.mean((log_i - fit.slope * log_p - fit.intercept) ** 2))
        ),
        success=True,
        message="ols on log-log axes",
    )


# ---------------------------------------------------------------------------
# CSV ingestion (histograms are the boundary; no time-tag processing here)
# ---------------------------------------------------------------------------


def load_histogram_csv(path):
    """Read `tau_ns, coincidences` (raw counts) or `tau_ns, g2` (normalized),
    auto-detected by header.  Returns (tau, values, counts_or_None)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader)]
        rows = [row for row in reader if row]
    if header[0] != "tau_ns" or header[1] not in ("coincidences", "g2"):
        raise ValueError(f"unrecognized histogram header {header}")
    tau = np.array([float(r[0]) for r in rows])
    values = np.array([float(r[1]) for r in rows])
    if header[1] == "coincidences":
        return tau, normalize_to_plateau(tau, values), values
    return tau, values, None


def load_power_sweep_csv(path):
    """Read `power_uW, counts_per_s, channel` rows into PowerSweepRecords."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader)]
        if header != ["power_uw", "counts_per_s", "channel"]:
            raise ValueError(f"unrecognized power-sweep header {header}")
        return [
            PowerSweepRecord(float(r[0]), float(r[1]), Channel(r[2].strip()))
            for r in reader
            if r
        ]
