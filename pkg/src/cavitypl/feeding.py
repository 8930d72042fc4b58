"""Pump-power dependence of polariton and bare-cavity emission.

Phenomenological amplitude model: single-exciton (polariton) emission
follows the two-level saturation curve ``P/(P + P_sat)``; the detuned
configuration that feeds the bare cavity is the charged exciton under
above-band excitation (linear in pump, same saturation factor) and the
biexciton under quasi-resonant excitation (quadratic below saturation,
square of the saturation factor above).  The feeding fraction is
quantified by ``S = A_bare / (A_lower + A_upper + A_bare)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError
from .lm import levenberg_marquardt

__all__ = [
    "FeedingModelParams",
    "TripletAmplitudes",
    "PowerSeries",
    "PowerLawFit",
    "SaturationFit",
    "STrendResult",
    "s_ratio",
    "model_amplitudes",
    "fit_power_law",
    "fit_saturation",
    "analyze_s_trend",
    "suppression",
]

REGIMES = ("ABE", "QRE")


@dataclass(frozen=True)
class FeedingModelParams:
    """Coefficients of the pump-power amplitude model.

    ``k_exciton`` scales the (lower+upper) polariton total, counts*nm/uW.
    ``k_charged`` (ABE only, counts*nm/uW) and ``k_biexciton`` (QRE only,
    counts*nm/uW**2) scale the feeding channel.  ``eta_feed`` is the
    fraction of detuned-configuration emission routed into the bare cavity
    peak.  ``asymmetry`` biases the polariton split toward the
    shorter-wavelength peak: a_lower ~ (1+asymmetry)/2; default off.
    """

    regime: str
    p_sat_uW: float
    k_exciton: float
    k_charged: float = 0.0
    k_biexciton: float = 0.0
    eta_feed: float = 1.0
    asymmetry: float = 0.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise DomainError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if not self.p_sat_uW > 0:
            raise DomainError(f"p_sat_uW must be > 0, got {self.p_sat_uW!r}")
        for name in ("k_exciton", "k_charged", "k_biexciton"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        if not 0.0 <= self.eta_feed <= 1.0:
            raise DomainError(f"eta_feed must be in [0, 1], got {self.eta_feed!r}")
        if not -1.0 < self.asymmetry < 1.0:
            raise DomainError(f"asymmetry must be in (-1, 1), got {self.asymmetry!r}")
        if self.regime == "ABE" and self.k_biexciton != 0.0:
            raise DomainError("ABE regime must have k_biexciton = 0")
        if self.regime == "QRE" and self.k_charged != 0.0:
            raise DomainError("QRE regime must have k_charged = 0")


@dataclass(frozen=True)
class TripletAmplitudes:
    a_lower: float
    a_upper: float
    a_bare: float

    @property
    def polariton_total(self):
        return self.a_lower + self.a_upper

    @property
    def total(self):
        return self.a_lower + self.a_upper + self.a_bare


@dataclass(frozen=True)
class PowerSeries:
    """Fitted peak areas across a pump-power series.

    Powers must be strictly increasing and positive.  Optional standard
    errors ride along for reporting.
    """

    powers_uW: np.ndarray
    a_lower: np.ndarray
    a_upper: np.ndarray
    a_bare: np.ndarray
    stderr_lower: np.ndarray | None = None
    stderr_upper: np.ndarray | None = None
    stderr_bare: np.ndarray | None = None

    def __post_init__(self):
        arrays = {}
        for name in ("powers_uW", "a_lower", "a_upper", "a_bare"):
            arrays[name] = np.asarray(getattr(self, name), dtype=float)
        n = arrays["powers_uW"].size
        for name, arr in arrays.items():
            if arr.ndim != 1 or arr.size != n:
                raise DomainError(f"{name} must be a 1-D array of length {n}")
            object.__setattr__(self, name, arr)
        for name in ("stderr_lower", "stderr_upper", "stderr_bare"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float))
        p = arrays["powers_uW"]
        if not np.all(p > 0):
            raise DomainError("powers must be > 0")
        if not np.all(np.diff(p) > 0):
            raise DomainError("powers must be strictly increasing")

    def __len__(self):
        return self.powers_uW.size

    def s_values(self):
        return np.array(
            [s_ratio(l, u, b) for l, u, b in zip(self.a_lower, self.a_upper, self.a_bare)]
        )

    def polariton_sum(self):
        return self.a_lower + self.a_upper


def s_ratio(a_lower, a_upper, a_bare):
    """Fraction of total emission in the bare cavity peak."""
    if min(a_lower, a_upper, a_bare) < 0:
        raise DomainError("amplitudes must be >= 0")
    total = a_lower + a_upper + a_bare
    if not total > 0:
        raise DomainError("amplitude sum must be > 0")
    return a_bare / total


def model_amplitudes(m: FeedingModelParams, power_uW):
    """Model peak areas at a pump power.

    Polariton total: ``k_exciton * P_sat * x/(1+x)`` with x = P/P_sat,
    split between lower and upper according to ``asymmetry``.  Bare peak:
    ABE ``eta_feed * k_charged * P_sat * x/(1+x)`` (S is then exactly
    power independent); QRE ``eta_feed * k_biexciton * P_sat**2 *
    (x/(1+x))**2`` (quadratic below saturation).
    """
    if not power_uW > 0:
        raise DomainError(f"power must be > 0, got {power_uW!r}")
    x = power_uW / m.p_sat_uW
    sat = x / (1.0 + x)
    polariton_total = m.k_exciton * m.p_sat_uW * sat
    if m.regime == "ABE":
        a_bare = m.eta_feed * m.k_charged * m.p_sat_uW * sat
    else:
        a_bare = m.eta_feed * m.k_biexciton * m.p_sat_uW**2 * sat * sat
    return TripletAmplitudes(
        a_lower=0.5 * (1.0 + m.asymmetry) * polariton_total,
        a_upper=0.5 * (1.0 - m.asymmetry) * polariton_total,
        a_bare=a_bare,
    )


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    r_squared: float


def fit_power_law(powers, amplitudes):
    """Ordinary least squares on (log P, log A).

    Returns the exponent (slope), the prefactor exp(intercept) and the
    R**2 of the log-log regression.  Exact power-law data give the
    exponent to machine precision.
    """
    p = np.asarray(powers, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    if p.size < 3:
        raise InputError(f"need >= 3 points, got {p.size}")
    if p.size != a.size:
        raise InputError("powers and amplitudes must have the same length")
    if not (np.all(p > 0) and np.all(a > 0)):
        raise DomainError("powers and amplitudes must all be > 0")
    logp, loga = np.log(p), np.log(a)
    slope, intercept = np.polyfit(logp, loga, 1)
    fitted = slope * logp + intercept
    ss_res = float(np.sum((loga - fitted) ** 2))
    ss_tot = float(np.sum((loga - loga.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(exponent=float(slope), prefactor=float(np.exp(intercept)), r_squared=r2)


@dataclass(frozen=True)
class SaturationFit:
    p_sat_uW: float
    a_max: float
    p_sat_stderr_uW: float | None
    at_upper_bound: bool  # warning: knee not identifiable from the data
    converged: bool
    residual_norm: float


def fit_saturation(powers, amplitudes, *, p_sat_bound_factor=100.0, weights="none"):
    """Fit ``A(P) = a_max * P / (P + p_sat)`` by damped least squares.

    ``weights="relative"`` scales residuals by 1/A_i, appropriate when the
    scatter is proportional to the amplitude.  Data that show no curvature
    (amplitude still linear in pump) push ``p_sat`` to its upper bound,
    ``p_sat_bound_factor * max(P)``; that case is flagged via
    ``at_upper_bound`` instead of raising.
    """
    p = np.asarray(powers, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    if p.size < 4:
        raise InputError(f"need >= 4 points spanning the knee, got {p.size}")
    if p.size != a.size:
        raise InputError("powers and amplitudes must have the same length")
    if not (np.all(p > 0) and np.all(a > 0)):
        raise DomainError("powers and amplitudes must all be > 0")
    if weights not in ("none", "relative"):
        raise DomainError(f"weights must be 'none' or 'relative', got {weights!r}")

    p_sat_max = p_sat_bound_factor * p.max()
    w = 1.0 / a if weights == "relative" else np.ones_like(a)

    def residual(theta):
        a_max, p_sat = theta
        return (a_max * p / (p + p_sat) - a) * w

    def jacobian(theta):
        a_max, p_sat = theta
        jac = np.empty((p.size, 2))
        jac[:, 0] = p / (p + p_sat) * w
        jac[:, 1] = -a_max * p / (p + p_sat) ** 2 * w
        return jac

    # Half-maximum crossing seeds the knee; falls back to mid-range.
    a_top = a.max()
    half = a_top / 2.0
    above = a >= half
    p_sat0 = float(p[above][0]) if above.any() else float(np.median(p))
    theta0 = np.array([1.5 * a_top, min(max(p_sat0, 1e-3), p_sat_max / 2)])

    res = levenberg_marquardt(
        residual,
        jacobian,
        theta0,
        lower=np.array([0.0, 1e-9]),
        upper=np.array([np.inf, p_sat_max]),
        max_iterations=500,
    )
    a_max, p_sat = res.params
    at_bound = bool(p_sat >= 0.99 * p_sat_max)
    stderr = None
    if res.covariance is not None and not at_bound:
        stderr = float(np.sqrt(max(res.covariance[1, 1], 0.0)))
    return SaturationFit(
        p_sat_uW=float(p_sat),
        a_max=float(a_max),
        p_sat_stderr_uW=stderr,
        at_upper_bound=at_bound,
        converged=res.converged,
        residual_norm=res.cost,
    )


@dataclass(frozen=True)
class STrendResult:
    classification: str  # "constant" | "linear" | "other"
    slope_per_uW: float
    intercept: float
    mean_s: float
    n_used: int
    cutoff_uW: float
    diagnostics: dict


def _heuristic_cutoff(series: PowerSeries):
    """Largest power whose prefix keeps the polariton sum close to linear.

    Prefix log-log exponents of (a_lower + a_upper) are scanned; the
    cutoff is the largest power where the exponent stays within 15% of 1.
    """
    p = series.powers_uW
    total = series.polariton_sum()
    cutoff = p[-1]
    if np.all(total > 0):
        for k in range(p.size, 2, -1):
            exponent = fit_power_law(p[:k], total[:k]).exponent
            if abs(exponent - 1.0) <= 0.15:
                cutoff = p[k - 1]
                break
        else:
            cutoff = p[2]
    return float(cutoff)


def analyze_s_trend(
    series: PowerSeries,
    *,
    saturation_cutoff_uW=None,
    p_sat_uW=None,
    f_ratio_threshold=10.0,
    scatter_tolerance=0.1,
):
    """Classify the pump-power trend of S below saturation.

    S is computed at each power; points at or below the saturation cutoff
    (0.9 * p_sat when a saturation power is supplied, otherwise a
    linearity heuristic on the polariton sum) enter the classification.
    A straight line is accepted over a constant when the residual-variance
    F-ratio exceeds ``f_ratio_threshold``; if the winning model still
    leaves RMS scatter above ``scatter_tolerance * mean(S)`` the trend is
    reported as ``"other"``.
    """
    if saturation_cutoff_uW is not None:
        cutoff = float(saturation_cutoff_uW)
    elif p_sat_uW is not None:
        cutoff = 0.9 * float(p_sat_uW)
    else:
        cutoff = _heuristic_cutoff(series)

    mask = series.powers_uW <= cutoff
    n = int(mask.sum())
    if n < 3:
        raise InputError(f"need >= 3 points at or below cutoff {cutoff} uW, got {n}")
    p = series.powers_uW[mask]
    s = series.s_values()[mask]
    mean_s = float(s.mean())

    rss_const = float(np.sum((s - mean_s) ** 2))
    slope, intercept = np.polyfit(p, s, 1)
    rss_lin = float(np.sum((s - (slope * p + intercept)) ** 2))

    tiny = 1e-24
    if rss_const <= tiny:
        f_ratio = 0.0
        classification = "constant"
        rms = 0.0
    else:
        f_ratio = ((rss_const - rss_lin) / 1.0) / max(rss_lin / max(n - 2, 1), tiny)
        if f_ratio > f_ratio_threshold:
            classification = "linear"
            rms = np.sqrt(rss_lin / max(n - 2, 1))
        else:
            classification = "constant"
            rms = np.sqrt(rss_const / max(n - 1, 1))
        if mean_s > 0 and rms / mean_s > scatter_tolerance:
            classification = "other"

    return STrendResult(
        classification=classification,
        slope_per_uW=float(slope),
        intercept=float(intercept),
        mean_s=mean_s,
        n_used=n,
        cutoff_uW=cutoff,
        diagnostics={
            "f_ratio": float(f_ratio),
            "rss_constant": rss_const,
            "rss_linear": rss_lin,
            "rms_over_mean": float(rms / mean_s) if mean_s > 0 else 0.0,
        },
    )


def suppression(s_probe, s_reference_mean):
    """Fractional reduction of S relative to a reference mean, 1 - S/S_ref."""
    if not 0 < s_reference_mean <= 1:
        raise DomainError(f"reference mean S must be in (0, 1], got {s_reference_mean!r}")
    if not 0 <= s_probe <= 1:
        raise DomainError(f"S must be in [0, 1], got {s_probe!r}")
    return 1.0 - s_probe / s_reference_mean
