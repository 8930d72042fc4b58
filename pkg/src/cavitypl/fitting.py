"""Nonlinear least-squares fitting of the triplet model to spectra.

Covers automatic initialization by peak detection, the triplet/doublet/
single-peak fits (the latter two are restrictions of the triplet with
parameters frozen), and extraction of the physical observables from a
converged fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .core import PARAM_NAMES, FitResult, Spectrum, TripletParams, lorentzian
from .errors import DomainError, InputError
from .lm import levenberg_marquardt
from .units import splitting_to_g

__all__ = [
    "FitConfig",
    "PeakGuess",
    "detect_peaks",
    "initial_triplet_guess",
    "initial_guess_candidates",
    "fit_triplet",
    "fit_doublet",
    "fit_single_peak",
    "extract_observables",
]

_IDX = {name: i for i, name in enumerate(PARAM_NAMES)}


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the damped least-squares iteration.

    ``bounds`` maps parameter names to (lower, upper) pairs and overrides
    the defaults (amplitudes >= 0, centers inside the wavelength range,
    widths positive).  ``fixed_params`` maps names to values held exactly;
    their covariance rows/columns come back as zero.  ``weights`` is
    ``"none"`` (unweighted, the default) or ``"poisson"``
    (sigma_i**2 = max(I_i, 1)).
    """

    max_iterations: int = 200
    rel_tolerance: float = 1e-8
    grad_tolerance: float = 1e-10
    step_tolerance: float = 1e-12
    damping_init: float = 1e-3
    bounds: dict = field(default_factory=dict)
    fixed_params: dict = field(default_factory=dict)
    weights: str = "none"
    ordering_guard: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if not self.rel_tolerance > 0:
            raise DomainError("rel_tolerance must be > 0")
        if self.weights not in ("none", "poisson"):
            raise DomainError(f"weights must be 'none' or 'poisson', got {self.weights!r}")
        for name in list(self.bounds) + list(self.fixed_params):
            if name not in _IDX:
                raise DomainError(f"unknown parameter name {name!r}")
        for name, (lo, hi) in self.bounds.items():
            if lo is not None and hi is not None and not lo < hi:
                raise DomainError(f"bounds for {name!r} must satisfy lower < upper")

    def replace(self, **kwargs):
        return replace(self, **kwargs)


@dataclass(frozen=True)
class PeakGuess:
    """Detected peaks: centers (nm), heights (counts), HWHM widths (nm).

    ``shortfall`` > 0 means fewer maxima were found than requested.
    Entries are sorted by center wavelength.
    """

    centers: tuple
    heights: tuple
    widths: tuple
    requested: int

    @property
    def found(self):
        return len(self.centers)

    @property
    def shortfall(self):
        return self.requested - self.found


def _moving_average(y, window):
    if window <= 1:
        return np.asarray(y, dtype=float)
    kernel = np.ones(int(window))
    norm = np.convolve(np.ones_like(y, dtype=float), kernel, mode="same")
    return np.convolve(y, kernel, mode="same") / norm


def _noise_scale(y):
    """Robust noise sigma from first differences (MAD estimator)."""
    diffs = np.diff(y)
    mad = np.median(np.abs(diffs - np.median(diffs)))
    return mad / (0.6745 * np.sqrt(2.0))


def detect_peaks(spec: Spectrum, n=3, smoothing_window=5, min_prominence=None):
    """Locate the ``n`` most prominent local maxima of a spectrum.

    The intensity trace is smoothed with a moving average before maxima
    are ranked by prominence.  Maxima whose prominence is consistent with
    the noise floor (estimated from first differences) are ignored unless
    an explicit ``min_prominence`` is given.  Widths are HWHM estimates
    from half-height crossings of the smoothed trace.  Returns a
    :class:`PeakGuess`; if fewer than ``n`` maxima exist the shortfall is
    reported rather than raised.
    """
    if n not in (1, 2, 3):
        raise DomainError(f"n must be 1, 2 or 3, got {n}")
    if smoothing_window < 1:
        raise InputError(f"smoothing_window must be >= 1, got {smoothing_window}")
    if len(spec) < smoothing_window:
        raise InputError(
            f"spectrum has {len(spec)} samples, shorter than smoothing window {smoothing_window}"
        )
    wl = spec.wavelengths
    smoothed = _moving_average(spec.intensities, smoothing_window)
    if min_prominence is None:
        raw_range = float(spec.intensities.max() - spec.intensities.min())
        min_prominence = max(
            8.0 * _noise_scale(spec.intensities) / np.sqrt(smoothing_window),
            1e-6 * raw_range,
        )
    idx, props = find_peaks(smoothed, prominence=min_prominence)
    if idx.size == 0:
        return PeakGuess((), (), (), requested=n)

    order = np.argsort(props["prominences"])[::-1][:n]
    chosen = np.sort(idx[order])
    width_samples = peak_widths(smoothed, chosen, rel_height=0.5)
    sample_axis = np.arange(wl.size)
    left = np.interp(width_samples[2], sample_axis, wl)
    right = np.interp(width_samples[3], sample_axis, wl)
    min_step = np.min(np.diff(wl))
    hwhm = np.maximum((right - left) / 2.0, min_step / 2.0)
    return PeakGuess(
        centers=tuple(float(wl[i]) for i in chosen),
        heights=tuple(float(smoothed[i]) for i in chosen),
        widths=tuple(float(w) for w in hwhm),
        requested=n,
    )


def _linear_amplitudes(spec, centers, widths):
    """Best-fit peak areas at frozen centers/widths (linear least squares).

    Amplitudes enter the model linearly, so this pins the initial scales
    far better than height-times-width area estimates on blended peaks.
    Clipped to a small positive floor.
    """
    cols = [lorentzian(w, spec.wavelengths - c) for c, w in zip(centers, widths)]
    design = np.stack(cols, axis=1)
    amps, *_ = np.linalg.lstsq(design, spec.intensities, rcond=None)
    scale = max(float(np.max(np.abs(amps))), 1.0)
    return np.clip(amps, 1e-9 * scale, None)


def _profile_halfwidth(spec):
    """Half-max half-width of the whole intensity profile, or None."""
    y = spec.intensities
    above = np.where(y >= y.max() / 2.0)[0]
    if above.size < 2:
        return None
    return float(spec.wavelengths[above[-1]] - spec.wavelengths[above[0]]) / 2.0


def _assemble_guess(spec, centers, widths):
    """Sorted-triplet guess with linearly solved amplitudes, or None."""
    min_step = float(np.min(np.diff(spec.wavelengths)))
    order = np.argsort(centers)
    centers = [float(centers[i]) for i in order]
    widths = [max(float(widths[i]), min_step / 2.0) for i in order]
    if not centers[0] < centers[2]:
        return None
    amps = _linear_amplitudes(spec, centers, widths)
    return TripletParams(
        a_lower=amps[0], a_upper=amps[2], a_bare=amps[1],
        c_lower=centers[0], c_upper=centers[2], c_bare=centers[1],
        w_lower=widths[0], w_upper=widths[2], w_bare=widths[1],
    )


def _guess_layouts(spec, cavity_wavelength, smoothing_window):
    """Candidate (centers, widths) layouts from detected peaks."""
    guess = detect_peaks(spec, n=3, smoothing_window=smoothing_window)
    if guess.found == 0:
        raise InputError("no peaks found; cannot build an initial guess")

    layouts = []
    if guess.found == 3:
        layouts.append((guess.centers, guess.widths))
        blob = _profile_halfwidth(spec)
        if blob:
            layouts.append((guess.centers, (blob / 2,) * 3))
    elif guess.found == 2:
        if cavity_wavelength is None:
            raise InputError(
                "only 2 peaks found; a cavity wavelength is required to seed "
                "the bare-cavity center"
            )
        centers = (guess.centers[0], float(cavity_wavelength), guess.centers[1])
        w_mid = 0.5 * (guess.widths[0] + guess.widths[1])
        layouts.append((centers, (guess.widths[0], w_mid, guess.widths[1])))
    else:
        c0, w0 = guess.centers[0], guess.widths[0]
        c_bare = float(cavity_wavelength) if cavity_wavelength is not None else c0
        for spread in (1.0, 0.6, 1.6):
            off = w0 * spread
            layouts.append(((c0 - off, c_bare, c0 + off), (w0 / 2,) * 3))
    return layouts


def initial_triplet_guess(spec: Spectrum, cavity_wavelength=None, smoothing_window=5):
    """Build a starting :class:`TripletParams` from detected peaks.

    With three maxima the outermost become the lower/upper polaritons and
    the middle one the bare cavity.  With two, the bare-cavity center is
    pinned to ``cavity_wavelength`` (required in that case; near resonance
    the bare peak is usually blended into the polariton doublet).  With a
    single maximum the guess is a tight symmetric triplet around it.
    Amplitudes are solved linearly at the guessed centers and widths.
    """
    layouts = _guess_layouts(spec, cavity_wavelength, smoothing_window)
    for centers, widths in layouts:
        guess = _assemble_guess(spec, centers, widths)
        if guess is not None:
            return guess
    raise InputError("peak layout is degenerate; cannot build an initial guess")


def initial_guess_candidates(spec: Spectrum, cavity_wavelength=None, smoothing_window=5):
    """Deterministic list of starting points for a restart loop.

    Each detected-peak layout is expanded with a few width rescalings;
    half-height widths are unreliable on blended profiles, and restarting
    across scales lets the caller keep the best fit (restarts are a
    caller-side loop, not a fitter feature).
    """
    layouts = _guess_layouts(spec, cavity_wavelength, smoothing_window)
    candidates = []
    for centers, widths in layouts:
        for scale in (1.0, 0.5, 2.0):
            guess = _assemble_guess(spec, centers, [w * scale for w in widths])
            if guess is not None:
                candidates.append(guess)
    if not candidates:
        raise InputError("peak layout is degenerate; cannot build an initial guess")
    return candidates


def _triplet_model_and_jacobian(p, lam):
    """Model values and the analytic 9-column Jacobian at ``lam``."""
    n = lam.size
    model = np.zeros(n)
    jac = np.zeros((n, 9))
    for k in range(3):
        amp, cen, wid = p[k], p[3 + k], p[6 + k]
        d = lam - cen
        denom = wid * wid + d * d
        lor = wid / (math.pi * denom)
        model += amp * lor
        jac[:, k] = lor
        jac[:, 3 + k] = amp * 2.0 * wid * d / (math.pi * denom * denom)
        jac[:, 6 + k] = amp * (d * d - wid * wid) / (math.pi * denom * denom)
    return model, jac


def _ordering_projection(trial, fixed):
    """Keep c_lower < c_bare < c_upper once the polariton centers blend.

    Active only when |c_upper - c_lower| < max(w_lower, w_upper)/2, which
    is where unconstrained steps start swapping peak identities.  Fixed
    centers are never moved (the caller re-imposes them anyway).
    """
    il, iu, ib = _IDX["c_lower"], _IDX["c_upper"], _IDX["c_bare"]
    c_l, c_u, c_b = trial[il], trial[iu], trial[ib]
    if abs(c_u - c_l) >= max(trial[_IDX["w_lower"]], trial[_IDX["w_upper"]]) / 2.0:
        return trial
    eps = 1e-9
    if c_l > c_u:
        c_l, c_u = c_u, c_l
    if not fixed[ib]:
        c_b = min(max(c_b, c_l + eps), max(c_u - eps, c_l + eps))
    else:
        c_b = trial[ib]
        if not fixed[il]:
            c_l = min(c_l, c_b - eps)
        if not fixed[iu]:
            c_u = max(c_u, c_b + eps)
    trial[il], trial[iu], trial[ib] = c_l, c_u, c_b
    return trial


def _default_bounds(spec):
    lo = np.empty(9)
    hi = np.empty(9)
    wl_min, wl_max = spec.wavelengths[0], spec.wavelengths[-1]
    span = wl_max - wl_min
    lo[0:3], hi[0:3] = 0.0, np.inf
    lo[3:6], hi[3:6] = wl_min, wl_max
    lo[6:9], hi[6:9] = 1e-9, 10.0 * span
    return lo, hi


def fit_triplet(spec: Spectrum, init: TripletParams, cfg: FitConfig = FitConfig()):
    """Fit the three-Lorentzian model to a spectrum.

    Minimizes the (optionally Poisson-weighted) sum of squared residuals
    with a damped Gauss-Newton iteration using the analytic Jacobian.
    Returns a :class:`FitResult`; running out of iterations yields
    ``converged=False`` with the best parameters found so far.
    """
    lam = spec.wavelengths
    inten = spec.intensities
    if not np.all(np.isfinite(inten)):
        raise InputError("spectrum intensities contain non-finite values")

    wsqrt = (
        1.0 / np.sqrt(np.maximum(inten, 1.0))
        if cfg.weights == "poisson"
        else np.ones_like(inten)
    )

    def residual(p):
        model, _ = _triplet_model_and_jacobian(p, lam)
        return (model - inten) * wsqrt

    def jacobian(p):
        _, jac = _triplet_model_and_jacobian(p, lam)
        return jac * wsqrt[:, None]

    p0 = init.to_array()
    lower, upper = _default_bounds(spec)
    for name, (lo, hi) in cfg.bounds.items():
        i = _IDX[name]
        if lo is not None:
            lower[i] = lo
        if hi is not None:
            upper[i] = hi

    fixed = np.zeros(9, dtype=bool)
    for name, value in cfg.fixed_params.items():
        i = _IDX[name]
        fixed[i] = True
        p0[i] = float(value)

    project = (lambda t: _ordering_projection(t, fixed)) if cfg.ordering_guard else None
    res = levenberg_marquardt(
        residual,
        jacobian,
        p0,
        lower=lower,
        upper=upper,
        fixed_mask=fixed,
        max_iterations=cfg.max_iterations,
        rel_tolerance=cfg.rel_tolerance,
        grad_tolerance=cfg.grad_tolerance,
        step_tolerance=cfg.step_tolerance,
        damping_init=cfg.damping_init,
        project=project,
    )

    p = res.params.copy()
    cov = res.covariance
    converged = res.converged
    message = res.message
    il, iu = _IDX["c_lower"], _IDX["c_upper"]
    if p[il] > p[iu]:
        swap_ok = not any(
            fixed[_IDX[f"{kind}_{side}"]] for kind in ("a", "c", "w") for side in ("lower", "upper")
        )
        if swap_ok:
            order = list(range(9))
            for kind in ("a", "c", "w"):
                i, j = _IDX[f"{kind}_lower"], _IDX[f"{kind}_upper"]
                order[i], order[j] = order[j], order[i]
            p = p[order]
            if cov is not None:
                cov = cov[np.ix_(order, order)]
        else:
            converged = False
            message = "polariton centers crossed a fixed parameter"
            p[il] = p[iu] - 1e-9
    elif p[il] == p[iu]:
        converged = False
        message = "polariton centers collapsed"
        p[il] = p[iu] - 1e-9

    return FitResult(
        params=TripletParams.from_array(p),
        residual_norm=res.cost,
        covariance=cov if converged else None,
        converged=converged,
        iterations=res.iterations,
        residual_history=tuple(res.cost_history),
        message=message,
    )


def fit_doublet(spec: Spectrum, init: TripletParams, cfg: FitConfig = FitConfig()):
    """Triplet fit with the bare-cavity peak frozen at zero amplitude.

    For spectra with no discernible bare-cavity emission (far detuned, or
    feeding fully suppressed).  The bare center and width are frozen too,
    since they are meaningless at zero amplitude.
    """
    fixed = dict(cfg.fixed_params)
    fixed.update({"a_bare": 0.0, "c_bare": init.c_bare, "w_bare": init.w_bare})
    return fit_triplet(spec, init, cfg.replace(fixed_params=fixed))


def fit_single_peak(spec: Spectrum, init: TripletParams, cfg: FitConfig = FitConfig()):
    """Fit a lone Lorentzian (bare-cavity slot); polariton peaks frozen at zero.

    Used for cavity characterization scans where only the cavity line is
    visible, e.g. to extract a quality factor.
    """
    fixed = dict(cfg.fixed_params)
    fixed.update({
        "a_lower": 0.0, "c_lower": init.c_lower, "w_lower": init.w_lower,
        "a_upper": 0.0, "c_upper": init.c_upper, "w_upper": init.w_upper,
    })
    return fit_triplet(spec, init, cfg.replace(fixed_params=fixed))


def extract_observables(fit: FitResult, lambda0=None):
    """Physical observables from a converged fit.

    Returns a dict with the polariton splitting (nm), the coupling
    strength g (GHz) derived from it, the bare-cavity emission ratio S,
    and the FWHM (= 2*HWHM) of each peak in nm.  ``lambda0`` defaults to
    the midpoint of the two polariton centers.
    """
    from .feeding import s_ratio

    fit.require_converged()
    p = fit.params
    splitting = p.c_upper - p.c_lower
    if lambda0 is None:
        lambda0 = 0.5 * (p.c_lower + p.c_upper)
    total = p.a_lower + p.a_upper + p.a_bare
    s_value = s_ratio(p.a_lower, p.a_upper, p.a_bare) if total > 0 else 0.0
    return {
        "splitting_nm": float(splitting),
        "g_GHz": float(splitting_to_g(splitting, lambda0)),
        "s_dimensionless": float(s_value),
        "fwhm_lower_nm": 2.0 * p.w_lower,
        "fwhm_upper_nm": 2.0 * p.w_upper,
        "fwhm_bare_nm": 2.0 * p.w_bare,
    }
