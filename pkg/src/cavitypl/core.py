"""Domain types and the spectral/dispersion forward models.

Conventions
-----------
* Peak widths stored in :class:`TripletParams` are Lorentzian HWHM values
  (the gamma of ``L(gamma, delta) = gamma / (pi * (gamma**2 + delta**2))``).
  Reported linewidths elsewhere are FWHM = 2*gamma and are labeled as such.
* ``lower``/``upper`` peak labels are wavelength ordered: ``c_lower`` is the
  shorter-wavelength polariton peak and ``c_lower < c_upper`` always holds.
* ``kappa`` and ``gamma_x`` are energy decay rates in GHz, equal to the
  FWHM of the bare cavity and bare exciton lines in ordinary frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, StateError
from .units import C_NM_GHZ, linewidth_ghz_to_nm

__all__ = [
    "Spectrum",
    "TripletParams",
    "CoupledSystemParams",
    "FitResult",
    "PARAM_NAMES",
    "lorentzian",
    "triplet_intensity",
    "triplet_components",
    "polariton_frequencies",
    "polariton_splitting",
    "polariton_wavelength_peaks",
    "q_factor",
]

# Canonical parameter ordering used by the fitter and covariance matrices.
PARAM_NAMES = (
    "a_lower", "a_upper", "a_bare",
    "c_lower", "c_upper", "c_bare",
    "w_lower", "w_upper", "w_bare",
)


def _readonly(arr):
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Spectrum:
    """A sampled photoluminescence spectrum.

    Parameters
    ----------
    wavelengths : array
        Strictly increasing wavelength axis in nm, at least 8 samples.
    intensities : array
        Non-negative recorded intensity in counts, same length.
    meta : dict, optional
        Free-form labels such as ``temperature_K``, ``power_uW``,
        ``regime`` ('ABE' or 'QRE') and ``lambda_cavity_nm``.
    """

    wavelengths: np.ndarray
    intensities: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        wl = _readonly(self.wavelengths)
        inten = _readonly(self.intensities)
        if wl.ndim != 1 or inten.ndim != 1:
            raise DomainError("wavelengths and intensities must be 1-D arrays")
        if wl.size < 8:
            raise DomainError(f"spectrum needs >= 8 samples, got {wl.size}")
        if wl.size != inten.size:
            raise DomainError(
                f"axis length mismatch: {wl.size} wavelengths vs {inten.size} intensities"
            )
        if not np.all(np.isfinite(wl)):
            raise DomainError("wavelengths must be finite")
        if not np.all(np.diff(wl) > 0):
            raise DomainError("wavelengths must be strictly increasing")
        if not np.all(inten >= 0):
            raise DomainError("intensities must be non-negative and not NaN")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "intensities", inten)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return self.wavelengths.size

    @property
    def temperature_K(self):
        return self.meta.get("temperature_K")

    @property
    def power_uW(self):
        return self.meta.get("power_uW")

    @property
    def regime(self):
        return self.meta.get("regime")


@dataclass(frozen=True)
class TripletParams:
    """Parameters of the three-Lorentzian spectral model.

    Amplitudes are peak areas in counts*nm, centers in nm, widths are
    HWHM in nm.  ``c_lower < c_upper`` is required; the bare-cavity center
    may sit anywhere (peaks may cross it while tuning).
    """

    a_lower: float
    a_upper: float
    a_bare: float
    c_lower: float
    c_upper: float
    c_bare: float
    w_lower: float
    w_upper: float
    w_bare: float

    def __post_init__(self):
        vals = self.to_array()
        if not np.all(np.isfinite(vals)):
            raise DomainError("triplet parameters must be finite")
        if min(self.a_lower, self.a_upper, self.a_bare) < 0:
            raise DomainError("amplitudes must be >= 0")
        if min(self.w_lower, self.w_upper, self.w_bare) <= 0:
            raise DomainError("widths must be > 0")
        if not self.c_lower < self.c_upper:
            raise DomainError(
                f"c_lower must be < c_upper, got {self.c_lower} >= {self.c_upper}"
            )

    def to_array(self):
        return np.array([getattr(self, name) for name in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (9,):
            raise DomainError(f"expected 9 parameters, got shape {values.shape}")
        return cls(**dict(zip(PARAM_NAMES, values)))

    def replace(self, **kwargs):
        return replace(self, **kwargs)


@dataclass(frozen=True)
class CoupledSystemParams:
    """Physical parameters of the coupled exciton-cavity system.

    Parameters
    ----------
    g : float
        Exciton-photon coupling strength, GHz.
    kappa : float
        Cavity energy decay rate (FWHM), GHz.
    gamma_x : float
        Exciton decay rate (FWHM), GHz.
    lambda_cavity : float
        Bare cavity wavelength, nm.
    delta : float
        Exciton-cavity detuning in GHz; positive means the exciton is
        blue of the cavity.
    """

    g: float
    kappa: float
    gamma_x: float
    lambda_cavity: float
    delta: float = 0.0

    def __post_init__(self):
        for name in ("g", "kappa", "gamma_x", "lambda_cavity"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not np.isfinite(self.delta):
            raise DomainError("delta must be finite")
        if not self.is_strongly_coupled():
            raise DomainError(
                "not strongly coupled: requires g > |kappa - gamma_x| / 4 "
                f"(g={self.g}, kappa={self.kappa}, gamma_x={self.gamma_x})"
            )

    def is_strongly_coupled(self):
        return self.g > abs(self.kappa - self.gamma_x) / 4.0

    def detuned(self, delta):
        return replace(self, delta=float(delta))


@dataclass(frozen=True)
class FitResult:
    """Outcome of a nonlinear least-squares fit of the triplet model.

    ``residual_norm`` is the (weighted) sum of squared residuals in
    counts**2.  ``covariance`` is the 9x9 parameter covariance, present on
    converged fits; rows and columns of fixed parameters are exactly zero.
    ``residual_history`` records the residual norm after every accepted
    step, starting from the initial guess.
    """

    params: TripletParams
    residual_norm: float
    covariance: np.ndarray | None
    converged: bool
    iterations: int
    residual_history: tuple = ()
    message: str = ""

    def __post_init__(self):
        if self.converged:
            if not np.isfinite(self.residual_norm):
                raise DomainError("converged fit must have finite residual norm")
            if self.covariance is not None and np.any(np.diag(self.covariance) < 0):
                raise DomainError("covariance diagonal must be >= 0")

    def stderr(self):
        """Per-parameter standard errors, or None if no covariance."""
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def require_converged(self):
        if not self.converged:
            raise StateError(f"fit did not converge: {self.message or 'no detail'}")


def lorentzian(gamma, delta):
    """Normalized Lorentzian density, 1/nm.

    Returns ``gamma / (pi * (gamma**2 + delta**2))``: unit area over the
    real line, peak value ``1/(pi*gamma)``, HWHM ``gamma``.  ``delta`` may
    be a scalar or an array.
    """
    if not np.all(np.asarray(gamma) > 0):
        raise DomainError(f"gamma must be > 0, got {gamma!r}")
    delta = np.asarray(delta, dtype=float)
    out = gamma / (math.pi * (gamma * gamma + delta * delta))
    return out if out.ndim else float(out)


def triplet_intensity(params: TripletParams, lam):
    """Evaluate the three-Lorentzian model at wavelength(s) ``lam`` in nm."""
    if not isinstance(params, TripletParams):
        params = TripletParams.from_array(np.asarray(params, dtype=float))
    lam = np.asarray(lam, dtype=float)
    out = (
        params.a_lower * lorentzian(params.w_lower, lam - params.c_lower)
        + params.a_upper * lorentzian(params.w_upper, lam - params.c_upper)
        + params.a_bare * lorentzian(params.w_bare, lam - params.c_bare)
    )
    return out if np.ndim(out) else float(out)


def triplet_components(params: TripletParams, lam):
    """Per-peak contributions of the triplet model, keyed lower/upper/bare."""
    lam = np.asarray(lam, dtype=float)
    return {
        "lower": params.a_lower * lorentzian(params.w_lower, lam - params.c_lower),
        "upper": params.a_upper * lorentzian(params.w_upper, lam - params.c_upper),
        "bare": params.a_bare * lorentzian(params.w_bare, lam - params.c_bare),
    }


def _dispersion_root(sys: CoupledSystemParams):
    half_diff = 0.5 * sys.delta + 0.25j * (sys.kappa - sys.gamma_x)
    root = np.sqrt(complex(sys.g * sys.g + half_diff * half_diff))
    return root if root.real >= 0 else -root


def polariton_frequencies(sys: CoupledSystemParams):
    """Complex eigenfrequencies of the coupled two-level dispersion, GHz.

    Eigenvalues of ``[[nu_x - i*gamma_x/2, g], [g, nu_c - i*kappa/2]]``
    where ``nu_c = C/lambda_cavity`` and ``nu_x = nu_c + delta``:

        omega = mean - i*(kappa+gamma_x)/4 +- sqrt(g**2 + (delta/2 + i*(kappa-gamma_x)/4)**2)

    Returns ``(omega_red, omega_blue)`` ordered by increasing real part.
    Real parts are peak positions; ``-2 * imag`` gives the peak FWHM in GHz.
    """
    nu_c = C_NM_GHZ / sys.lambda_cavity
    nu_x = nu_c + sys.delta
    mean = 0.5 * (nu_x + nu_c) - 0.25j * (sys.kappa + sys.gamma_x)
    root = _dispersion_root(sys)
    return mean - root, mean + root


def polariton_splitting(sys: CoupledSystemParams):
    """Frequency splitting of the polariton peaks in GHz, 2*Re(root).

    Equal to the difference of the real parts of the eigenfrequencies but
    computed without subtracting two near-equal absolute frequencies, so
    at delta = 0 with kappa = gamma_x it equals 2g to the last bit.
    """
    return 2.0 * _dispersion_root(sys).real


def polariton_wavelength_peaks(sys: CoupledSystemParams):
    """Polariton peak positions and widths on the wavelength axis.

    Returns ``((c_lower, hwhm_lower), (c_upper, hwhm_upper))`` in nm with
    wavelength-ordered labels (``c_lower < c_upper``); the shorter
    wavelength corresponds to the higher-frequency branch.
    """
    omega_red, omega_blue = polariton_frequencies(sys)
    peaks = []
    for omega in (omega_blue, omega_red):  # decreasing frequency = increasing wavelength
        center = C_NM_GHZ / omega.real
        fwhm_ghz = -2.0 * omega.imag
        hwhm_nm = 0.5 * linewidth_ghz_to_nm(fwhm_ghz, center)
        peaks.append((float(center), float(hwhm_nm)))
    return tuple(peaks)


def q_factor(center_nm, fwhm_nm):
    """Quality factor Q = center / FWHM."""
    if not fwhm_nm > 0:
        raise DomainError(f"fwhm must be > 0, got {fwhm_nm!r}")
    return center_nm / fwhm_nm
