"""Unit conversions between wavelength and frequency.

Unit canon used throughout the package: wavelengths in nm, rates and
frequencies in GHz, pump powers in uW, peak areas in counts*nm.  Every
conversion lives here; no other module defines its own speed of light.

Linewidth and splitting conversions use the local linearization
dnu = C * dlambda / lambda**2, which is accurate to better than 1e-3
relative for the sub-nm intervals this package deals with.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

# Speed of light in nm*GHz (299792458 m/s expressed in nm/ns).
C_NM_GHZ = 2.99792458e8


def _require_positive(name, value):
    if not np.all(np.asarray(value) > 0):
        raise DomainError(f"{name} must be > 0, got {value!r}")


def wavelength_to_frequency(lambda_nm):
    """Convert a wavelength in nm to a frequency in GHz."""
    _require_positive("lambda_nm", lambda_nm)
    return C_NM_GHZ / np.asarray(lambda_nm, dtype=float)


def frequency_to_wavelength(nu_ghz):
    """Convert a frequency in GHz to a wavelength in nm."""
    _require_positive("nu_ghz", nu_ghz)
    return C_NM_GHZ / np.asarray(nu_ghz, dtype=float)


def linewidth_nm_to_ghz(dlambda_nm, lambda0_nm):
    """Convert a wavelength interval at lambda0 to a frequency interval."""
    _require_positive("lambda0_nm", lambda0_nm)
    return C_NM_GHZ * np.asarray(dlambda_nm, dtype=float) / lambda0_nm**2


def linewidth_ghz_to_nm(dnu_ghz, lambda0_nm):
    """Convert a frequency interval to a wavelength interval at lambda0."""
    _require_positive("lambda0_nm", lambda0_nm)
    return np.asarray(dnu_ghz, dtype=float) * lambda0_nm**2 / C_NM_GHZ


def splitting_to_g(delta_lambda_nm, lambda0_nm):
    """Coupling strength g in GHz from a polariton splitting in nm.

    The splitting of the two polariton peaks equals 2g in frequency units,
    so g = C * delta_lambda / (2 * lambda0**2).
    """
    if delta_lambda_nm < 0:
        raise DomainError(f"splitting must be >= 0, got {delta_lambda_nm!r}")
    _require_positive("lambda0_nm", lambda0_nm)
    return C_NM_GHZ * delta_lambda_nm / (2.0 * lambda0_nm**2)


def g_to_splitting(g_ghz, lambda0_nm):
    """Polariton splitting in nm from a coupling strength g in GHz.

    Exact algebraic inverse of :func:`splitting_to_g`.
    """
    if g_ghz < 0:
        raise DomainError(f"g must be >= 0, got {g_ghz!r}")
    _require_positive("lambda0_nm", lambda0_nm)
    return 2.0 * g_ghz * lambda0_nm**2 / C_NM_GHZ


def kappa_from_q(lambda_cavity_nm, q):
    """Cavity energy decay rate (FWHM in GHz) from a quality factor.

    The cavity linewidth is dnu = nu/Q = C/(lambda*Q).
    """
    _require_positive("lambda_cavity_nm", lambda_cavity_nm)
    _require_positive("q", q)
    return C_NM_GHZ / (lambda_cavity_nm * q)
