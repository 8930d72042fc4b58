"""Shared test helpers: synthetic triplets and independent oracles."""

import math

import numpy as np

from cavitypl import Spectrum, TripletParams


def eval_triplet_reference(p, lam):
    """Sum of three Lorentzians evaluated from a raw 9-vector.

    Independent re-statement of the model used as an oracle for Jacobian
    and synthesis checks (kept free of package internals on purpose).
    """
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    for k in range(3):
        amp, cen, wid = p[k], p[3 + k], p[6 + k]
        out += amp * wid / (math.pi * (wid**2 + (lam - cen) ** 2))
    return out


def fd_jacobian(p, lam, rel_step=6e-6):
    """Central finite differences of the triplet model (oracle).

    Step sizes follow the curvature scale of each parameter: the peak
    width for centers and widths (a center step scaled by the absolute
    wavelength would dwarf a 0.02 nm wide peak), the value itself for
    amplitudes.
    """
    p = np.asarray(p, dtype=float)
    scales = np.empty(9)
    scales[0:3] = np.maximum(np.abs(p[0:3]), 1e-3)
    scales[3:6] = p[6:9]
    scales[6:9] = p[6:9]
    jac = np.empty((np.size(lam), 9))
    for j in range(9):
        h = rel_step * scales[j]
        plus, minus = p.copy(), p.copy()
        plus[j] += h
        minus[j] -= h
        jac[:, j] = (eval_triplet_reference(plus, lam) - eval_triplet_reference(minus, lam)) / (2 * h)
    return jac


def random_separated_triplet(rng):
    """Random triplet with centers far enough apart to be well posed."""
    c_bare = rng.uniform(933.2, 933.6)
    c_lower = c_bare - rng.uniform(0.45, 0.8)
    c_upper = c_bare + rng.uniform(0.45, 0.8)
    return TripletParams(
        a_lower=rng.uniform(0.5, 5.0),
        a_upper=rng.uniform(0.5, 5.0),
        a_bare=rng.uniform(0.5, 5.0),
        c_lower=c_lower,
        c_upper=c_upper,
        c_bare=c_bare,
        w_lower=rng.uniform(0.02, 0.1),
        w_upper=rng.uniform(0.02, 0.1),
        w_bare=rng.uniform(0.02, 0.1),
    )


def perturbed(params, rng, frac=0.1):
    """Multiplicative perturbation up to +-frac on every parameter.

    Center perturbations are scaled by the local width instead of the
    absolute wavelength so a 10% tweak stays a peak-sized displacement.
    """
    arr = params.to_array()
    out = arr.copy()
    for k in range(3):
        out[k] = arr[k] * (1 + rng.uniform(-frac, frac))
        out[3 + k] = arr[3 + k] + arr[6 + k] * rng.uniform(-frac, frac)
        out[6 + k] = arr[6 + k] * (1 + rng.uniform(-frac, frac))
    if out[3] >= out[4]:
        out[3], out[4] = min(out[3], out[4]) - 1e-6, max(out[3], out[4]) + 1e-6
    return TripletParams.from_array(out)


def spectrum_from_params(params, lo=None, hi=None, step=0.005, noise_sigma=0.0, rng=None, meta=None):
    """Noiseless or Gaussian-noise spectrum sampled from a triplet."""
    if lo is None:
        lo = params.c_lower - 0.8
    if hi is None:
        hi = params.c_upper + 0.8
    lam = np.arange(lo, hi + step / 2, step)
    clean = eval_triplet_reference(params.to_array(), lam)
    if noise_sigma > 0:
        clean = np.maximum(clean + rng.normal(0.0, noise_sigma, lam.size), 0.0)
    return Spectrum(lam, clean, meta=meta or {})


def max_relative_error(fitted, truth):
    a, b = np.asarray(fitted, dtype=float), np.asarray(truth, dtype=float)
    return float(np.max(np.abs(a - b) / np.abs(b)))
