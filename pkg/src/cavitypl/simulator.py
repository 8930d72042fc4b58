"""Synthetic-spectrum generation: detuning scans, power scans, fixtures.

A scan is driven by a :class:`ScanConfig`; every spectrum's RNG stream is
derived from ``(seed, scan index)`` so serial and parallel generation are
bit-identical.  The ``reference_*`` helpers build configurations anchored
to the quoted observables of the reference device (g from a 0.11 nm
on-resonance splitting at 933.8 nm, cavity Q of 13,300, saturation power
8.5 uW, ABE feeding ratio 0.75, QRE feeding ratio 0.45 at 1.5 uW rising
to 0.66 at 8 uW).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import CoupledSystemParams, Spectrum, TripletParams, polariton_wavelength_peaks
from .errors import ConfigError, DomainError, InputError
from .feeding import FeedingModelParams, model_amplitudes
from .units import kappa_from_q, linewidth_ghz_to_nm, splitting_to_g

__all__ = [
    "LambdaGrid",
    "NoiseModel",
    "TemperatureMap",
    "SSchedule",
    "ScanConfig",
    "ScanPoint",
    "ScanResult",
    "synth_spectrum",
    "synth_scan",
    "emit_fixture",
    "g_for_observed_splitting",
    "reference_system",
    "reference_abe_feeding",
    "reference_qre_feeding",
    "reference_scan_config",
    "REFERENCE_SCANS",
]

# Quoted observables of the reference device; everything else is derived.
REF_LAMBDA_CAVITY_NM = 933.8
REF_LAMBDA_CHARACTERIZATION_NM = 933.9
REF_CAVITY_Q = 13300.0
REF_SPLITTING_NM = 0.11
REF_GAMMA_X_GHZ = 1.0
REF_P_SAT_UW = 8.5
REF_S_ABE = 0.75
REF_S_QRE_ANCHORS = ((1.5, 0.45), (8.0, 0.66))
REF_INSTRUMENT_RESOLUTION_NM = 0.02

RNG_DESCRIPTION = "numpy.random.default_rng(PCG64) seeded with SeedSequence([seed, index])"


@dataclass(frozen=True)
class LambdaGrid:
    """Uniform wavelength grid: [min_nm, max_nm] sampled every step_nm."""

    min_nm: float
    max_nm: float
    step_nm: float

    def __post_init__(self):
        if not self.step_nm > 0:
            raise DomainError(f"step_nm must be > 0, got {self.step_nm!r}")
        if not self.min_nm < self.max_nm:
            raise DomainError("min_nm must be < max_nm")

    def wavelengths(self):
        n = int(math.floor((self.max_nm - self.min_nm) / self.step_nm + 1e-9)) + 1
        return self.min_nm + self.step_nm * np.arange(n)


@dataclass(frozen=True)
class NoiseModel:
    """Noise applied to a clean model spectrum.

    ``gaussian``: additive, sigma = sigma_rel * max(clean), floored at 0.
    ``poisson``: counts drawn as Poisson(clean * scale) / scale.
    """

    kind: str = "none"
    sigma_rel: float = 0.02
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "poisson"):
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma_rel > 0:
            raise DomainError("sigma_rel must be > 0")
        if self.kind == "poisson" and not self.scale > 0:
            raise DomainError("scale must be > 0")

    def apply(self, clean, rng):
        if self.kind == "none":
            return clean.copy()
        if self.kind == "gaussian":
            sigma = self.sigma_rel * clean.max()
            return np.maximum(clean + rng.normal(0.0, sigma, clean.size), 0.0)
        return rng.poisson(clean * self.scale).astype(float) / self.scale


@dataclass(frozen=True)
class TemperatureMap:
    """Affine temperature-to-detuning map, delta = slope * (T - t0).

    Illustrative, not a calibrated dispersion: the default slope moves the
    dot across the cavity over a few kelvin around the resonance
    temperature t0.
    """

    slope_GHz_per_K: float = -25.0
    t0_K: float = 16.4

    def detuning(self, temperature_K):
        return self.slope_GHz_per_K * (np.asarray(temperature_K, dtype=float) - self.t0_K)


@dataclass(frozen=True)
class SSchedule:
    """Pins the feeding ratio S(P) to a straight line through anchor points.

    Used for power-scan fixtures that must reproduce quoted S values the
    phenomenological feeding model cannot pass through simultaneously.
    The bare amplitude becomes ``S/(1-S)`` times the model polariton total.
    """

    anchors: tuple  # ((power_uW, s), ...)

    def __post_init__(self):
        anchors = tuple((float(p), float(s)) for p, s in self.anchors)
        if len(anchors) < 2:
            raise DomainError("need at least two (power, S) anchors")
        for p, s in anchors:
            if not p > 0 or not 0 < s < 1:
                raise DomainError(f"invalid anchor ({p}, {s})")
        object.__setattr__(self, "anchors", anchors)

    def s_at(self, power_uW):
        p = np.array([a[0] for a in self.anchors])
        s = np.array([a[1] for a in self.anchors])
        slope, intercept = np.polyfit(p, s, 1)
        value = slope * power_uW + intercept
        if not 0 < value < 1:
            raise DomainError(f"scheduled S={value:.3f} at {power_uW} uW is outside (0, 1)")
        return float(value)


@dataclass(frozen=True)
class ScanConfig:
    """Everything needed to generate a scan deterministically.

    Exactly one scan axis must be given: ``detunings_GHz`` or
    ``temperatures_K`` (with a map) for a detuning scan at fixed
    ``power_uW``, or ``powers_uW`` for a power scan at the system's own
    detuning.
    """

    system: CoupledSystemParams
    feeding: FeedingModelParams
    grid: LambdaGrid
    detunings_GHz: tuple | None = None
    temperatures_K: tuple | None = None
    temperature_map: TemperatureMap | None = None
    powers_uW: tuple | None = None
    power_uW: float = 1.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    instrument_fwhm_nm: float | None = None
    s_schedule: SSchedule | None = None
    label: str = ""

    def __post_init__(self):
        axes = sum(x is not None for x in (self.detunings_GHz, self.temperatures_K, self.powers_uW))
        if axes != 1:
            raise ConfigError(
                "exactly one of detunings_GHz, temperatures_K or powers_uW must be given"
            )
        if self.temperatures_K is not None and self.temperature_map is None:
            raise ConfigError("temperatures_K requires a temperature_map")
        for name in ("detunings_GHz", "temperatures_K", "powers_uW"):
            val = getattr(self, name)
            if val is not None:
                val = tuple(float(v) for v in val)
                if len(val) == 0:
                    raise InputError(f"{name} must not be empty")
                object.__setattr__(self, name, val)
        if self.powers_uW is None and not self.power_uW > 0:
            raise ConfigError("power_uW must be > 0")
        if self.s_schedule is not None and self.powers_uW is None:
            raise ConfigError("s_schedule applies to power scans only")
        if self.instrument_fwhm_nm is not None and not self.instrument_fwhm_nm > 0:
            raise ConfigError("instrument_fwhm_nm must be > 0")

    def replace(self, **kwargs):
        return replace(self, **kwargs)


@dataclass(frozen=True)
class ScanPoint:
    index: int
    detuning_GHz: float
    power_uW: float
    spectrum: Spectrum
    temperature_K: float | None = None


@dataclass(frozen=True)
class ScanResult:
    config: ScanConfig
    points: tuple

    def __len__(self):
        return len(self.points)

    def spectra(self):
        return [pt.spectrum for pt in self.points]


def _instrument_kernel(fwhm_nm, step_nm):
    sigma = fwhm_nm / (2.0 * math.sqrt(2.0 * math.log(2.0))) / step_nm
    half = max(int(math.ceil(5.0 * sigma)), 1)
    x = np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def _convolve_same(y, kernel):
    norm = np.convolve(np.ones_like(y), kernel, mode="same")
    return np.convolve(y, kernel, mode="same") / norm


def triplet_from_system(system: CoupledSystemParams, amplitudes):
    """Triplet parameters for given peak areas at the system's detuning."""
    (c_lower, w_lower), (c_upper, w_upper) = polariton_wavelength_peaks(system)
    w_bare = 0.5 * linewidth_ghz_to_nm(system.kappa, system.lambda_cavity)
    return TripletParams(
        a_lower=amplitudes.a_lower,
        a_upper=amplitudes.a_upper,
        a_bare=amplitudes.a_bare,
        c_lower=c_lower,
        c_upper=c_upper,
        c_bare=system.lambda_cavity,
        w_lower=w_lower,
        w_upper=w_upper,
        w_bare=w_bare,
    )


def synth_spectrum(
    system: CoupledSystemParams,
    feeding: FeedingModelParams,
    power_uW,
    grid: LambdaGrid,
    noise: NoiseModel = NoiseModel(),
    seed=0,
    *,
    amplitudes=None,
    instrument_fwhm_nm=None,
    meta=None,
):
    """Generate one spectrum of the coupled system.

    Peak positions and widths come from the dispersion, areas from the
    feeding model at ``power_uW`` (or from an explicit ``amplitudes``
    override), evaluated on the grid and optionally convolved with a
    Gaussian instrument response before noise is applied.
    """
    if amplitudes is None:
        amplitudes = model_amplitudes(feeding, power_uW)
    params = triplet_from_system(system, amplitudes)
    wl = grid.wavelengths()
    centers = (params.c_lower, params.c_upper, params.c_bare)
    if not any(wl[0] <= c <= wl[-1] for c in centers):
        raise InputError(
            f"grid [{wl[0]:.3f}, {wl[-1]:.3f}] nm excludes all three peak centers"
        )
    from .core import triplet_intensity

    clean = triplet_intensity(params, wl)
    if instrument_fwhm_nm is not None:
        clean = _convolve_same(clean, _instrument_kernel(instrument_fwhm_nm, grid.step_nm))
    rng = np.random.default_rng([int(seed)] if np.ndim(seed) == 0 else list(seed))
    intensities = noise.apply(clean, rng)
    full_meta = {
        "power_uW": float(power_uW),
        "regime": feeding.regime,
        "detuning_GHz": float(system.delta),
        "lambda_cavity_nm": float(system.lambda_cavity),
    }
    if meta:
        full_meta.update(meta)
    return Spectrum(wavelengths=wl, intensities=intensities, meta=full_meta)


def _scan_axis(cfg: ScanConfig):
    """Yield (detuning, power, temperature) per scan step."""
    if cfg.powers_uW is not None:
        return [(cfg.system.delta, p, None) for p in cfg.powers_uW]
    if cfg.detunings_GHz is not None:
        return [(d, cfg.power_uW, None) for d in cfg.detunings_GHz]
    temps = cfg.temperatures_K
    return [(float(cfg.temperature_map.detuning(t)), cfg.power_uW, t) for t in temps]


def synth_scan(cfg: ScanConfig):
    """Generate every spectrum of a scan.  Deterministic in (config, seed)."""
    points = []
    for index, (delta, power, temperature) in enumerate(_scan_axis(cfg)):
        system = cfg.system.detuned(delta)
        amplitudes = None
        if cfg.s_schedule is not None:
            base = model_amplitudes(cfg.feeding, power)
            s = cfg.s_schedule.s_at(power)
            amplitudes = replace(base, a_bare=s / (1.0 - s) * base.polariton_total)
        meta = {"scan_index": index, "label": cfg.label}
        if temperature is not None:
            meta["temperature_K"] = float(temperature)
        spectrum = synth_spectrum(
            system,
            cfg.feeding,
            power,
            cfg.grid,
            noise=cfg.noise,
            seed=[cfg.seed, index],
            amplitudes=amplitudes,
            instrument_fwhm_nm=cfg.instrument_fwhm_nm,
            meta=meta,
        )
        points.append(
            ScanPoint(
                index=index,
                detuning_GHz=float(delta),
                power_uW=float(power),
                spectrum=spectrum,
                temperature_K=temperature,
            )
        )
    return ScanResult(config=cfg, points=tuple(points))


def emit_fixture(result: ScanResult, out_dir):
    """Write a scan as canonical CSV files plus a manifest.

    Returns the manifest path.  Reading the files back reproduces the
    arrays bit-exactly, and re-running the same config and seed reproduces
    the files byte-for-byte.
    """
    from . import dataio

    return dataio.write_scan_fixture(result, out_dir)


# ---------------------------------------------------------------------------
# Reference-device presets
# ---------------------------------------------------------------------------

def g_for_observed_splitting(splitting_nm, lambda0_nm, kappa_ghz, gamma_x_ghz):
    """Coupling strength whose on-resonance peak splitting is ``splitting_nm``.

    The observed splitting is 2*sqrt(g**2 - ((kappa-gamma_x)/4)**2), so the
    loss asymmetry is added back in quadrature.
    """
    half_split_ghz = splitting_to_g(splitting_nm, lambda0_nm)
    loss = (kappa_ghz - gamma_x_ghz) / 4.0
    return math.sqrt(half_split_ghz**2 + loss**2)


def reference_system(delta_GHz=0.0):
    """Coupled-system parameters anchored to the reference observables.

    kappa comes from the measured Q, gamma_x is a nominal 1 GHz (the
    exciton linewidth is not independently known), and g is chosen so the
    on-resonance splitting reproduces the quoted 0.11 nm.
    """
    kappa = kappa_from_q(REF_LAMBDA_CAVITY_NM, REF_CAVITY_Q)
    g = g_for_observed_splitting(
        REF_SPLITTING_NM, REF_LAMBDA_CAVITY_NM, kappa, REF_GAMMA_X_GHZ
    )
    return CoupledSystemParams(
        g=g,
        kappa=kappa,
        gamma_x=REF_GAMMA_X_GHZ,
        lambda_cavity=REF_LAMBDA_CAVITY_NM,
        delta=delta_GHz,
    )


def reference_abe_feeding(k_exciton=1000.0, s_target=REF_S_ABE, eta_feed=0.6):
    """ABE feeding whose power-independent S equals ``s_target``."""
    k_charged = k_exciton * s_target / (1.0 - s_target) / eta_feed
    return FeedingModelParams(
        regime="ABE",
        p_sat_uW=REF_P_SAT_UW,
        k_exciton=k_exciton,
        k_charged=k_charged,
        eta_feed=eta_feed,
    )


def reference_qre_feeding(k_exciton=1000.0, s_anchor=REF_S_QRE_ANCHORS[0], eta_feed=0.6):
    """QRE feeding tuned so S hits ``s_anchor`` = (power_uW, S)."""
    power, s = s_anchor
    x = power / REF_P_SAT_UW
    sat = x / (1.0 + x)
    k_biexciton = s / (1.0 - s) / sat * k_exciton / (eta_feed * REF_P_SAT_UW)
    return FeedingModelParams(
        regime="QRE",
        p_sat_uW=REF_P_SAT_UW,
        k_exciton=k_exciton,
        k_biexciton=k_biexciton,
        eta_feed=eta_feed,
    )


def _reference_grid():
    return LambdaGrid(min_nm=933.3, max_nm=934.3, step_nm=0.005)


def reference_scan_config(name):
    """Shipped fixture configurations, keyed by fixture-set name.

    ``fig2-abe`` / ``fig2-qre``: temperature scans across the anticrossing
    at fixed pump power.  ``fig3-powerscan-abe`` / ``fig3-powerscan-qre``:
    on-resonance power scans; the QRE scan pins S(P) to the quoted anchor
    values via an :class:`SSchedule`.
    """
    poisson = NoiseModel(kind="poisson", scale=1.0)
    if name == "fig2-abe":
        return ScanConfig(
            system=reference_system(),
            feeding=reference_abe_feeding(),
            grid=_reference_grid(),
            temperatures_K=tuple(np.round(np.arange(14.4, 18.5, 0.5), 6)),
            temperature_map=TemperatureMap(slope_GHz_per_K=-25.0, t0_K=16.4),
            power_uW=1.0,
            noise=poisson,
            seed=42,
            label="fig2-abe",
        )
    if name == "fig2-qre":
        return ScanConfig(
            system=reference_system(),
            feeding=reference_qre_feeding(),
            grid=_reference_grid(),
            temperatures_K=tuple(np.round(np.arange(16.4, 20.5, 0.5), 6)),
            temperature_map=TemperatureMap(slope_GHz_per_K=-25.0, t0_K=18.4),
            power_uW=1.5,
            noise=poisson,
            seed=43,
            label="fig2-qre",
        )
    if name == "fig3-powerscan-abe":
        return ScanConfig(
            system=reference_system(),
            feeding=reference_abe_feeding(),
            grid=_reference_grid(),
            powers_uW=(0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0),
            noise=poisson,
            seed=44,
            label="fig3-powerscan-abe",
        )
    if name == "fig3-powerscan-qre":
        return ScanConfig(
            system=reference_system(),
            feeding=reference_qre_feeding(),
            grid=_reference_grid(),
            powers_uW=(1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0),
            noise=poisson,
            seed=45,
            s_schedule=SSchedule(anchors=REF_S_QRE_ANCHORS),
            label="fig3-powerscan-qre",
        )
    raise InputError(f"unknown reference scan {name!r}; known: {sorted(REFERENCE_SCANS)}")


REFERENCE_SCANS = ("fig2-abe", "fig2-qre", "fig3-powerscan-abe", "fig3-powerscan-qre")
