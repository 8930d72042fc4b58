"""File formats: spectrum CSV, config JSON, report JSON, fixture manifests.

The spectrum CSV is two columns (``wavelength_nm,intensity_counts``) with
a mandatory header and optional ``# key=value`` comment lines carrying
metadata.  Floats are written with ``repr`` so a write/read roundtrip is
bit-exact.  All files are written atomically (temp file + rename).
Configuration documents are validated strictly: unknown keys are errors.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import CoupledSystemParams, Spectrum
from .errors import ConfigError, DomainError, InputError
from .feeding import FeedingModelParams
from .simulator import (
    RNG_DESCRIPTION,
    LambdaGrid,
    NoiseModel,
    ScanConfig,
    ScanResult,
    SSchedule,
    TemperatureMap,
)

__all__ = [
    "read_spectrum_csv",
    "write_spectrum_csv",
    "write_text_atomic",
    "write_json_atomic",
    "canonical_json",
    "sha256_bytes",
    "sha256_file",
    "parse_scan_config",
    "scan_config_to_dict",
    "parse_fit_options",
    "write_scan_fixture",
    "write_plot_data_csv",
]

CSV_HEADER = "wavelength_nm,intensity_counts"
SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Low-level helpers
# ---------------------------------------------------------------------------

def _format_value(value):
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return repr(int(value))
    return repr(float(value))


def _parse_meta_value(raw):
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def write_text_atomic(text, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json_atomic(obj, path):
    return write_text_atomic(canonical_json(obj), path)


def sha256_bytes(data: bytes):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    return sha256_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Spectrum CSV
# ---------------------------------------------------------------------------

def spectrum_csv_text(spectrum: Spectrum):
    lines = []
    for key in sorted(spectrum.meta):
        value = spectrum.meta[key]
        text = _format_value(value)
        if "=" in key or "\n" in key or "\n" in text:
            raise InputError(f"metadata key/value not representable: {key!r}")
        lines.append(f"# {key}={text}")
    lines.append(CSV_HEADER)
    for wl, inten in zip(spectrum.wavelengths, spectrum.intensities):
        lines.append(f"{wl!r},{inten!r}")
    return "\n".join(lines) + "\n"


def write_spectrum_csv(spectrum: Spectrum, path):
    """Write a spectrum in the canonical CSV format (atomic, roundtrip-exact)."""
    return write_text_atomic(spectrum_csv_text(spectrum), path)


def read_spectrum_csv(path):
    """Parse a canonical spectrum CSV file.

    Raises :class:`InputError` with ``file:line:`` diagnostics on malformed
    content (bad header, non-numeric cells, non-finite or negative
    intensities, non-monotonic wavelengths).
    """
    path = Path(path)
    meta = {}
    wavelengths = []
    intensities = []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    raise InputError(f"{path}:{lineno}: comment metadata must be key=value")
                key, _, value = body.partition("=")
                meta[key.strip()] = _parse_meta_value(value.strip())
                continue
            if not header_seen:
                if line != CSV_HEADER:
                    raise InputError(
                        f"{path}:{lineno}: expected header {CSV_HEADER!r}, got {line!r}"
                    )
                header_seen = True
                continue
            cells = line.split(",")
            if len(cells) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 comma-separated values")
            try:
                wl, inten = float(cells[0]), float(cells[1])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
            if not (np.isfinite(wl) and np.isfinite(inten)):
                raise InputError(f"{path}:{lineno}: non-finite value")
            wavelengths.append(wl)
            intensities.append(inten)
    if not header_seen:
        raise InputError(f"{path}:1: empty file or missing header {CSV_HEADER!r}")
    try:
        return Spectrum(
            wavelengths=np.array(wavelengths),
            intensities=np.array(intensities),
            meta=meta,
        )
    except DomainError as exc:
        raise InputError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Strict config parsing
# ---------------------------------------------------------------------------

def _require_mapping(doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    return doc


def _check_keys(doc, allowed, required, path):
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")
    missing = sorted(set(required) - set(doc))
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {missing}")


def _number(doc, key, path):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    return float(value)


def _number_list(doc, key, path):
    value = doc[key]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}.{key}: expected a non-empty list of numbers")
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{path}.{key}[{i}]: expected a number, got {item!r}")
        out.append(float(item))
    return out


def _parse_system(doc, path):
    doc = _require_mapping(doc, path)
    keys = ("g_GHz", "kappa_GHz", "gamma_x_GHz", "lambda_cavity_nm", "delta_GHz")
    _check_keys(doc, keys, keys[:4], path)
    return CoupledSystemParams(
        g=_number(doc, "g_GHz", path),
        kappa=_number(doc, "kappa_GHz", path),
        gamma_x=_number(doc, "gamma_x_GHz", path),
        lambda_cavity=_number(doc, "lambda_cavity_nm", path),
        delta=_number(doc, "delta_GHz", path) if "delta_GHz" in doc else 0.0,
    )


def _parse_feeding(doc, path):
    doc = _require_mapping(doc, path)
    allowed = (
        "regime", "p_sat_uW", "k_exciton_counts_nm_per_uW",
        "k_charged_counts_nm_per_uW", "k_biexciton_counts_nm_per_uW2",
        "eta_feed_dimensionless", "asymmetry_dimensionless",
    )
    _check_keys(doc, allowed, ("regime", "p_sat_uW", "k_exciton_counts_nm_per_uW"), path)
    if not isinstance(doc["regime"], str):
        raise ConfigError(f"{path}.regime: expected a string")
    kwargs = dict(
        regime=doc["regime"],
        p_sat_uW=_number(doc, "p_sat_uW", path),
        k_exciton=_number(doc, "k_exciton_counts_nm_per_uW", path),
    )
    if "k_charged_counts_nm_per_uW" in doc:
        kwargs["k_charged"] = _number(doc, "k_charged_counts_nm_per_uW", path)
    if "k_biexciton_counts_nm_per_uW2" in doc:
        kwargs["k_biexciton"] = _number(doc, "k_biexciton_counts_nm_per_uW2", path)
    if "eta_feed_dimensionless" in doc:
        kwargs["eta_feed"] = _number(doc, "eta_feed_dimensionless", path)
    if "asymmetry_dimensionless" in doc:
        kwargs["asymmetry"] = _number(doc, "asymmetry_dimensionless", path)
    return FeedingModelParams(**kwargs)


def _parse_grid(doc, path):
    doc = _require_mapping(doc, path)
    keys = ("min_nm", "max_nm", "step_nm")
    _check_keys(doc, keys, keys, path)
    return LambdaGrid(*(_number(doc, k, path) for k in keys))


def _parse_noise(doc, path):
    doc = _require_mapping(doc, path)
    allowed = ("kind", "sigma_rel_dimensionless", "scale_counts_per_count")
    _check_keys(doc, allowed, ("kind",), path)
    kwargs = {"kind": doc["kind"]}
    if "sigma_rel_dimensionless" in doc:
        kwargs["sigma_rel"] = _number(doc, "sigma_rel_dimensionless", path)
    if "scale_counts_per_count" in doc:
        kwargs["scale"] = _number(doc, "scale_counts_per_count", path)
    return NoiseModel(**kwargs)


def _parse_scan_section(doc, path):
    doc = _require_mapping(doc, path)
    allowed = (
        "detunings_GHz", "temperatures_K", "temperature_map",
        "powers_uW", "power_uW", "s_schedule",
    )
    _check_keys(doc, allowed, (), path)
    out = {}
    if "detunings_GHz" in doc:
        out["detunings_GHz"] = tuple(_number_list(doc, "detunings_GHz", path))
    if "temperatures_K" in doc:
        out["temperatures_K"] = tuple(_number_list(doc, "temperatures_K", path))
    if "temperature_map" in doc:
        tm = _require_mapping(doc["temperature_map"], f"{path}.temperature_map")
        keys = ("slope_GHz_per_K", "t0_K")
        _check_keys(tm, keys, keys, f"{path}.temperature_map")
        out["temperature_map"] = TemperatureMap(
            slope_GHz_per_K=_number(tm, "slope_GHz_per_K", f"{path}.temperature_map"),
            t0_K=_number(tm, "t0_K", f"{path}.temperature_map"),
        )
    if "powers_uW" in doc:
        out["powers_uW"] = tuple(_number_list(doc, "powers_uW", path))
    if "power_uW" in doc:
        out["power_uW"] = _number(doc, "power_uW", path)
    if "s_schedule" in doc:
        sched = _require_mapping(doc["s_schedule"], f"{path}.s_schedule")
        _check_keys(sched, ("anchors_power_uW_s",), ("anchors_power_uW_s",), f"{path}.s_schedule")
        anchors = sched["anchors_power_uW_s"]
        if not isinstance(anchors, list) or any(
            not isinstance(a, list) or len(a) != 2 for a in anchors
        ):
            raise ConfigError(f"{path}.s_schedule.anchors_power_uW_s: expected [[power, S], ...]")
        out["s_schedule"] = SSchedule(anchors=tuple(tuple(map(float, a)) for a in anchors))
    return out


def parse_scan_config(doc):
    """Validate a scan/synth config document and build a :class:`ScanConfig`."""
    doc = _require_mapping(doc, "config")
    allowed = (
        "schema_version", "label", "seed", "system", "feeding",
        "grid", "scan", "noise", "instrument_fwhm_nm",
    )
    _check_keys(doc, allowed, ("schema_version", "system", "feeding", "grid", "scan"), "config")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"config.schema_version: expected {SCHEMA_VERSION}, got {doc['schema_version']!r}"
        )
    kwargs = dict(
        system=_parse_system(doc["system"], "config.system"),
        feeding=_parse_feeding(doc["feeding"], "config.feeding"),
        grid=_parse_grid(doc["grid"], "config.grid"),
    )
    kwargs.update(_parse_scan_section(doc["scan"], "config.scan"))
    if "noise" in doc:
        kwargs["noise"] = _parse_noise(doc["noise"], "config.noise")
    if "seed" in doc:
        seed = doc["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"config.seed: expected an integer, got {seed!r}")
        kwargs["seed"] = seed
    if "label" in doc:
        if not isinstance(doc["label"], str):
            raise ConfigError("config.label: expected a string")
        kwargs["label"] = doc["label"]
    if "instrument_fwhm_nm" in doc and doc["instrument_fwhm_nm"] is not None:
        kwargs["instrument_fwhm_nm"] = _number(doc, "instrument_fwhm_nm", "config")
    return ScanConfig(**kwargs)


def scan_config_to_dict(cfg: ScanConfig):
    """Inverse of :func:`parse_scan_config` (exact float round-trip)."""
    sys_doc = {
        "g_GHz": cfg.system.g,
        "kappa_GHz": cfg.system.kappa,
        "gamma_x_GHz": cfg.system.gamma_x,
        "lambda_cavity_nm": cfg.system.lambda_cavity,
        "delta_GHz": cfg.system.delta,
    }
    feed_doc = {
        "regime": cfg.feeding.regime,
        "p_sat_uW": cfg.feeding.p_sat_uW,
        "k_exciton_counts_nm_per_uW": cfg.feeding.k_exciton,
        "k_charged_counts_nm_per_uW": cfg.feeding.k_charged,
        "k_biexciton_counts_nm_per_uW2": cfg.feeding.k_biexciton,
        "eta_feed_dimensionless": cfg.feeding.eta_feed,
        "asymmetry_dimensionless": cfg.feeding.asymmetry,
    }
    grid_doc = {
        "min_nm": cfg.grid.min_nm,
        "max_nm": cfg.grid.max_nm,
        "step_nm": cfg.grid.step_nm,
    }
    scan_doc = {}
    if cfg.detunings_GHz is not None:
        scan_doc["detunings_GHz"] = list(cfg.detunings_GHz)
    if cfg.temperatures_K is not None:
        scan_doc["temperatures_K"] = list(cfg.temperatures_K)
        scan_doc["temperature_map"] = {
            "slope_GHz_per_K": cfg.temperature_map.slope_GHz_per_K,
            "t0_K": cfg.temperature_map.t0_K,
        }
    if cfg.powers_uW is not None:
        scan_doc["powers_uW"] = list(cfg.powers_uW)
    else:
        scan_doc["power_uW"] = cfg.power_uW
    if cfg.s_schedule is not None:
        scan_doc["s_schedule"] = {
            "anchors_power_uW_s": [list(a) for a in cfg.s_schedule.anchors]
        }
    noise_doc = {"kind": cfg.noise.kind}
    if cfg.noise.kind == "gaussian":
        noise_doc["sigma_rel_dimensionless"] = cfg.noise.sigma_rel
    if cfg.noise.kind == "poisson":
        noise_doc["scale_counts_per_count"] = cfg.noise.scale
    doc = {
        "schema_version": SCHEMA_VERSION,
        "label": cfg.label,
        "seed": cfg.seed,
        "system": sys_doc,
        "feeding": feed_doc,
        "grid": grid_doc,
        "scan": scan_doc,
        "noise": noise_doc,
    }
    if cfg.instrument_fwhm_nm is not None:
        doc["instrument_fwhm_nm"] = cfg.instrument_fwhm_nm
    return doc


_FIT_KEYS = (
    "max_iterations_count", "rel_tolerance_dimensionless", "damping_init_dimensionless",
    "weights", "fixed_params", "cavity_wavelength_nm", "no_bare", "smoothing_window_samples",
)


def parse_fit_options(doc):
    """Validate a fit config document.

    Returns a dict with ``fit_kwargs`` (for :class:`fitting.FitConfig`),
    ``cavity_wavelength_nm``, ``no_bare`` and ``smoothing_window``.
    """
    doc = _require_mapping(doc, "config")
    _check_keys(doc, ("schema_version", "fit"), ("schema_version",), "config")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"config.schema_version: expected {SCHEMA_VERSION}, got {doc['schema_version']!r}"
        )
    out = {
        "fit_kwargs": {},
        "cavity_wavelength_nm": None,
        "no_bare": False,
        "smoothing_window": 5,
    }
    if "fit" not in doc:
        return out
    fit = _require_mapping(doc["fit"], "config.fit")
    _check_keys(fit, _FIT_KEYS, (), "config.fit")
    if "max_iterations_count" in fit:
        out["fit_kwargs"]["max_iterations"] = int(_number(fit, "max_iterations_count", "config.fit"))
    if "rel_tolerance_dimensionless" in fit:
        out["fit_kwargs"]["rel_tolerance"] = _number(fit, "rel_tolerance_dimensionless", "config.fit")
    if "damping_init_dimensionless" in fit:
        out["fit_kwargs"]["damping_init"] = _number(fit, "damping_init_dimensionless", "config.fit")
    if "weights" in fit:
        if fit["weights"] not in ("none", "poisson"):
            raise ConfigError("config.fit.weights: expected 'none' or 'poisson'")
        out["fit_kwargs"]["weights"] = fit["weights"]
    if "fixed_params" in fit:
        fixed = _require_mapping(fit["fixed_params"], "config.fit.fixed_params")
        out["fit_kwargs"]["fixed_params"] = {
            k: _number(fixed, k, "config.fit.fixed_params") for k in fixed
        }
    if "cavity_wavelength_nm" in fit:
        out["cavity_wavelength_nm"] = _number(fit, "cavity_wavelength_nm", "config.fit")
    if "no_bare" in fit:
        if not isinstance(fit["no_bare"], bool):
            raise ConfigError("config.fit.no_bare: expected a boolean")
        out["no_bare"] = fit["no_bare"]
    if "smoothing_window_samples" in fit:
        out["smoothing_window"] = int(_number(fit, "smoothing_window_samples", "config.fit"))
    return out


# ---------------------------------------------------------------------------
# Fixture emission and plot data
# ---------------------------------------------------------------------------

def write_scan_fixture(result: ScanResult, out_dir):
    """Write every spectrum of a scan plus a manifest; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for point in result.points:
        name = f"spectrum_{point.index:03d}.csv"
        path = write_spectrum_csv(point.spectrum, out_dir / name)
        entry = {
            "name": name,
            "sha256": sha256_file(path),
            "scan_index": point.index,
            "detuning_GHz": point.detuning_GHz,
            "power_uW": point.power_uW,
        }
        if point.temperature_K is not None:
            entry["temperature_K"] = point.temperature_K
        files.append(entry)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "scan_fixture",
        "label": result.config.label,
        "seed": result.config.seed,
        "rng": RNG_DESCRIPTION,
        "config": scan_config_to_dict(result.config),
        "files": files,
    }
    return write_json_atomic(manifest, out_dir / "manifest.json")


def write_plot_data_csv(path, wavelengths, measured, fitted, components):
    """Plot-ready CSV: measured, fitted and per-peak model components."""
    names = list(components)
    header = "wavelength_nm,measured_counts,fitted_counts," + ",".join(
        f"{n}_counts" for n in names
    )
    lines = [header]
    cols = [wavelengths, measured, fitted] + [components[n] for n in names]
    for row in zip(*cols):
        lines.append(",".join(repr(float(v)) for v in row))
    return write_text_atomic("\n".join(lines) + "\n", path)
