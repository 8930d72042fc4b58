"""Command-line interface.

Subcommands: ``fit`` (triplet fit of spectrum files), ``power``
(pump-power series analysis of a directory), ``synth`` and ``scan``
(synthetic spectrum / fixture-set generation from a config file).

Exit codes are a stable contract: 0 success, 2 input or configuration
error, 3 fit non-convergence (a partial report is still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import dataio
from .core import PARAM_NAMES, q_factor, triplet_components, triplet_intensity
from .errors import ConfigError, DomainError, InputError, StateError
from .feeding import (
    PowerSeries,
    analyze_s_trend,
    fit_power_law,
    fit_saturation,
    suppression,
)
from .fitting import (
    FitConfig,
    extract_observables,
    fit_doublet,
    fit_triplet,
    initial_guess_candidates,
)
from .simulator import REF_INSTRUMENT_RESOLUTION_NM, synth_scan

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_NOT_CONVERGED = 3

_PARAM_UNITS = {"a": "counts_nm", "c": "nm", "w": "hwhm_nm"}


def _timestamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(args):
    import os

    if args.out_dir is not None:
        return Path(args.out_dir)
    env = os.environ.get("CAVITYPL_OUT_DIR")
    return Path(env) if env else Path.cwd()


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _parse_fix_flags(pairs):
    fixed = {}
    for pair in pairs or ():
        name, sep, value = pair.partition("=")
        if not sep:
            raise InputError(f"--fix expects name=value, got {pair!r}")
        if name not in PARAM_NAMES:
            raise InputError(f"--fix: unknown parameter {name!r}; known: {PARAM_NAMES}")
        try:
            fixed[name] = float(value)
        except ValueError:
            raise InputError(f"--fix {name}: {value!r} is not a number") from None
    return fixed


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _param_block(fit):
    block = {}
    stderr = fit.stderr()
    for i, name in enumerate(PARAM_NAMES):
        unit = _PARAM_UNITS[name[0]]
        block[f"{name}_{unit}"] = float(getattr(fit.params, name))
        if stderr is not None:
            block[f"{name}_stderr_{unit}"] = float(stderr[i])
    return block


def _fit_report(input_path, config_sha, spectrum, fit, weights):
    observables = None
    if fit.converged:
        p = fit.params
        observables = extract_observables(fit)
        observables["q_dimensionless"] = (
            q_factor(p.c_bare, 2.0 * p.w_bare) if p.a_bare > 0 else None
        )
    return {
        "schema_version": dataio.SCHEMA_VERSION,
        "kind": "fit_report",
        "input": {
            "file": str(input_path),
            "sha256": dataio.sha256_file(input_path),
            "config_sha256": config_sha,
        },
        "meta": dict(spectrum.meta),
        "fit": {
            "converged": fit.converged,
            "iterations_count": fit.iterations,
            "residual_norm_counts2": float(fit.residual_norm),
            "weights": weights,
            "message": fit.message,
        },
        "params": _param_block(fit),
        "observables": observables,
        "timestamp_utc": _timestamp(),
    }


def _fit_best(spectrum, options):
    """Restart loop over deterministic initial guesses; keep the best fit.

    The fitter itself is single-start; blended triplets are sensitive to
    the initial width scale, so the CLI tries each candidate and keeps the
    lowest residual norm (converged fits preferred).
    """
    cavity = options["cavity_wavelength_nm"]
    if cavity is None:
        cavity = options.get("_meta", {}).get("lambda_cavity_nm")
    candidates = initial_guess_candidates(
        spectrum, cavity_wavelength=cavity, smoothing_window=options["smoothing_window"]
    )
    cfg = FitConfig(**options["fit_kwargs"])
    fitter = fit_doublet if options.get("no_bare") else fit_triplet
    best = None
    for init in candidates:
        fit = fitter(spectrum, init, cfg)
        key = (not fit.converged, fit.residual_norm)
        if best is None or key < (not best.converged, best.residual_norm):
            best = fit
    return best


def _fit_one(path, options, out_dir, emit_plot_data):
    spectrum = dataio.read_spectrum_csv(path)
    options = dict(options)
    options["_meta"] = spectrum.meta
    fit = _fit_best(spectrum, options)
    cfg = FitConfig(**options["fit_kwargs"])

    report = _fit_report(path, options["config_sha256"], spectrum, fit, cfg.weights)
    stem = Path(path).stem
    report_path = dataio.write_json_atomic(report, out_dir / f"{stem}.report.json")
    if emit_plot_data:
        fitted = triplet_intensity(fit.params, spectrum.wavelengths)
        dataio.write_plot_data_csv(
            out_dir / f"{stem}.plotdata.csv",
            spectrum.wavelengths,
            spectrum.intensities,
            fitted,
            triplet_components(fit.params, spectrum.wavelengths),
        )
    return fit, report_path


def cmd_fit(args):
    options = {
        "fit_kwargs": {},
        "cavity_wavelength_nm": None,
        "no_bare": False,
        "smoothing_window": 5,
        "config_sha256": None,
    }
    if args.config:
        doc = _load_json(args.config)
        options.update(dataio.parse_fit_options(doc))
        options["config_sha256"] = dataio.sha256_file(args.config)
    if args.weights:
        options["fit_kwargs"]["weights"] = args.weights
    if args.no_bare:
        options["no_bare"] = True
    if args.cavity_wavelength is not None:
        options["cavity_wavelength_nm"] = args.cavity_wavelength
    fixed = dict(options["fit_kwargs"].get("fixed_params", {}))
    fixed.update(_parse_fix_flags(args.fix))
    if fixed:
        options["fit_kwargs"]["fixed_params"] = fixed

    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = [Path(p) for p in args.inputs]
    if len(inputs) > 1:
        with ThreadPoolExecutor() as pool:
            results = list(
                pool.map(lambda p: _fit_one(p, options, out_dir, not args.no_plot_data), inputs)
            )
    else:
        results = [_fit_one(inputs[0], options, out_dir, not args.no_plot_data)]

    status = EXIT_OK
    for (fit, report_path), path in zip(results, inputs):
        print(f"{path}: converged={fit.converged} report={report_path}")
        if not fit.converged:
            status = EXIT_NOT_CONVERGED
    return status


# ---------------------------------------------------------------------------
# power
# ---------------------------------------------------------------------------

def _series_from_spectra(paths, options):
    rows = []
    for path in paths:
        spectrum = dataio.read_spectrum_csv(path)
        power = spectrum.meta.get("power_uW")
        if power is None:
            raise InputError(f"{path}: missing power_uW metadata")
        rows.append((float(power), path, spectrum))
    rows.sort(key=lambda r: r[0])
    powers = [r[0] for r in rows]
    if len(set(powers)) != len(powers):
        raise InputError("duplicate pump powers in directory")
    regimes = {r[2].meta.get("regime") for r in rows} - {None}
    fits = []
    for _, path, spectrum in rows:
        per_file = dict(options)
        per_file["_meta"] = spectrum.meta
        fit = _fit_best(spectrum, per_file)
        fit.require_converged()
        fits.append(fit)
    stderr = np.array([f.stderr() for f in fits])
    series = PowerSeries(
        powers_uW=np.array(powers),
        a_lower=np.array([f.params.a_lower for f in fits]),
        a_upper=np.array([f.params.a_upper for f in fits]),
        a_bare=np.array([f.params.a_bare for f in fits]),
        stderr_lower=stderr[:, 0],
        stderr_upper=stderr[:, 1],
        stderr_bare=stderr[:, 2],
    )
    files = [{"name": r[1].name, "sha256": dataio.sha256_file(r[1])} for r in rows]
    return series, regimes, files


def _series_from_reports(paths):
    rows = []
    regimes = set()
    for path in paths:
        doc = _load_json(path)
        if doc.get("kind") != "fit_report":
            raise InputError(f"{path}: not a fit report")
        if not doc["fit"]["converged"]:
            raise InputError(f"{path}: fit did not converge; refit before power analysis")
        power = doc["meta"].get("power_uW")
        if power is None:
            raise InputError(f"{path}: missing power_uW metadata")
        regime = doc["meta"].get("regime")
        if regime is not None:
            regimes.add(regime)
        p = doc["params"]
        rows.append(
            (float(power), path, p["a_lower_counts_nm"], p["a_upper_counts_nm"], p["a_bare_counts_nm"])
        )
    rows.sort(key=lambda r: r[0])
    powers = [r[0] for r in rows]
    if len(set(powers)) != len(powers):
        raise InputError("duplicate pump powers in directory")
    series = PowerSeries(
        powers_uW=np.array(powers),
        a_lower=np.array([r[2] for r in rows]),
        a_upper=np.array([r[3] for r in rows]),
        a_bare=np.array([r[4] for r in rows]),
    )
    files = [{"name": r[1].name, "sha256": dataio.sha256_file(r[1])} for r in rows]
    return series, regimes, files


def _power_law_or_none(powers, amplitudes):
    try:
        fit = fit_power_law(powers, amplitudes)
    except (DomainError, InputError):
        return None
    return {
        "exponent_dimensionless": fit.exponent,
        "prefactor_counts_nm": fit.prefactor,
        "r_squared_dimensionless": fit.r_squared,
    }


def cmd_power(args):
    directory = Path(args.directory)
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")
    options = {
        "fit_kwargs": {},
        "cavity_wavelength_nm": args.cavity_wavelength,
        "smoothing_window": 5,
    }
    if args.weights:
        options["fit_kwargs"]["weights"] = args.weights

    csv_paths = sorted(directory.glob("*.csv"))
    csv_paths = [p for p in csv_paths if not p.name.endswith(".plotdata.csv")]
    report_paths = sorted(directory.glob("*.report.json"))
    if csv_paths:
        series, regimes, files = _series_from_spectra(csv_paths, options)
    elif report_paths:
        series, regimes, files = _series_from_reports(report_paths)
    else:
        raise InputError(f"{directory}: no spectrum CSV or fit report files found")

    if len(series) < 3:
        raise InputError(f"need >= 3 pump powers, got {len(series)}")
    if len(regimes) > 1 and args.regime is None:
        raise InputError(
            f"mixed regimes {sorted(regimes)} in one directory; pass --regime to override"
        )
    regime = args.regime or (regimes.pop() if regimes else None)

    sat = fit_saturation(series.powers_uW, series.polariton_sum())
    trend = analyze_s_trend(
        series, p_sat_uW=None if sat.at_upper_bound else sat.p_sat_uW
    )
    s_values = series.s_values()

    suppression_block = None
    if args.reference_s is not None:
        probe = args.probe_power if args.probe_power is not None else series.powers_uW[0]
        idx = int(np.argmin(np.abs(series.powers_uW - probe)))
        suppression_block = {
            "probe_power_uW": float(series.powers_uW[idx]),
            "s_probe_dimensionless": float(s_values[idx]),
            "reference_mean_s_dimensionless": float(args.reference_s),
            "suppression_dimensionless": suppression(s_values[idx], args.reference_s),
        }

    report = {
        "schema_version": dataio.SCHEMA_VERSION,
        "kind": "power_report",
        "regime": regime,
        "input": {"directory": str(directory), "files": files},
        "series": [
            {
                "power_uW": float(series.powers_uW[i]),
                "a_lower_counts_nm": float(series.a_lower[i]),
                "a_upper_counts_nm": float(series.a_upper[i]),
                "a_bare_counts_nm": float(series.a_bare[i]),
                "s_dimensionless": float(s_values[i]),
            }
            for i in range(len(series))
        ],
        "saturation": {
            "p_sat_uW": sat.p_sat_uW,
            "p_sat_stderr_uW": sat.p_sat_stderr_uW,
            "a_max_counts_nm": sat.a_max,
            "at_upper_bound": sat.at_upper_bound,
        },
        "s_trend": {
            "classification": trend.classification,
            "slope_per_uW": trend.slope_per_uW,
            "mean_s_dimensionless": trend.mean_s,
            "cutoff_uW": trend.cutoff_uW,
            "n_used_count": trend.n_used,
            "f_ratio_dimensionless": trend.diagnostics["f_ratio"],
        },
        "power_laws": {
            "a_lower": _power_law_or_none(series.powers_uW, series.a_lower),
            "a_upper": _power_law_or_none(series.powers_uW, series.a_upper),
            "a_bare": _power_law_or_none(series.powers_uW, series.a_bare),
            "polariton_sum": _power_law_or_none(series.powers_uW, series.polariton_sum()),
        },
        "suppression": suppression_block,
        "timestamp_utc": _timestamp(),
    }

    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = args.name or directory.name
    report_path = dataio.write_json_atomic(report, out_dir / f"{name}.power_report.json")
    table_lines = ["power_uW,a_lower_counts_nm,a_upper_counts_nm,a_bare_counts_nm,s_dimensionless"]
    for i in range(len(series)):
        table_lines.append(
            ",".join(
                repr(float(v))
                for v in (
                    series.powers_uW[i], series.a_lower[i], series.a_upper[i],
                    series.a_bare[i], s_values[i],
                )
            )
        )
    dataio.write_text_atomic("\n".join(table_lines) + "\n", out_dir / f"{name}.power_table.csv")
    print(f"{directory}: classification={trend.classification} report={report_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth / scan
# ---------------------------------------------------------------------------

def _run_scan(args, single_spectrum):
    doc = _load_json(args.config)
    cfg = dataio.parse_scan_config(doc)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.paper_instrument and cfg.grid.step_nm > REF_INSTRUMENT_RESOLUTION_NM:
        print(
            f"warning: grid step {cfg.grid.step_nm} nm exceeds the "
            f"{REF_INSTRUMENT_RESOLUTION_NM} nm instrument resolution",
            file=sys.stderr,
        )
    result = synth_scan(cfg)
    if single_spectrum and len(result) != 1:
        raise ConfigError(
            f"synth expects a single-point config, got {len(result)} scan points; use scan"
        )
    out_dir = _out_dir(args)
    target = out_dir / cfg.label if cfg.label else out_dir
    manifest_path = dataio.write_scan_fixture(result, target)
    print(manifest_path)
    return EXIT_OK


def cmd_synth(args):
    return _run_scan(args, single_spectrum=True)


def cmd_scan(args):
    return _run_scan(args, single_spectrum=False)


# ---------------------------------------------------------------------------
# parser / entry
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="cavitypl",
        description="Fit and simulate photoluminescence spectra of a strongly "
        "coupled quantum-dot / photonic-crystal-cavity system.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the triplet model to spectrum CSV file(s)")
    p_fit.add_argument("inputs", nargs="+", help="spectrum CSV file(s)")
    p_fit.add_argument("--config", help="fit config JSON")
    p_fit.add_argument("--out-dir", help="output directory (default: cwd or $CAVITYPL_OUT_DIR)")
    p_fit.add_argument("--no-bare", action="store_true", help="doublet fit (bare peak frozen at 0)")
    p_fit.add_argument("--fix", action="append", metavar="NAME=VALUE",
                       help="hold a parameter fixed, e.g. --fix c_bare=933.8")
    p_fit.add_argument("--weights", choices=("none", "poisson"))
    p_fit.add_argument("--cavity-wavelength", type=float, metavar="NM",
                       help="bare cavity wavelength used to seed blended fits")
    p_fit.add_argument("--no-plot-data", action="store_true", help="skip the plot-data CSV")
    p_fit.set_defaults(func=cmd_fit)

    p_pow = sub.add_parser("power", help="pump-power analysis of a directory of spectra or reports")
    p_pow.add_argument("directory")
    p_pow.add_argument("--regime", choices=("ABE", "QRE"), help="override mixed regime labels")
    p_pow.add_argument("--weights", choices=("none", "poisson"))
    p_pow.add_argument("--cavity-wavelength", type=float, metavar="NM")
    p_pow.add_argument("--reference-s", type=float, metavar="S",
                       help="reference mean S for the suppression figure")
    p_pow.add_argument("--probe-power", type=float, metavar="UW",
                       help="power at which suppression is evaluated (default: lowest)")
    p_pow.add_argument("--name", help="basename for the emitted report/table")
    p_pow.add_argument("--out-dir")
    p_pow.set_defaults(func=cmd_power)

    for cmd, helptext, func in (
        ("synth", "generate a single synthetic spectrum", cmd_synth),
        ("scan", "generate a fixture set from a scan config", cmd_scan),
    ):
        p = sub.add_parser(cmd, help=helptext)
        p.add_argument("--config", required=True, help="scan config JSON")
        p.add_argument("--out-dir")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--paper-instrument", action="store_true",
                       help="warn when the grid is coarser than the instrument resolution")
        p.set_defaults(func=func)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except StateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
