"""cavitypl: photoluminescence spectra of a strongly coupled QD-cavity system.

Simulates and fits the spectral triplet (lower/upper polariton plus bare
cavity emission), extracts vacuum-Rabi splitting and quality factors, and
analyzes the pump-power dependence of off-resonant cavity feeding under
above-band (ABE) and quasi-resonant (QRE) excitation.
"""

from .core import (
    PARAM_NAMES,
    CoupledSystemParams,
    FitResult,
    Spectrum,
    TripletParams,
    lorentzian,
    polariton_frequencies,
    polariton_splitting,
    polariton_wavelength_peaks,
    q_factor,
    triplet_components,
    triplet_intensity,
)
from .errors import ConfigError, DomainError, InputError, StateError
from .feeding import (
    FeedingModelParams,
    PowerSeries,
    TripletAmplitudes,
    analyze_s_trend,
    fit_power_law,
    fit_saturation,
    model_amplitudes,
    s_ratio,
    suppression,
)
from .fitting import (
    FitConfig,
    PeakGuess,
    detect_peaks,
    extract_observables,
    fit_doublet,
    fit_single_peak,
    fit_triplet,
    initial_guess_candidates,
    initial_triplet_guess,
)
from .simulator import (
    LambdaGrid,
    NoiseModel,
    ScanConfig,
    SSchedule,
    TemperatureMap,
    emit_fixture,
    g_for_observed_splitting,
    reference_abe_feeding,
    reference_qre_feeding,
    reference_scan_config,
    reference_system,
    synth_scan,
    synth_spectrum,
)
from .units import (
    C_NM_GHZ,
    frequency_to_wavelength,
    g_to_splitting,
    kappa_from_q,
    linewidth_ghz_to_nm,
    linewidth_nm_to_ghz,
    splitting_to_g,
    wavelength_to_frequency,
)

__version__ = "0.1.0"
