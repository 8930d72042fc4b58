import numpy as np
import pytest

from cavitypl import (
    DomainError,
    FeedingModelParams,
    InputError,
    PowerSeries,
    analyze_s_trend,
    fit_power_law,
    fit_saturation,
    model_amplitudes,
    s_ratio,
    suppression,
)

P_SAT = 8.5


def abe_params(**overrides):
    base = dict(regime="ABE", p_sat_uW=P_SAT, k_exciton=1000.0,
                k_charged=5000.0, eta_feed=0.6)
    base.update(overrides)
    return FeedingModelParams(**base)


def qre_params(**overrides):
    base = dict(regime="QRE", p_sat_uW=P_SAT, k_exciton=1000.0,
                k_biexciton=1069.5187165775403, eta_feed=0.6)
    base.update(overrides)
    return FeedingModelParams(**base)


# ---------------------------------------------------------------------------
# s_ratio
# ---------------------------------------------------------------------------

def test_s_ratio_values():
    assert s_ratio(1.0, 1.0, 0.0) == 0.0
    assert s_ratio(1.0, 1.0, 1.0) == pytest.approx(1.0 / 3.0, rel=1e-15)
    # bare amplitude three times the polariton total gives S = 0.75
    assert s_ratio(1.0, 1.0, 6.0) == pytest.approx(0.75, rel=1e-15)


def test_s_ratio_properties():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a, b, c = rng.uniform(0.01, 10.0, 3)
        s = s_ratio(a, b, c)
        assert 0.0 <= s <= 1.0
        assert s_ratio(a, b, c * 1.5) > s  # strictly increasing in a_bare
        k = rng.uniform(0.1, 100.0)
        assert s_ratio(k * a, k * b, k * c) == pytest.approx(s, rel=1e-12)


def test_s_ratio_errors():
    with pytest.raises(DomainError):
        s_ratio(0.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        s_ratio(-1.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# model_amplitudes
# ---------------------------------------------------------------------------

def test_model_params_regime_consistency():
    with pytest.raises(DomainError):
        FeedingModelParams(regime="ABE", p_sat_uW=8.5, k_exciton=1.0, k_biexciton=1.0)
    with pytest.raises(DomainError):
        FeedingModelParams(regime="QRE", p_sat_uW=8.5, k_exciton=1.0, k_charged=1.0)
    with pytest.raises(DomainError):
        FeedingModelParams(regime="XYZ", p_sat_uW=8.5, k_exciton=1.0)
    with pytest.raises(DomainError):
        abe_params(eta_feed=1.5)
    with pytest.raises(DomainError):
        abe_params(p_sat_uW=0.0)


def test_abe_s_is_exactly_power_independent():
    m = abe_params()
    powers = np.geomspace(0.05, 50.0, 25)
    s_values = []
    for p in powers:
        amps = model_amplitudes(m, p)
        s_values.append(s_ratio(amps.a_lower, amps.a_upper, amps.a_bare))
    s_values = np.array(s_values)
    # the saturation factor cancels algebraically
    assert np.max(np.abs(s_values - s_values[0])) < 1e-12
    assert s_values[0] == pytest.approx(0.75, rel=1e-12)


def test_qre_feeding_linear_in_power_below_saturation():
    m = qre_params()
    ratio_coeff = m.eta_feed * m.k_biexciton / m.k_exciton
    for p in (0.01, 0.05, 0.2):
        amps = model_amplitudes(m, p)
        ratio = amps.a_bare / amps.polariton_total
        # a_bare/a_polariton = coeff * P * (1 + O(P/P_sat))
        assert ratio == pytest.approx(ratio_coeff * p, rel=1.1 * p / P_SAT)


def test_saturation_plateaus():
    m = qre_params()
    amps = model_amplitudes(m, 1e9)
    assert amps.polariton_total == pytest.approx(m.k_exciton * P_SAT, rel=1e-6)
    assert amps.a_bare == pytest.approx(m.eta_feed * m.k_biexciton * P_SAT**2, rel=1e-6)


def test_amplitudes_monotone_in_power():
    for m in (abe_params(), qre_params()):
        powers = np.linspace(0.1, 50.0, 60)
        prev = model_amplitudes(m, powers[0])
        for p in powers[1:]:
            cur = model_amplitudes(m, p)
            assert cur.a_lower >= prev.a_lower
            assert cur.a_upper >= prev.a_upper
            assert cur.a_bare >= prev.a_bare
            prev = cur


def test_qre_s_over_p_nearly_constant_below_saturation():
    # weak feeding channel: S(P)/P varies by < 12% for P <= 0.1 * P_sat
    m = qre_params(k_biexciton=0.4 * 1000.0 / (0.6 * P_SAT))
    powers = np.linspace(0.01, 0.1, 20) * P_SAT
    s_over_p = []
    for p in powers:
        amps = model_amplitudes(m, p)
        s_over_p.append(s_ratio(amps.a_lower, amps.a_upper, amps.a_bare) / p)
    s_over_p = np.array(s_over_p)
    variation = (s_over_p.max() - s_over_p.min()) / s_over_p.max()
    assert variation < 0.12
    # analytic form: S/P = (w/p_sat) / (1 + (1+w)x)
    w = m.eta_feed * m.k_biexciton * P_SAT / m.k_exciton
    expected = (w / P_SAT) / (1.0 + (1.0 + w) * powers / P_SAT)
    assert np.allclose(s_over_p, expected, rtol=1e-12)


def test_asymmetry_split():
    m = abe_params(asymmetry=0.2)
    amps = model_amplitudes(m, 1.0)
    assert amps.a_lower / amps.polariton_total == pytest.approx(0.6, rel=1e-12)
    sym = model_amplitudes(abe_params(), 1.0)
    assert sym.a_lower == sym.a_upper


def test_model_amplitudes_rejects_bad_power():
    with pytest.raises(DomainError):
        model_amplitudes(abe_params(), 0.0)
    with pytest.raises(DomainError):
        model_amplitudes(abe_params(), -1.0)


# ---------------------------------------------------------------------------
# fit_power_law
# ---------------------------------------------------------------------------

def test_power_law_exact_quadratic():
    p = np.linspace(0.5, 4.0, 8)
    fit = fit_power_law(p, 3.0 * p**2)
    assert fit.exponent == pytest.approx(2.0, abs=1e-9)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_power_law_exact_linear():
    p = np.geomspace(0.1, 10.0, 12)
    fit = fit_power_law(p, 5.0 * p)
    assert fit.exponent == pytest.approx(1.0, abs=1e-9)


def test_power_law_qre_feeding_exponent_matches_oracle():
    # Saturation pulls the biexciton exponent below 2.  The oracle is a
    # direct log-log regression on the closed-form amplitude
    # a_bare ~ (x/(1+x))**2 with x = P/P_sat, computed independently.
    m = qre_params()
    powers = np.linspace(0.05, 0.3, 10) * P_SAT
    x = powers / P_SAT
    oracle_log_amp = np.log(m.eta_feed * m.k_biexciton * P_SAT**2 * (x / (1 + x)) ** 2)
    oracle_exponent = np.polyfit(np.log(powers), oracle_log_amp, 1)[0]

    amps = [model_amplitudes(m, p).a_bare for p in powers]
    fit = fit_power_law(powers, amps)
    assert fit.exponent == pytest.approx(oracle_exponent, abs=1e-12)
    # bracketed by the endpoint local exponents 2/(1+x)
    assert 2.0 / (1 + x[-1]) < fit.exponent < 2.0 / (1 + x[0])
    assert fit.exponent == pytest.approx(1.7587, abs=2e-3)


def test_power_law_errors():
    with pytest.raises(InputError):
        fit_power_law([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(DomainError):
        fit_power_law([1.0, 2.0, 3.0], [1.0, -2.0, 3.0])
    with pytest.raises(DomainError):
        fit_power_law([0.0, 2.0, 3.0], [1.0, 2.0, 3.0])


# ---------------------------------------------------------------------------
# fit_saturation
# ---------------------------------------------------------------------------

def test_saturation_noiseless_recovery():
    m = qre_params()
    powers = np.linspace(1.0, 20.0, 10)
    amps = [model_amplitudes(m, p).polariton_total for p in powers]
    fit = fit_saturation(powers, amps)
    assert fit.converged
    assert not fit.at_upper_bound
    assert abs(fit.p_sat_uW - P_SAT) < 0.01
    assert fit.a_max == pytest.approx(m.k_exciton * P_SAT, rel=1e-6)


def test_saturation_monte_carlo_two_percent_noise():
    # 2% relative Gaussian noise, 10 points over [1, 20] uW: the knee is
    # recovered within +-10% (weights matched to the relative noise model)
    powers = np.linspace(1.0, 20.0, 10)
    clean = 1000.0 * powers / (powers + P_SAT)
    rng = np.random.default_rng(1515)
    devs = []
    for _ in range(100):
        noisy = clean * (1.0 + 0.02 * rng.standard_normal(powers.size))
        fit = fit_saturation(powers, noisy, weights="relative")
        devs.append(abs(fit.p_sat_uW - P_SAT) / P_SAT)
    assert max(devs) < 0.10
    assert np.mean(devs) < 0.03


def test_saturation_unidentifiable_knee_sets_warning():
    powers = np.linspace(0.1, 0.5, 6)  # far below the knee
    amps = [model_amplitudes(qre_params(), p).polariton_total for p in powers]
    fit = fit_saturation(powers, amps)
    assert fit.at_upper_bound

    linear = fit_saturation([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])
    assert linear.at_upper_bound


def test_saturation_errors():
    with pytest.raises(InputError):
        fit_saturation([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(DomainError):
        fit_saturation([1, 2, 3, 4], [1, 2, -3, 4])
    with pytest.raises(DomainError):
        fit_saturation([1, 2, 3, 4], [1, 2, 3, 4], weights="bogus")


# ---------------------------------------------------------------------------
# analyze_s_trend
# ---------------------------------------------------------------------------

def series_from_s(powers, s_values, polariton=1000.0):
    powers = np.asarray(powers, dtype=float)
    s_values = np.asarray(s_values, dtype=float)
    a_bare = s_values / (1 - s_values) * polariton
    half = np.full_like(powers, polariton / 2)
    return PowerSeries(powers_uW=powers, a_lower=half, a_upper=half, a_bare=a_bare)


def test_trend_constant():
    series = series_from_s([1.0, 2.0, 3.0], [0.75, 0.75, 0.75])
    result = analyze_s_trend(series, saturation_cutoff_uW=10.0)
    assert result.classification == "constant"
    assert result.mean_s == pytest.approx(0.75, rel=1e-12)


def test_trend_linear_reference_values():
    # S rising linearly from 0.45 at 1.5 uW through 0.66 at 8 uW
    powers = np.array([1.5, 3.0, 4.5, 6.0, 8.0])
    s = 0.45 + (0.66 - 0.45) * (powers - 1.5) / 6.5
    result = analyze_s_trend(series_from_s(powers, s), saturation_cutoff_uW=10.0)
    assert result.classification == "linear"
    assert result.slope_per_uW == pytest.approx(0.21 / 6.5, rel=1e-9)


def test_trend_zigzag_is_other():
    series = series_from_s([1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                           [0.3, 0.7, 0.3, 0.7, 0.3, 0.7])
    result = analyze_s_trend(series, saturation_cutoff_uW=10.0)
    assert result.classification == "other"


def test_trend_constant_with_small_noise():
    rng = np.random.default_rng(77)
    powers = np.linspace(0.5, 3.0, 8)
    s = 0.75 + rng.normal(0.0, 0.004, powers.size)
    result = analyze_s_trend(series_from_s(powers, s), saturation_cutoff_uW=10.0)
    assert result.classification == "constant"
    assert result.mean_s == pytest.approx(0.75, abs=0.01)


def test_trend_cutoff_excludes_saturated_points():
    powers = np.array([1.0, 2.0, 3.0, 4.0, 9.0, 12.0])
    s = np.array([0.40, 0.45, 0.50, 0.55, 0.80, 0.81])
    result = analyze_s_trend(series_from_s(powers, s), p_sat_uW=P_SAT)
    assert result.cutoff_uW == pytest.approx(0.9 * P_SAT)
    assert result.n_used == 4


def test_trend_insufficient_points_below_cutoff():
    series = series_from_s([1.0, 2.0, 9.0], [0.4, 0.5, 0.8])
    with pytest.raises(InputError):
        analyze_s_trend(series, saturation_cutoff_uW=2.5)


def test_power_series_validation():
    with pytest.raises(DomainError):
        PowerSeries(powers_uW=np.array([2.0, 1.0, 3.0]),
                    a_lower=np.ones(3), a_upper=np.ones(3), a_bare=np.ones(3))
    with pytest.raises(DomainError):
        PowerSeries(powers_uW=np.array([0.0, 1.0, 2.0]),
                    a_lower=np.ones(3), a_upper=np.ones(3), a_bare=np.ones(3))


# ---------------------------------------------------------------------------
# suppression
# ---------------------------------------------------------------------------

def test_suppression_reference_forty_percent():
    assert suppression(0.45, 0.75) == pytest.approx(0.40, abs=1e-12)


def test_suppression_errors():
    with pytest.raises(DomainError):
        suppression(0.45, 0.0)
    with pytest.raises(DomainError):
        suppression(1.2, 0.75)
