import numpy as np
import pytest

from cavitypl import (
    C_NM_GHZ,
    DomainError,
    frequency_to_wavelength,
    g_to_splitting,
    kappa_from_q,
    linewidth_ghz_to_nm,
    linewidth_nm_to_ghz,
    splitting_to_g,
    wavelength_to_frequency,
)


def test_speed_of_light_constant():
    assert C_NM_GHZ == 2.99792458e8


def test_wavelength_frequency_roundtrip():
    for lam in (877.0, 933.8, 933.9, 960.0):
        assert frequency_to_wavelength(wavelength_to_frequency(lam)) == pytest.approx(lam, rel=1e-14)


def test_splitting_to_g_reference_value():
    # 0.11 nm splitting at 933.8 nm corresponds to g = 18.9 GHz
    assert splitting_to_g(0.11, 933.8) == pytest.approx(18.9, abs=0.1)


def test_splitting_to_g_zero():
    assert splitting_to_g(0.0, 933.8) == 0.0


@pytest.mark.parametrize("x", [0.01, 0.11, 0.5, 2.0])
@pytest.mark.parametrize("lam0", [877.0, 933.8, 933.9])
def test_splitting_roundtrip_identity(x, lam0):
    assert g_to_splitting(splitting_to_g(x, lam0), lam0) == pytest.approx(x, rel=1e-12)
    g = splitting_to_g(x, lam0)
    assert splitting_to_g(g_to_splitting(g, lam0), lam0) == pytest.approx(g, rel=1e-12)


def test_linewidth_conversion_roundtrip():
    dnu = linewidth_nm_to_ghz(0.07, 933.9)
    assert linewidth_ghz_to_nm(dnu, 933.9) == pytest.approx(0.07, rel=1e-14)


def test_kappa_from_reference_q():
    # Q = 13,300 at 933.8-933.9 nm implies a cavity decay rate near 24.1 GHz
    assert kappa_from_q(933.9, 13300) == pytest.approx(24.1, abs=0.1)
    assert kappa_from_q(933.8, 13300) == pytest.approx(24.1, abs=0.1)


def test_domain_errors():
    with pytest.raises(DomainError):
        splitting_to_g(0.11, 0.0)
    with pytest.raises(DomainError):
        splitting_to_g(-0.1, 933.8)
    with pytest.raises(DomainError):
        g_to_splitting(-1.0, 933.8)
    with pytest.raises(DomainError):
        wavelength_to_frequency(-5.0)
    with pytest.raises(DomainError):
        linewidth_nm_to_ghz(0.1, -1.0)
