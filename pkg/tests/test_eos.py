import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from nphase import DomainError, Eos, UnsupportedExponentError

LAWS = [
    Eos.power_law(1.0, 3.0),
    Eos.power_law(10.0, 1.4),
    Eos.power_law(5.0, 1.6),
    Eos.stiffened(1500.0, 1.0e3, 1.0e5),
    Eos.calibrated_power_law(1.4, 1.27, 1.0e5),
]


def test_pressure_examples():
    assert Eos.power_law(1.0, 3.0).pressure(2.5) == pytest.approx(15.625, rel=1e-15)
    assert Eos.power_law(10.0, 1.4).pressure(1.0) == 10.0
    assert Eos.stiffened(1500.0, 1.0e3, 1.0e5).pressure(1000.0) == pytest.approx(1.0e5, rel=1e-12)


def test_sound_speed_examples():
    assert Eos.power_law(1.0, 3.0).sound_speed(2.5) == pytest.approx(2.5 * math.sqrt(3.0), rel=1e-14)
    assert Eos.power_law(1.0, 3.0).sound_speed(2.5) == pytest.approx(4.330127, abs=1e-6)
    assert Eos.stiffened(1500.0, 1.0e3, 1.0e5).sound_speed(0.37) == 1500.0
    assert Eos.power_law(10.0, 1.4).sound_speed(1.0) == pytest.approx(math.sqrt(14.0), rel=1e-14)


def test_internal_energy_examples_without_gauge():
    assert Eos.power_law(1.0, 3.0, rho_ref=None).internal_energy(2.0) == pytest.approx(2.0, rel=1e-15)
    assert Eos.power_law(10.0, 1.4, rho_ref=None).internal_energy(1.0) == pytest.approx(25.0, rel=1e-14)


def test_energy_gauge_vanishes_at_reference_density():
    assert Eos.power_law(10.0, 1.4).internal_energy(1.0) == 0.0
    assert Eos.stiffened(1500.0, 1.0e3, 1.0e5).internal_energy(1.0e3) == pytest.approx(0.0, abs=1e-8)


def test_calibrated_power_law_hits_target():
    gas = Eos.calibrated_power_law(1.4, 1.27, 1.0e5)
    assert gas.pressure(1.27) == pytest.approx(1.0e5, rel=1e-14)
    assert gas.gamma == 1.4


def test_stiffened_reference_pressure_is_negative_for_water_like_data():
    assert Eos.stiffened(1500.0, 1.0e3, 1.0e5).p_ref == pytest.approx(1.0e5 - 1500.0**2 * 1.0e3)


@pytest.mark.parametrize("law", LAWS, ids=lambda e: e.describe())
def test_sound_speed_matches_finite_difference(law):
    for rho in np.logspace(-6, 6, 49):
        h = 1e-6 * rho
        dp = (law.pressure(rho + h) - law.pressure(rho - h)) / (2 * h)
        # the difference quotient itself carries roundoff ~ eps |p| / h
        noise = 4 * np.finfo(float).eps * abs(law.pressure(rho)) / h
        assert law.sound_speed(rho) ** 2 == pytest.approx(dp, rel=1e-6, abs=noise)


@pytest.mark.parametrize("law", LAWS, ids=lambda e: e.describe())
def test_pressure_strictly_increasing(law):
    p = law.pressure(np.logspace(-6, 6, 400))
    assert np.all(np.diff(p) > 0)


@pytest.mark.parametrize("law", LAWS, ids=lambda e: e.describe())
def test_energy_difference_is_integral_of_p_over_rho_squared(law):
    for r1, r2 in [(0.5, 2.0), (1.0, 1.3), (900.0, 1100.0), (0.01, 0.02)]:
        exact, _ = quad(lambda r: law.pressure(r) / r**2, r1, r2, epsabs=0, epsrel=1e-13)
        assert law.internal_energy(r2) - law.internal_energy(r1) == pytest.approx(exact, rel=1e-8)


@given(st.floats(0.1, 20.0), st.floats(1.05, 4.0), st.floats(1e-3, 1e3))
def test_energy_derivative_times_rho_squared_is_pressure(kappa, gamma, rho):
    law = Eos.power_law(kappa, gamma)
    h = 1e-5 * rho
    de = (law.internal_energy(rho + h) - law.internal_energy(rho - h)) / (2 * h)
    assert de * rho * rho == pytest.approx(law.pressure(rho), rel=1e-6)


def test_vectorized_evaluation_matches_scalar():
    law = LAWS[1]
    rho = np.array([0.5, 1.0, 2.0])
    np.testing.assert_array_equal(law.pressure(rho), [law.pressure(r) for r in rho])


@pytest.mark.parametrize("rho", [0.0, -1.0, float("nan")])
def test_non_positive_density_is_a_domain_error(rho):
    for law in LAWS:
        with pytest.raises(DomainError):
            law.pressure(rho)
        with pytest.raises(DomainError):
            law.sound_speed(rho)


def test_isothermal_energy_is_unsupported():
    with pytest.raises(UnsupportedExponentError):
        Eos.power_law(1.0, 1.0).internal_energy(1.0)


@pytest.mark.parametrize("args", [(0.0, 1.4), (1.0, -1.0)])
def test_invalid_power_law_parameters(args):
    with pytest.raises(DomainError):
        Eos.power_law(*args)


def test_eos_is_immutable():
    law = LAWS[0]
    with pytest.raises(AttributeError):
        law.p0 = 2.0
