import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vsm_privacy.array_model import (
    SPEED_OF_LIGHT,
    ActivationVector,
    ArrayGeometry,
    DegenerateConfigurationError,
    array_response,
    full_array_closed_form,
    principal_angle,
    steering_vector,
)

angles = st.floats(min_value=0.0, max_value=math.pi, allow_nan=False)


def test_geometry_wavelength():
    g = ArrayGeometry(16, 2.2e9)
    assert g.wavelength_m * g.carrier_freq_hz == pytest.approx(SPEED_OF_LIGHT, rel=1e-6)
    assert g.element_spacing_wavelengths == 0.5
    with pytest.raises(ValueError):
        ArrayGeometry(1)


def test_activation_vector_roundtrip():
    b = ActivationVector.from_string("1011")
    assert b.active_count == 3
    assert b.bitmask == 0b1101
    assert ActivationVector.from_bitmask(b.bitmask, 4) == b
    with pytest.raises(ValueError):
        ActivationVector((False, False))


def test_steering_aligned_is_all_ones():
    f = steering_vector(ArrayGeometry(4), 0.7, 0.7)
    np.testing.assert_allclose(f, np.ones(4), atol=1e-15)


def test_steering_two_elements_opposite():
    f = steering_vector(ArrayGeometry(2), math.pi / 2, 0.0)
    np.testing.assert_allclose(f, [1, -1], atol=1e-15)


def test_steering_default_geometry_elementwise():
    th0, thc = math.radians(30), math.radians(41)
    delta = math.cos(th0) - math.cos(thc)
    expected = [cmath.exp(1j * math.pi * k * delta) for k in range(16)]
    np.testing.assert_allclose(steering_vector(ArrayGeometry(16), th0, thc), expected, atol=1e-12)


@pytest.mark.parametrize("bad", [-0.1, math.pi + 1e-6, float("nan")])
def test_steering_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        steering_vector(ArrayGeometry(4), bad, 0.0)


def test_response_all_on_aligned():
    g = ArrayGeometry(8)
    r = array_response(ActivationVector.all_on(8), steering_vector(g, 1.0, 1.0))
    assert r.amplitude == pytest.approx(8)
    assert r.phase_rad == pytest.approx(0, abs=1e-12)


def test_response_reference_element_only():
    g = ArrayGeometry(8)
    b = ActivationVector.from_bitmask(1, 8)
    r = array_response(b, steering_vector(g, 0.3, 2.0))
    assert (r.amplitude, r.phase_rad) == (pytest.approx(1), pytest.approx(0, abs=1e-15))


def test_response_degenerate_cancellation():
    f = steering_vector(ArrayGeometry(2), math.pi / 2, 0.0)
    with pytest.raises(DegenerateConfigurationError):
        array_response(ActivationVector.all_on(2), f)


def test_response_length_mismatch():
    with pytest.raises(ValueError):
        array_response(ActivationVector.all_on(3), np.ones(4, dtype=complex))


def test_closed_form_limit():
    r = full_array_closed_form(ArrayGeometry(16), 0.5, 0.5)
    assert r.amplitude == 16.0
    assert r.phase_rad == 0.0


def test_closed_form_default_geometry_matches_sum():
    g = ArrayGeometry(16)
    th0, thc = math.radians(30), math.radians(41)
    cf = full_array_closed_form(g, th0, thc)
    direct = array_response(ActivationVector.all_on(16), steering_vector(g, th0, thc))
    assert abs(cf.complex_value - direct.complex_value) < 1e-10


def test_closed_form_kernel_zero():
    r = full_array_closed_form(ArrayGeometry(2), math.pi / 2, 0.0)
    assert r.amplitude < 1e-12


def test_principal_angle_interval():
    assert principal_angle(-math.pi) == math.pi
    assert principal_angle(3 * math.pi) == pytest.approx(math.pi)
    np.testing.assert_allclose(principal_angle([0.0, 2 * math.pi + 0.1]), [0.0, 0.1], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(2, 12), data=st.data(), th0=angles, thc=angles)
def test_response_amplitude_bounded_by_active(n, data, th0, thc):
    mask = data.draw(st.integers(1, 2**n - 1))
    b = ActivationVector.from_bitmask(mask, n)
    f = steering_vector(ArrayGeometry(n), th0, thc)
    assert np.all(np.abs(np.abs(f) - 1) < 1e-12)
    try:
        r = array_response(b, f)
    except DegenerateConfigurationError:
        return
    assert r.amplitude <= b.active_count + 1e-9
    assert -math.pi < r.phase_rad <= math.pi
    # equality iff the selected phasors coincide modulo 2 pi
    sel = np.angle(f[b.as_array()])
    aligned = np.all(np.abs(np.exp(1j * (sel - sel[0])) - 1) < 1e-9)
    if aligned:
        assert r.amplitude == pytest.approx(b.active_count, abs=1e-9)
    else:
        assert r.amplitude < b.active_count - 1e-12
