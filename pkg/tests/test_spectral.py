import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsm_privacy.scene import AUTHORIZED, EAVESDROPPER, SceneConfig, scene_steering, synthesize_trace
from vsm_privacy.selection import enumerate_phase_set, generate_schedule, solve_mpv2
from vsm_privacy.spectral import (
    AUTHORIZED_COMPENSATED,
    InsufficientBandError,
    Spectrum,
    UnreliablePhaseError,
    compensate_schedule_phase,
    detect_vitals,
    extract_unwrapped_phase,
    pick_top_two_peaks,
    power_spectrum,
    write_peak_report,
    write_spectrum,
)

NOISELESS = SceneConfig(snr_db=math.inf)


def schedule_for(scene, scheme, seed=0):
    if scheme == "conventional":
        return generate_schedule("conventional", scene.geometry, scene.theta0_rad, None, scene.n_samples)
    ps = enumerate_phase_set(scene.geometry, scene.theta0_rad, math.radians(41), 12)
    return generate_schedule("mpv2", scene.geometry, scene.theta0_rad, solve_mpv2(ps), scene.n_samples, seed)


def demeaned(x):
    return x - x.mean()


# -- unwrap ---------------------------------------------------------------

def test_unwrap_constant():
    z = np.full(50, np.exp(1j * 0.7))
    np.testing.assert_allclose(extract_unwrapped_phase(z), 0.7, atol=1e-15)


def test_unwrap_single_crossing():
    out = extract_unwrapped_phase(np.exp(1j * np.array([3.1, -3.1])))
    assert out[0] == pytest.approx(3.1, abs=1e-12)
    assert out[1] == pytest.approx(3.1 + (2 * math.pi - 6.2), abs=1e-12)
    assert out[1] == pytest.approx(3.183, abs=1e-3)


def test_unwrap_errors():
    with pytest.raises(ValueError):
        extract_unwrapped_phase(np.array([1.0 + 0j]))
    with pytest.raises(UnreliablePhaseError):
        extract_unwrapped_phase(np.array([1.0, 0.0, 1.0], dtype=complex))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3.0, 3.0), min_size=1, max_size=200), st.floats(-50.0, 50.0))
def test_unwrap_recovers_smooth_sequence(steps, start):
    x = start + np.concatenate([[0.0], np.cumsum(steps)])
    out = extract_unwrapped_phase(np.exp(1j * x))
    expected = x - x[0] + np.angle(np.exp(1j * x[0]))
    np.testing.assert_allclose(out, expected, atol=1e-9)


def test_noiseless_conventional_matches_model(profile):
    from vsm_privacy.scene import mixed_trace_phase_model

    sched = schedule_for(NOISELESS, "conventional")
    model = mixed_trace_phase_model(NOISELESS, profile, sched)
    got = extract_unwrapped_phase(synthesize_trace(NOISELESS, profile, sched))
    offset = (got - model)[0]
    assert abs(offset / (2 * math.pi) - round(offset / (2 * math.pi))) < 1e-9
    np.testing.assert_allclose(got - model, offset, atol=1e-9)


# -- power spectrum -------------------------------------------------------

def test_pure_tone_single_bin():
    t = np.arange(2000) / 100.0
    spec = power_spectrum(np.sin(2 * np.pi * 0.4 * t), 100.0)
    assert spec.resolution_hz == pytest.approx(0.05)
    assert spec.freqs_hz[0] == pytest.approx(0.05)
    assert spec.freqs_hz[-1] == pytest.approx(50.0)
    assert spec.freqs_hz[np.argmax(spec.power)] == pytest.approx(0.4)
    others = np.delete(spec.power, np.argmax(spec.power))
    assert others.max() < 1e-12 * spec.power.max()


def test_constant_series_zero_spectrum():
    spec = power_spectrum(np.full(64, 3.3), 10.0)
    assert np.all(spec.power < 1e-20)


def test_nfft_padding_and_validation():
    spec = power_spectrum(np.arange(10.0), 1.0, nfft=32)
    assert spec.freqs_hz.shape == (16,)
    assert spec.resolution_hz == pytest.approx(1 / 32)
    with pytest.raises(ValueError):
        power_spectrum(np.arange(10.0), 1.0, nfft=8)


def test_two_tone_ordering(profile):
    from vsm_privacy.scene import mixed_trace_phase_model

    sched = schedule_for(NOISELESS, "conventional")
    phase = mixed_trace_phase_model(NOISELESS, profile, sched)
    report = pick_top_two_peaks(power_spectrum(phase, 100.0))
    assert report.top_freqs_hz == pytest.approx((0.4, 1.3))
    assert report.top_powers[0] > report.top_powers[1]


@pytest.mark.parametrize("n, nfft", [(100, 100), (101, 101), (77, 128)])
def test_parseval(n, nfft):
    x = np.random.default_rng(n).standard_normal(n)
    spec = power_spectrum(x, 1.0, nfft)
    # one-sided bins 1..nfft/2: double everything, Nyquist (even nfft) appears once
    two_sided = 2 * spec.power.sum() - (spec.power[-1] if nfft % 2 == 0 else 0.0)
    energy = np.sum((x - x.mean()) ** 2)
    assert two_sided == pytest.approx(nfft * energy, rel=1e-6)


def test_scaling_monotonicity():
    rng = np.random.default_rng(3)
    t = np.arange(500) / 25.0
    x = np.sin(2 * np.pi * 0.4 * t) + 0.4 * np.sin(2 * np.pi * 1.3 * t) + 0.1 * rng.standard_normal(500)
    a = power_spectrum(x, 25.0)
    b = power_spectrum(3.5 * x, 25.0)
    np.testing.assert_allclose(b.power, 3.5 ** 2 * a.power, rtol=1e-12)
    assert pick_top_two_peaks(a).top_freqs_hz == pick_top_two_peaks(b).top_freqs_hz


# -- peak picking ---------------------------------------------------------

def synthetic_spectrum(bins):
    freqs = np.arange(1, 41) * 0.05
    power = np.zeros_like(freqs)
    for f, p in bins.items():
        power[int(round(f / 0.05)) - 1] = p
    return Spectrum(freqs, power, 0.05)


def test_peaks_isolated():
    report = pick_top_two_peaks(synthetic_spectrum({0.4: 4.0, 1.3: 1.0}))
    assert report.top_freqs_hz == pytest.approx((0.4, 1.3))
    assert report.top_powers == (4.0, 1.0)
    assert report.search_band_hz == (0.1, 2.0)


def test_peaks_tie_break_lower_frequency():
    report = pick_top_two_peaks(synthetic_spectrum({0.5: 2.0, 0.3: 2.0}))
    assert report.top_freqs_hz == pytest.approx((0.3, 0.5))


def test_peaks_plateau_reports_lowest_bin():
    report = pick_top_two_peaks(synthetic_spectrum({0.6: 3.0, 0.65: 3.0, 1.5: 1.0}))
    assert report.top_freqs_hz == pytest.approx((0.6, 1.5))


def test_peaks_outside_band_ignored():
    report = pick_top_two_peaks(synthetic_spectrum({0.05: 100.0, 0.4: 2.0, 1.3: 1.0}))
    assert report.top_freqs_hz == pytest.approx((0.4, 1.3))


def test_peaks_fallback_to_bins_when_single_maximum():
    freqs = np.arange(1, 11) * 0.1
    report = pick_top_two_peaks(Spectrum(freqs, np.arange(10.0, 0.0, -1.0), 0.1), (0.1, 1.0))
    assert report.top_freqs_hz == pytest.approx((0.1, 0.2))


def test_insufficient_band():
    with pytest.raises(InsufficientBandError):
        pick_top_two_peaks(synthetic_spectrum({0.4: 1.0}), (0.41, 0.44))


# -- compensation ---------------------------------------------------------

def test_compensation_conventional_is_constant_rotation(profile):
    scene = SceneConfig(snr_db=10.0)
    sched = schedule_for(scene, "conventional")
    tr = synthesize_trace(scene, profile, sched, AUTHORIZED, 4)
    comp = compensate_schedule_phase(tr, sched, scene_steering(scene, sched))
    ratio = comp.samples / tr.samples
    np.testing.assert_allclose(ratio, ratio[0], atol=1e-12)
    assert abs(abs(ratio[0]) - 1.0) < 1e-12
    assert comp.receiver == AUTHORIZED_COMPENSATED


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_compensation_round_trip_mpv2(profile, seed):
    conv = schedule_for(NOISELESS, "conventional")
    mpv = schedule_for(NOISELESS, "mpv2", seed)
    ref = extract_unwrapped_phase(synthesize_trace(NOISELESS, profile, conv, AUTHORIZED))
    tr = synthesize_trace(NOISELESS, profile, mpv, AUTHORIZED)
    got = extract_unwrapped_phase(compensate_schedule_phase(tr, mpv, scene_steering(NOISELESS, mpv)))
    np.testing.assert_allclose(demeaned(got), demeaned(ref), atol=1e-9)


def test_compensation_requires_authorized(profile):
    sched = schedule_for(NOISELESS, "conventional")
    tr = synthesize_trace(NOISELESS, profile, sched, EAVESDROPPER)
    with pytest.raises(ValueError):
        compensate_schedule_phase(tr, sched, scene_steering(NOISELESS, sched))


def test_compensation_length_mismatch(profile):
    short = SceneConfig(snr_db=math.inf, duration_s=10.0)
    tr = synthesize_trace(short, profile, schedule_for(short, "conventional"), AUTHORIZED)
    sched = schedule_for(NOISELESS, "conventional")
    with pytest.raises(ValueError):
        compensate_schedule_phase(tr, sched, scene_steering(NOISELESS, sched))


# -- full pipeline --------------------------------------------------------

def test_detect_vitals_conventional_eavesdropper(scene, profile):
    sched = schedule_for(scene, "conventional")
    report = detect_vitals(synthesize_trace(scene, profile, sched, EAVESDROPPER, 11))
    assert sorted(report.top_freqs_hz) == pytest.approx([0.4, 1.3])


def test_detect_vitals_authorized_mpv2_noiseless(profile):
    sched = schedule_for(NOISELESS, "mpv2", 5)
    tr = synthesize_trace(NOISELESS, profile, sched, AUTHORIZED)
    report = detect_vitals(tr, sched, scene_steering(NOISELESS, sched))
    assert sorted(report.top_freqs_hz) == pytest.approx([0.4, 1.3])


def test_detect_vitals_needs_steering(profile):
    sched = schedule_for(NOISELESS, "mpv2")
    tr = synthesize_trace(NOISELESS, profile, sched, AUTHORIZED)
    with pytest.raises(ValueError):
        detect_vitals(tr, sched)


def test_exports(tmp_path):
    spec = synthetic_spectrum({0.4: 4.0, 1.3: 1.0})
    write_spectrum(spec, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "frequency_hz,power"
    assert len(lines) == 41
    assert [float(x) for x in lines[8].split(",")] == [0.4, 4.0]
    write_peak_report(pick_top_two_peaks(spec), tmp_path / "p.txt")
    record = dict(ln.split(" = ") for ln in (tmp_path / "p.txt").read_text().splitlines())
    assert float(record["peak1_freq_hz"]) == 0.4
    assert float(record["peak2_power"]) == 1.0
