"""Mixed-baseband CW radar echoes of a breathing, beating chest.

The simulation stays at mixed baseband: each sample is the array gain
``b^T f`` of the active subset times the round-trip vital-sign phase, with
complex white noise added after mixing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .array_model import (
    EPS_AMP,
    SPEED_OF_LIGHT,
    ArrayGeometry,
    DegenerateConfigurationError,
    masked_sums,
    steering_vector,
)
from .selection import SelectionSchedule

EAVESDROPPER = "eavesdropper"
AUTHORIZED = "authorized"
AUTHORIZED_COMPENSATED = "authorized-compensated"
RECEIVERS = (EAVESDROPPER, AUTHORIZED)

HEART_BAND_HZ = (0.8, 2.0)
BREATH_BAND_HZ = (0.1, 0.5)


@dataclass(frozen=True)
class VitalSignProfile:
    heart_amp_m: float = 0.5e-3
    heart_freq_hz: float = 1.3
    heart_phase_rad: float = 0.0
    breath_amp_m: float = 1e-3
    breath_freq_hz: float = 0.4
    breath_phase_rad: float = 0.0
    check_ranges: bool = True

    def __post_init__(self):
        if self.heart_amp_m < 0 or self.breath_amp_m < 0:
            raise ValueError("vital-sign amplitudes must be non-negative")
        if self.check_ranges:
            lo, hi = HEART_BAND_HZ
            if not lo <= self.heart_freq_hz <= hi:
                raise ValueError(f"heart rate {self.heart_freq_hz} Hz outside [{lo}, {hi}] Hz")
            lo, hi = BREATH_BAND_HZ
            if not lo <= self.breath_freq_hz <= hi:
                raise ValueError(f"breathing rate {self.breath_freq_hz} Hz outside [{lo}, {hi}] Hz")


@dataclass(frozen=True)
class SceneConfig:
    geometry: ArrayGeometry = ArrayGeometry()
    theta0_rad: float = math.radians(30.0)
    range_auth_m: float = 1.0
    range_eaves_m: float = 1.0
    reflect_coeff: float = 1.0
    tx_amp: float = 1.0
    tx_phase_rad: float = 0.0
    sample_rate_hz: float = 100.0
    duration_s: float = 20.0
    snr_db: float = 10.0

    def __post_init__(self):
        if self.range_auth_m <= 0 or self.range_eaves_m <= 0:
            raise ValueError("ranges must be positive")
        if not 0.0 <= self.theta0_rad <= math.pi:
            raise ValueError("theta0_rad must lie in [0, pi]")
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ValueError("sample_rate_hz and duration_s must be positive")
        s = self.duration_s * self.sample_rate_hz
        if abs(s - round(s)) > 1e-9 * max(1.0, s) or round(s) < 2:
            raise ValueError(f"duration_s * sample_rate_hz = {s} must be an integer >= 2")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    @property
    def times_s(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz

    def with_snr(self, snr_db: float) -> "SceneConfig":
        return replace(self, snr_db=snr_db)

    def check_profile(self, v: VitalSignProfile) -> None:
        top = max(v.heart_freq_hz, v.breath_freq_hz)
        if self.sample_rate_hz <= 2 * top:
            raise ValueError(f"sample rate {self.sample_rate_hz} Hz does not exceed twice {top} Hz")

    def static_phasor(self, receiver: str) -> complex:
        """Constant range and transmit phase term of the mixed signal."""
        fc = self.geometry.carrier_freq_hz
        if receiver == EAVESDROPPER:
            path = self.range_auth_m + self.range_eaves_m
        elif receiver == AUTHORIZED:
            path = 2.0 * self.range_auth_m
        else:
            raise ValueError(f"unknown receiver {receiver!r}; expected one of {RECEIVERS}")
        return complex(np.exp(-1j * 2 * np.pi * fc * path / SPEED_OF_LIGHT + 1j * self.tx_phase_rad))


@dataclass(frozen=True)
class BasebandTrace:
    samples: np.ndarray
    sample_rate_hz: float
    receiver: str
    snr_db: float
    rng_seed: int | None

    def __len__(self) -> int:
        return int(self.samples.shape[0])


def chest_displacement(t_s, v: VitalSignProfile):
    """Two-tone chest motion in meters."""
    t = np.asarray(t_s, dtype=float)
    r = (v.heart_amp_m * np.sin(2 * np.pi * v.heart_freq_hz * t + v.heart_phase_rad)
         + v.breath_amp_m * np.sin(2 * np.pi * v.breath_freq_hz * t + v.breath_phase_rad))
    return float(r) if r.ndim == 0 else r


def schedule_gains(schedule: SelectionSchedule, steering: np.ndarray) -> np.ndarray:
    """Complex array gain ``b^T f`` for every schedule sample."""
    z = masked_sums(schedule.masks, steering)
    bad = np.flatnonzero(np.abs(z) < EPS_AMP)
    if bad.size:
        raise DegenerateConfigurationError(
            f"schedule sample {int(bad[0])} selects a degenerate configuration"
        )
    return z


def _check_lengths(scene: SceneConfig, schedule: SelectionSchedule) -> None:
    if len(schedule) != scene.n_samples:
        raise ValueError(f"schedule has {len(schedule)} samples, scene needs {scene.n_samples}")
    if schedule.n_antennas != scene.geometry.n_antennas:
        raise ValueError("schedule and scene disagree on the number of antennas")


def scene_steering(scene: SceneConfig, schedule: SelectionSchedule) -> np.ndarray:
    return steering_vector(scene.geometry, scene.theta0_rad, schedule.theta_c_rad)


def synthesize_trace(
    scene: SceneConfig,
    v: VitalSignProfile,
    schedule: SelectionSchedule,
    receiver: str = EAVESDROPPER,
    rng_seed: int | None = 0,
) -> BasebandTrace:
    """Noisy mixed-baseband samples at one receiver.

    Noise is circular complex Gaussian with variance equal to the mean
    noiseless sample power divided by the linear SNR. ``snr_db = inf``
    yields the noiseless trace.
    """
    _check_lengths(scene, schedule)
    scene.check_profile(v)
    gains = schedule_gains(schedule, scene_steering(scene, schedule))
    r = chest_displacement(scene.times_s, v)
    k = 4 * np.pi / scene.geometry.wavelength_m
    clean = (scene.reflect_coeff * scene.tx_amp * scene.static_phasor(receiver)
             * gains * np.exp(-1j * k * r))
    if math.isinf(scene.snr_db) and scene.snr_db > 0:
        samples = clean
    else:
        power = float(np.mean(np.abs(clean) ** 2))
        noise_var = power / 10.0 ** (scene.snr_db / 10.0)
        rng = np.random.default_rng(rng_seed)
        noise = rng.standard_normal((2, clean.shape[0]))
        samples = clean + math.sqrt(noise_var / 2.0) * (noise[0] + 1j * noise[1])
    samples.setflags(write=False)
    return BasebandTrace(samples, scene.sample_rate_hz, receiver, float(scene.snr_db), rng_seed)


def mixed_trace_phase_model(
    scene: SceneConfig,
    v: VitalSignProfile,
    schedule: SelectionSchedule,
    receiver: str = EAVESDROPPER,
) -> np.ndarray:
    """Exact noiseless phase: ``-(4 pi / lambda) R(t) + phi_p(t) + const``."""
    _check_lengths(scene, schedule)
    gains = schedule_gains(schedule, scene_steering(scene, schedule))
    k = 4 * np.pi / scene.geometry.wavelength_m
    const = float(np.angle(scene.static_phasor(receiver)))
    return const + np.angle(gains) - k * chest_displacement(scene.times_s, v)


def write_trace(trace: BasebandTrace, path, scene: SceneConfig | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(f"# receiver = {trace.receiver}\n")
        fh.write(f"# sample_rate_hz = {trace.sample_rate_hz!r}\n")
        fh.write(f"# snr_db = {trace.snr_db!r}\n")
        fh.write(f"# rng_seed = {trace.rng_seed}\n")
        if scene is not None:
            g = scene.geometry
            for key, value in (
                ("n_antennas", g.n_antennas), ("carrier_freq_hz", g.carrier_freq_hz),
                ("theta0_rad", scene.theta0_rad), ("range_auth_m", scene.range_auth_m),
                ("range_eaves_m", scene.range_eaves_m), ("reflect_coeff", scene.reflect_coeff),
                ("tx_amp", scene.tx_amp), ("tx_phase_rad", scene.tx_phase_rad),
                ("duration_s", scene.duration_s),
            ):
                fh.write(f"# {key} = {value}\n")
        fh.write("sample_index,t_s,real,imag\n")
        fs = trace.sample_rate_hz
        for i, z in enumerate(trace.samples):
            fh.write(f"{i},{i / fs!r},{float(z.real)!r},{float(z.imag)!r}\n")
