"""Phase-based vital-sign extraction: unwrap, demean, DFT, pick two peaks."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .array_model import EPS_AMP
from .scene import AUTHORIZED, AUTHORIZED_COMPENSATED, BasebandTrace, schedule_gains
from .selection import SelectionSchedule

DEFAULT_BAND_HZ = (0.1, 2.0)


class UnreliablePhaseError(ValueError):
    pass


class InsufficientBandError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrum:
    freqs_hz: np.ndarray
    power: np.ndarray
    resolution_hz: float


@dataclass(frozen=True)
class PeakReport:
    top_freqs_hz: tuple[float, float]
    top_powers: tuple[float, float]
    search_band_hz: tuple[float, float]


def extract_unwrapped_phase(trace: BasebandTrace | np.ndarray) -> np.ndarray:
    z = trace.samples if isinstance(trace, BasebandTrace) else np.asarray(trace)
    if z.shape[0] < 2:
        raise ValueError("need at least two samples to unwrap")
    weak = np.flatnonzero(np.abs(z) < EPS_AMP)
    if weak.size:
        raise UnreliablePhaseError(f"sample {int(weak[0])} is too weak to carry a phase")
    wrapped = np.angle(z)
    step = np.diff(wrapped)
    # push each increment into (-pi, pi]
    step = step - 2 * np.pi * np.ceil((step - np.pi) / (2 * np.pi))
    out = np.empty_like(wrapped)
    out[0] = wrapped[0]
    out[1:] = wrapped[0] + np.cumsum(step)
    return out


def power_spectrum(series, f_s: float, nfft: int | None = None) -> Spectrum:
    """One-sided |DFT|^2 of the demeaned, zero-padded series; DC dropped."""
    x = np.asarray(series, dtype=float)
    nfft = x.shape[0] if nfft is None else int(nfft)
    if nfft < x.shape[0]:
        raise ValueError(f"nfft={nfft} shorter than the series ({x.shape[0]})")
    spec = np.abs(np.fft.rfft(x - x.mean(), n=nfft)) ** 2
    k = np.arange(1, nfft // 2 + 1)
    return Spectrum(k * (f_s / nfft), spec[1:nfft // 2 + 1], f_s / nfft)


def _local_maxima(p: np.ndarray) -> np.ndarray:
    """Indices of strict peaks; a flat-topped peak reports its first bin."""
    n = p.shape[0]
    out = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and p[j + 1] == p[i]:
            j += 1
        left_ok = i == 0 or p[i - 1] < p[i]
        right_ok = j == n - 1 or p[j + 1] < p[i]
        if left_ok and right_ok:
            out.append(i)
        i = j + 1
    return np.array(out, dtype=int)


def pick_top_two_peaks(spec: Spectrum, band_hz=DEFAULT_BAND_HZ) -> PeakReport:
    low, high = band_hz
    tol = 1e-9 * spec.resolution_hz
    in_band = (spec.freqs_hz >= low - tol) & (spec.freqs_hz <= high + tol)
    if in_band.sum() < 2:
        raise InsufficientBandError(f"fewer than two spectrum bins inside {band_hz} Hz")
    peaks = [i for i in _local_maxima(spec.power) if in_band[i]]
    # highest power first, lower frequency on ties
    peaks.sort(key=lambda i: (-spec.power[i], spec.freqs_hz[i]))
    if len(peaks) < 2:
        rest = [i for i in np.flatnonzero(in_band) if i not in peaks]
        rest.sort(key=lambda i: (-spec.power[i], spec.freqs_hz[i]))
        peaks += rest[: 2 - len(peaks)]
    a, b = peaks[:2]
    return PeakReport(
        (float(spec.freqs_hz[a]), float(spec.freqs_hz[b])),
        (float(spec.power[a]), float(spec.power[b])),
        (float(low), float(high)),
    )


def compensate_schedule_phase(
    trace: BasebandTrace, schedule: SelectionSchedule, steering: np.ndarray
) -> BasebandTrace:
    """Undo the per-sample array phase the authorized receiver knows about."""
    if trace.receiver != AUTHORIZED:
        raise ValueError(f"only an {AUTHORIZED!r} trace can be compensated, got {trace.receiver!r}")
    if len(schedule) != len(trace):
        raise ValueError(f"schedule has {len(schedule)} samples, trace has {len(trace)}")
    gains = schedule_gains(schedule, np.asarray(steering))
    samples = trace.samples * np.exp(-1j * np.angle(gains))
    samples.setflags(write=False)
    return replace(trace, samples=samples, receiver=AUTHORIZED_COMPENSATED)


def detect_vitals(
    trace: BasebandTrace,
    schedule: SelectionSchedule | None = None,
    steering: np.ndarray | None = None,
    band_hz=DEFAULT_BAND_HZ,
    nfft: int | None = None,
) -> PeakReport:
    """Full attack (no schedule) or authorized recovery (schedule given)."""
    if schedule is not None:
        if steering is None:
            raise ValueError("compensation needs the steering vector used by the schedule")
        trace = compensate_schedule_phase(trace, schedule, steering)
    phase = extract_unwrapped_phase(trace)
    return pick_top_two_peaks(power_spectrum(phase, trace.sample_rate_hz, nfft), band_hz)


def write_spectrum(spec: Spectrum, path) -> None:
    with open(path, "w") as fh:
        fh.write("frequency_hz,power\n")
        for f, p in zip(spec.freqs_hz, spec.power):
            fh.write(f"{float(f)!r},{float(p)!r}\n")


def write_peak_report(report: PeakReport, path) -> None:
    fields = {
        "peak1_freq_hz": report.top_freqs_hz[0],
        "peak1_power": report.top_powers[0],
        "peak2_freq_hz": report.top_freqs_hz[1],
        "peak2_power": report.top_powers[1],
        "band_low_hz": report.search_band_hz[0],
        "band_high_hz": report.search_band_hz[1],
    }
    with open(path, "w") as fh:
        for k, v in fields.items():
            fh.write(f"{k} = {v!r}\n")
