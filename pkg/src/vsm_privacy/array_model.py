"""Uniform linear array factor math for a half-wavelength phased array.

Element ``n`` (zero-based) of the steering vector carries the phase
``pi * n * (cos(theta0) - cos(theta_c))``: the weight ``exp(-j pi n cos theta_c)``
applied to the path term ``exp(j pi n cos theta0)`` toward the user.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

#: Below this masked-sum modulus the array phase is numerically meaningless.
EPS_AMP = 1e-9


class DegenerateConfigurationError(ValueError):
    """Raised when an activation pattern cancels the array response."""


def _check_angle(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value <= np.pi) or not np.isfinite(value):
        raise ValueError(f"{name} must lie in [0, pi] rad, got {value!r}")
    return value


def principal_angle(x):
    """Map angles into the half-open interval (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    y = np.where(y == -np.pi, np.pi, y)
    return float(y) if np.ndim(y) == 0 else y


@dataclass(frozen=True)
class ArrayGeometry:
    """Carrier and size of a uniform half-wavelength linear array."""

    n_antennas: int = 16
    carrier_freq_hz: float = 2.2e9
    element_spacing_wavelengths: float = field(default=0.5, init=False)

    def __post_init__(self):
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 2:
            raise ValueError(f"n_antennas must be an integer >= 2, got {self.n_antennas!r}")
        if not self.carrier_freq_hz > 0:
            raise ValueError(f"carrier_freq_hz must be positive, got {self.carrier_freq_hz!r}")
        object.__setattr__(self, "n_antennas", int(self.n_antennas))
        object.__setattr__(self, "carrier_freq_hz", float(self.carrier_freq_hz))

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz


@dataclass(frozen=True)
class ActivationVector:
    """On/off state of every antenna; ``bits[0]`` is the reference element."""

    bits: tuple[bool, ...]

    def __post_init__(self):
        bits = tuple(bool(b) for b in self.bits)
        if not 1 <= sum(bits) <= len(bits):
            raise ValueError("an activation vector needs at least one active antenna")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def all_on(cls, n: int) -> "ActivationVector":
        return cls((True,) * n)

    @classmethod
    def from_bitmask(cls, mask: int, n: int) -> "ActivationVector":
        """Antenna ``k`` (zero-based) is active when bit ``k`` of ``mask`` is set."""
        return cls(tuple(bool((mask >> k) & 1) for k in range(n)))

    @classmethod
    def from_string(cls, text: str) -> "ActivationVector":
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"activation string must be made of 0/1, got {text!r}")
        return cls(tuple(c == "1" for c in text))

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def active_count(self) -> int:
        return sum(self.bits)

    @property
    def bitmask(self) -> int:
        return sum(1 << k for k, b in enumerate(self.bits) if b)

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool)


@dataclass(frozen=True)
class ArrayResponse:
    amplitude: float
    phase_rad: float

    @property
    def complex_value(self) -> complex:
        return self.amplitude * np.exp(1j * self.phase_rad)


def steering_vector(geometry: ArrayGeometry, theta0_rad: float, theta_c_rad: float) -> np.ndarray:
    """Per-element complex gain toward ``theta0`` when steering to ``theta_c``."""
    theta0_rad = _check_angle("theta0_rad", theta0_rad)
    theta_c_rad = _check_angle("theta_c_rad", theta_c_rad)
    n = np.arange(geometry.n_antennas)
    return np.exp(1j * np.pi * n * (np.cos(theta0_rad) - np.cos(theta_c_rad)))


def masked_sums(masks: np.ndarray, steering: np.ndarray) -> np.ndarray:
    """Complex ``b^T f`` for each row of a (K, N) activation matrix."""
    masks = np.asarray(masks)
    if masks.shape[-1] != steering.shape[0]:
        raise ValueError(
            f"activation length {masks.shape[-1]} does not match steering length {steering.shape[0]}"
        )
    return masks.astype(float) @ steering


def array_response(b: ActivationVector, steering: np.ndarray) -> ArrayResponse:
    z = masked_sums(b.as_array(), np.asarray(steering))
    amplitude = float(abs(z))
    if amplitude < EPS_AMP:
        raise DegenerateConfigurationError(
            f"configuration {b.to_string()} has amplitude {amplitude:.3e} < {EPS_AMP:g}; phase undefined"
        )
    return ArrayResponse(amplitude, principal_angle(np.angle(z)))


def full_array_closed_form(geometry: ArrayGeometry, theta0_rad: float, theta_c_rad: float) -> ArrayResponse:
    """All-on array response from the Dirichlet-kernel expression.

    A negative kernel value is folded into the phase as an extra ``pi``.
    At ``cos(theta0) == cos(theta_c)`` the kernel takes its limit ``N``.
    """
    theta0_rad = _check_angle("theta0_rad", theta0_rad)
    theta_c_rad = _check_angle("theta_c_rad", theta_c_rad)
    n = geometry.n_antennas
    u = np.pi * (np.cos(theta0_rad) - np.cos(theta_c_rad))
    den = np.sin(0.5 * u)
    if abs(den) < 1e-12:
        # removable singularity of sin(N x)/sin(x) at x = k*pi: limit N * (+-1)^((N-1)k)
        k = round(0.5 * u / np.pi)
        kernel = float(n) * (-1.0) ** ((n - 1) * k)
    else:
        kernel = np.sin(0.5 * n * u) / den
    phase = 0.5 * (n - 1) * u
    if kernel < 0:
        phase += np.pi
    amplitude = abs(kernel)
    if amplitude < EPS_AMP:
        return ArrayResponse(float(amplitude), 0.0)
    return ArrayResponse(float(amplitude), principal_angle(phase))
