"""Coherence-theory formulas for an extended, possibly broadband source.

For a source with half angular spectrum width ``theta_z`` and temporal
spectral width ``delta_lambda`` around a central wavelength ``lambda_0``,
the axial (longitudinal spatial) coherence length is

    L_c = [ 2 sin^2(theta_z / 2) / lambda_0
            + (delta_lambda / lambda_0^2) cos^2(theta_z / 2) ]^(-1)

which for a monochromatic source reduces to

    L_c = lambda_0 / (2 sin^2(theta_z / 2)).

The longitudinal spatial frequency of a plane-wave component travelling at
angle ``theta_z`` to the axis is ``k_z = (2 pi / lambda) cos(theta_z)``, and
the diffraction-limited lateral resolution of the imaging objective is
``L_s = 0.61 lambda_0 / NA``.

All lengths are micrometres internally; ``um_from_nm`` converts nm inputs.
The measured figures for the reference instrument (axial 4.5/4/3.8 um and
lateral 1.9/1.1/1.0 um for red/green/blue with the 20x NA 0.4 objective)
deviate from these formulas and are quoted here as experimental context
only; the functions below always return formula values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InfiniteCoherenceError

TWO_PI = 2.0 * math.pi


def um_from_nm(value_nm: float) -> float:
    """Convert nanometres to micrometres."""
    return value_nm * 1e-3


def half_angle_from_na(numerical_aperture: float) -> float:
    """Half angular spectrum width theta_z = asin(NA) for an aperture in air.

    The standard aperture-angle relation; the instrument description gives
    only NA, so this is how callers providing NA obtain theta_z.
    """
    if not 0.0 < numerical_aperture <= 1.0:
        raise ValueError(f"numerical aperture must be in (0, 1], got {numerical_aperture}")
    return math.asin(numerical_aperture)


@dataclass(frozen=True)
class SourceSpec:
    """Light source: central wavelength, spectral width, half angular width.

    Wavelengths in micrometres, angle in radians.
    """

    central_wavelength_um: float
    spectral_width_um: float
    half_angle_rad: float

    def __post_init__(self):
        if not (math.isfinite(self.central_wavelength_um) and self.central_wavelength_um > 0):
            raise ValueError(f"central wavelength must be finite and > 0, got {self.central_wavelength_um}")
        if not (math.isfinite(self.spectral_width_um) and self.spectral_width_um >= 0):
            raise ValueError(f"spectral width must be finite and >= 0, got {self.spectral_width_um}")
        if not 0.0 < self.half_angle_rad < math.pi / 2:
            raise ValueError(f"half angle must be in (0, pi/2), got {self.half_angle_rad}")


@dataclass(frozen=True)
class CoherenceReport:
    """Predicted axial coherence length, lateral resolution and k_z."""

    coherence_length_um: float
    lateral_resolution_um: float
    longitudinal_frequency_rad_per_um: float

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def longitudinal_frequency(wavelength_um: float, angle_rad: float = 0.0) -> float:
    """k_z = (2 pi / lambda) cos(theta_z), in rad/um."""
    if not (math.isfinite(wavelength_um) and wavelength_um > 0):
        raise ValueError(f"wavelength must be finite and > 0, got {wavelength_um}")
    if not 0.0 <= angle_rad < math.pi / 2:
        raise ValueError(f"angle must be in [0, pi/2), got {angle_rad}")
    return TWO_PI / wavelength_um * math.cos(angle_rad)


def monochromatic_coherence_length(wavelength_um: float, half_angle_rad: float) -> float:
    """L_c = lambda_0 / (2 sin^2(theta_z / 2)) for a monochromatic source."""
    if not (math.isfinite(wavelength_um) and wavelength_um > 0):
        raise ValueError(f"wavelength must be finite and > 0, got {wavelength_um}")
    if half_angle_rad == 0.0:
        raise InfiniteCoherenceError("zero angular width: monochromatic coherence length diverges")
    if not 0.0 < half_angle_rad < math.pi / 2:
        raise ValueError(f"half angle must be in (0, pi/2), got {half_angle_rad}")
    return wavelength_um / (2.0 * math.sin(half_angle_rad / 2.0) ** 2)


def coherence_length(source: SourceSpec) -> float:
    """Axial coherence length of a broadband extended source.

    Reciprocal sum of the angular and temporal contributions; equals
    :func:`monochromatic_coherence_length` when the spectral width is zero.
    """
    half = source.half_angle_rad / 2.0
    angular = 2.0 * math.sin(half) ** 2 / source.central_wavelength_um
    temporal = (source.spectral_width_um / source.central_wavelength_um**2) * math.cos(half) ** 2
    denom = angular + temporal
    if denom == 0.0:
        raise InfiniteCoherenceError("zero angular and spectral width: coherence length diverges")
    return 1.0 / denom


def lateral_resolution(wavelength_um: float, numerical_aperture: float) -> float:
    """Diffraction-limited lateral resolution L_s = 0.61 lambda_0 / NA."""
    if not (math.isfinite(wavelength_um) and wavelength_um > 0):
        raise ValueError(f"wavelength must be finite and > 0, got {wavelength_um}")
    if not (math.isfinite(numerical_aperture) and 0.0 < numerical_aperture <= 1.0):
        raise ValueError(f"numerical aperture must be in (0, 1], got {numerical_aperture}")
    return 0.61 * wavelength_um / numerical_aperture


def report(wavelength_um: float, numerical_aperture: float, spectral_width_um: float = 0.0) -> CoherenceReport:
    """Evaluate all three formulas for one source/objective combination."""
    theta = half_angle_from_na(numerical_aperture)
    source = SourceSpec(wavelength_um, spectral_width_um, theta)
    return CoherenceReport(
        coherence_length_um=coherence_length(source),
        lateral_resolution_um=lateral_resolution(wavelength_um, numerical_aperture),
        longitudinal_frequency_rad_per_um=longitudinal_frequency(wavelength_um, theta),
    )
