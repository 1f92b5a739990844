"""Ground-truth RBC phase phantoms and off-axis interferogram synthesis.

Provides the labelled raw data the real instrument would record: per-class
cell phantoms rendered as unwrapped phase maps at three wavelengths, and
slightly off-axis interferograms

    I(x, y) = B (1 + m cos(2 pi (fx x + fy y) + phi(x, y))) + N(0, sigma)

clamped at zero. Everything is a pure function of (spec, seed).

Cell shape model (the source data never specifies one): a biconcave disc
written as a torus-dip profile in the squared radial coordinate u = (r/R)^2,

    f(u) = (1 - u) (alpha + (1 - alpha) u),   u < 1,  alpha = 0.25,

normalized so its maximum over the rendered grid is exactly 1. Early-stage
cells multiply the profile by a constant factor inside a few small chromatin
discs; late-stage cells multiply it inside one contiguous pigment region
covering a configured fraction of the cell area. Phase scales with
wavelength as phi = (2 pi / lambda) * OPD * dispersion_factor, with one OPD
map shared by all channels, so cross-channel phase ratios are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import AliasingError, GeometryError, PlacementError

# Reference instrument geometry (context for defaults; the canvas below is a
# desk-scale stand-in for the 1392x1040 sensor).
SENSOR_SHAPE_PX = (1040, 1392)
CAMERA_PIXEL_PITCH_UM = 4.65
FIELD_OF_VIEW_UM = 400.0
OBJECTIVE_NA = 0.4

WAVELENGTHS_UM = {"red": 0.632, "green": 0.532, "blue": 0.460}
CHANNELS = ("red", "green", "blue")

# Object-plane sampling implied by the 400 um field mapped onto 1392 columns.
DEFAULT_PIXEL_SIZE_UM = FIELD_OF_VIEW_UM / SENSOR_SHAPE_PX[1]

DEFAULT_CANVAS = (512, 512)
# Near (0.2, 0.05) cycles/px but snapped to exact FFT bins of the default
# canvas (104/512, 26/512): a bin-aligned carrier keeps the first-order lobe
# from leaking through the hard circular mask, which otherwise adds ~0.01 rad
# of ripple to every retrieved map. Integer bins hold for any canvas whose
# side is a multiple of 256.
DEFAULT_CARRIER = (13 / 64, 13 / 256)

BICONCAVE_DIP = 0.25     # profile value at the cell centre relative to the rim peak
CHROMATIN_FACTOR = 1.5   # profile multiplier inside chromatin dots
PIGMENT_FACTOR = 1.4     # profile multiplier inside the pigment region
MAX_PEAK_PHASE_RAD = 8.0 * math.pi


class CellClass(str, Enum):
    HEALTHY = "healthy"
    EARLY_TROPHOZOITE = "early_trophozoite"
    LATE_TROPHOZOITE = "late_trophozoite"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class PhantomSpec:
    """One synthetic cell: class morphology, geometry and per-channel peaks."""

    class_label: CellClass
    cell_radius_um: float
    peak_phase_rad: dict  # channel -> peak phase in radians
    center_px: tuple  # (row, col)
    rng_seed: int
    inclusion_count: int = 0
    pigment_fraction: float = 0.0

    def __post_init__(self):
        for ch, peak in self.peak_phase_rad.items():
            if not 0.0 < peak <= MAX_PEAK_PHASE_RAD:
                raise ValueError(f"peak phase for {ch} must be in (0, {MAX_PEAK_PHASE_RAD:.3f}], got {peak}")
        if self.cell_radius_um <= 0:
            raise ValueError("cell radius must be > 0")
        if not 0.0 <= self.pigment_fraction <= 1.0:
            raise ValueError("pigment fraction must be in [0, 1]")
        if self.inclusion_count < 0:
            raise ValueError("inclusion count must be >= 0")
        if self.class_label is CellClass.EARLY_TROPHOZOITE and self.inclusion_count < 2:
            raise ValueError("early trophozoite needs at least two chromatin dots")
        if self.class_label is CellClass.LATE_TROPHOZOITE and self.pigment_fraction <= 0:
            raise ValueError("late trophozoite needs a positive pigment fraction")


@dataclass
class Interferogram:
    """Recorded fringe image plus acquisition metadata."""

    pixels: np.ndarray
    wavelength_um: float
    carrier_cycles_per_px: tuple  # (fx, fy)
    pixel_pitch_um: float = CAMERA_PIXEL_PITCH_UM
    subject_id: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("pixel values must be finite")
        if np.any(self.pixels < 0):
            raise ValueError("pixel values must be >= 0")
        _check_carrier(self.carrier_cycles_per_px)

    @property
    def shape(self):
        return self.pixels.shape


@dataclass
class PhaseMap:
    """Phase surface in radians; wrapped maps are confined to (-pi, pi]."""

    values_rad: np.ndarray
    wrapped: bool
    wavelength_um: float
    quality: np.ndarray | None = None  # False where filled past branch cuts

    def __post_init__(self):
        self.values_rad = np.asarray(self.values_rad, dtype=np.float64)
        if self.values_rad.ndim != 2:
            raise ValueError("phase values must be a 2-D array")
        if not np.all(np.isfinite(self.values_rad)):
            raise ValueError("phase values must be finite")
        if self.wrapped:
            v = self.values_rad
            if v.size and (v.min() <= -math.pi - 1e-12 or v.max() > math.pi + 1e-12):
                raise ValueError("wrapped phase must lie in (-pi, pi]")

    @property
    def shape(self):
        return self.values_rad.shape


def _check_carrier(carrier):
    fx, fy = carrier
    if abs(fx) >= 0.5 or abs(fy) >= 0.5:
        raise AliasingError(f"carrier {carrier} reaches the Nyquist limit of 0.5 cycles/px")
    if fx == 0.0 and fy == 0.0:
        raise AliasingError("carrier must be nonzero in at least one axis")


def _unit_profile(spec: PhantomSpec, canvas, pixel_size_um: float) -> np.ndarray:
    """Normalized cell profile on the canvas: base shape times class texture."""
    rows, cols = canvas
    radius_px = spec.cell_radius_um / pixel_size_um
    cr, cc = spec.center_px
    if not (radius_px + 2 <= cr <= rows - 1 - radius_px - 2
            and radius_px + 2 <= cc <= cols - 1 - radius_px - 2):
        raise GeometryError(
            f"cell at {spec.center_px} with radius {radius_px:.1f} px leaves "
            f"less than 2 px margin on a {rows}x{cols} canvas")

    rr, cc_idx = np.ogrid[0:rows, 0:cols]
    u = ((rr - cr) ** 2 + (cc_idx - cc) ** 2) / radius_px**2
    inside = u < 1.0
    alpha = BICONCAVE_DIP
    profile = np.where(inside, (1.0 - u) * (alpha + (1.0 - alpha) * u), 0.0)
    profile /= profile.max()

    rng = np.random.default_rng(spec.rng_seed)
    if spec.class_label is CellClass.EARLY_TROPHOZOITE:
        dot_radius = max(2.0, 0.12 * radius_px)
        centers = _place_dots(rng, spec.inclusion_count, (cr, cc), radius_px, dot_radius)
        for dr, dc in centers:
            dot = (rr - dr) ** 2 + (cc_idx - dc) ** 2 <= dot_radius**2
            profile[dot & inside] *= CHROMATIN_FACTOR
    elif spec.class_label is CellClass.LATE_TROPHOZOITE:
        region = _pigment_region(rng, inside, (cr, cc), radius_px, spec.pigment_fraction)
        profile[region] *= PIGMENT_FACTOR
    return profile


def _place_dots(rng, count, center, radius_px, dot_radius):
    """Non-touching chromatin dot centres inside 0.55 R of the cell centre."""
    cr, cc = center
    limit = 0.55 * radius_px
    min_sep = 2.0 * dot_radius + 3.0
    centers = []
    for _ in range(4000):
        if len(centers) == count:
            break
        rho = limit * math.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2.0 * math.pi)
        cand = (cr + rho * math.sin(ang), cc + rho * math.cos(ang))
        if all(math.hypot(cand[0] - r0, cand[1] - c0) >= min_sep for r0, c0 in centers):
            centers.append(cand)
    if len(centers) < count:
        raise GeometryError(f"could not place {count} chromatin dots inside the cell")
    return centers


def _pigment_region(rng, inside, center, radius_px, fraction):
    """Contiguous region covering `fraction` of the cell area, grown from a seeded anchor."""
    cr, cc = center
    rho = 0.5 * radius_px * math.sqrt(rng.uniform())
    ang = rng.uniform(0.0, 2.0 * math.pi)
    ar, ac = cr + rho * math.sin(ang), cc + rho * math.cos(ang)
    cell_r, cell_c = np.nonzero(inside)
    want = int(math.ceil(fraction * cell_r.size))
    d2 = (cell_r - ar) ** 2 + (cell_c - ac) ** 2
    order = np.lexsort((cell_c, cell_r, d2))[:want]  # distance, then (row, col) for determinism
    region = np.zeros_like(inside)
    region[cell_r[order], cell_c[order]] = True
    return region


def make_phantom_field(spec: PhantomSpec, canvas=DEFAULT_CANVAS, channel: str = "red",
                       pixel_size_um: float = DEFAULT_PIXEL_SIZE_UM) -> PhaseMap:
    """Render one cell's ground-truth unwrapped phase for one channel.

    The spatial profile is identical across channels (same seed, same
    geometry); the channel only selects the peak-phase scale, so
    cross-channel phase ratios are exact at every pixel.
    """
    if channel not in spec.peak_phase_rad:
        raise KeyError(f"no peak phase configured for channel {channel!r}")
    profile = _unit_profile(spec, canvas, pixel_size_um)
    return PhaseMap(values_rad=profile * spec.peak_phase_rad[channel],
                    wrapped=False, wavelength_um=WAVELENGTHS_UM[channel])


def synthesize_interferogram(truth: PhaseMap, carrier=DEFAULT_CARRIER, background: float = 100.0,
                             modulation: float = 0.3, noise_sigma: float = 0.0, seed: int = 0,
                             subject_id: str = "") -> Interferogram:
    """Off-axis fringe image encoding `truth` on a spatial carrier."""
    _check_carrier(carrier)
    if background <= 0:
        raise ValueError("background must be > 0")
    if not 0.0 < modulation <= 1.0:
        raise ValueError("modulation must be in (0, 1]")
    if noise_sigma < 0:
        raise ValueError("noise sigma must be >= 0")
    fx, fy = carrier
    rows, cols = truth.shape
    y, x = np.ogrid[0:rows, 0:cols]
    phase = 2.0 * math.pi * (fx * x + fy * y) + truth.values_rad
    pixels = background * (1.0 + modulation * np.cos(phase))
    if noise_sigma > 0:
        pixels = pixels + np.random.default_rng(seed).normal(0.0, noise_sigma, size=pixels.shape)
    np.clip(pixels, 0.0, None, out=pixels)
    return Interferogram(pixels=pixels, wavelength_um=truth.wavelength_um,
                         carrier_cycles_per_px=tuple(carrier), subject_id=subject_id)


# Per-class refractive-index factors applied on top of the 1/lambda phase
# scaling; all 1.0 by default (pure dispersion through wavelength).
DEFAULT_DISPERSION = {
    CellClass.HEALTHY: {"red": 1.0, "green": 1.0, "blue": 1.0},
    CellClass.EARLY_TROPHOZOITE: {"red": 1.0, "green": 1.0, "blue": 1.0},
    CellClass.LATE_TROPHOZOITE: {"red": 1.0, "green": 1.0, "blue": 1.0},
}


def peak_phases_for_class(class_label: CellClass, opd_peak_um: float,
                          dispersion: dict | None = None) -> dict:
    """Per-channel peak phases from one optical path difference."""
    factors = (dispersion or DEFAULT_DISPERSION)[class_label]
    return {ch: 2.0 * math.pi * opd_peak_um * factors[ch] / WAVELENGTHS_UM[ch] for ch in CHANNELS}


def expected_phase_ratio(class_label: CellClass, channel_a: str, channel_b: str,
                         dispersion: dict | None = None) -> float:
    """Configured truth ratio phase_a / phase_b for in-cell pixels."""
    factors = (dispersion or DEFAULT_DISPERSION)[class_label]
    return (WAVELENGTHS_UM[channel_b] / WAVELENGTHS_UM[channel_a]) * (factors[channel_a] / factors[channel_b])


@dataclass(frozen=True)
class SubjectSpec:
    """One field of view of one subject: class, cell count, imaging knobs."""

    subject_id: str
    class_label: CellClass
    cell_count: int
    seed: int
    fov_px: tuple = DEFAULT_CANVAS
    cell_radius_um: float = 7.5
    opd_peak_um: float = 0.15
    pixel_size_um: float = DEFAULT_PIXEL_SIZE_UM
    carrier: tuple = DEFAULT_CARRIER
    background: float = 100.0
    modulation: float = 0.3
    noise_sigma: float = 0.1
    inclusion_count: int = 3
    pigment_fraction: float = 0.3
    dispersion: dict | None = None
    centers_px: tuple | None = None  # explicit centres override placement (tests)

    def __post_init__(self):
        if self.cell_count < 0:
            raise ValueError("cell count must be >= 0")


@dataclass
class SubjectData:
    """Synthesized field of view: frames, truths, and exact cell boxes."""

    interferograms: dict  # channel -> Interferogram
    truths: dict          # channel -> PhaseMap
    boxes: list           # (row, col, height, width) per cell
    phantoms: list        # PhantomSpec per cell


def _place_centers(rng, count, fov_px, radius_px):
    """Cell centres whose bounding boxes (radius + 3 px) are pairwise disjoint."""
    rows, cols = fov_px
    half = radius_px + 3.0
    if 2 * half >= min(rows, cols):
        raise PlacementError(f"cells of radius {radius_px:.1f} px do not fit a {rows}x{cols} field")
    centers = []
    for _ in range(1000 * max(count, 1)):
        if len(centers) == count:
            break
        cand = (rng.uniform(half, rows - 1 - half), rng.uniform(half, cols - 1 - half))
        if all(abs(cand[0] - r0) >= 2 * half or abs(cand[1] - c0) >= 2 * half for r0, c0 in centers):
            centers.append(cand)
    if len(centers) < count:
        raise PlacementError(f"could not place {count} non-overlapping cells in {rows}x{cols}")
    return centers


def make_subject(spec: SubjectSpec) -> SubjectData:
    """Synthesize one field of view at all three wavelengths."""
    rng = np.random.default_rng(spec.seed)
    radius_px = spec.cell_radius_um / spec.pixel_size_um
    if spec.centers_px is not None:
        if len(spec.centers_px) != spec.cell_count:
            raise ValueError("explicit centres must match the cell count")
        centers = list(spec.centers_px)
    else:
        centers = _place_centers(rng, spec.cell_count, spec.fov_px, radius_px)

    peaks = peak_phases_for_class(spec.class_label, spec.opd_peak_um, spec.dispersion)
    phantoms = []
    for i, center in enumerate(centers):
        kwargs = {}
        if spec.class_label is CellClass.EARLY_TROPHOZOITE:
            kwargs["inclusion_count"] = spec.inclusion_count
        elif spec.class_label is CellClass.LATE_TROPHOZOITE:
            kwargs["pigment_fraction"] = spec.pigment_fraction
        phantoms.append(PhantomSpec(
            class_label=spec.class_label, cell_radius_um=spec.cell_radius_um,
            peak_phase_rad=peaks, center_px=center,
            rng_seed=int(rng.integers(0, 2**63 - 1)), **kwargs))

    rows, cols = spec.fov_px
    unit_sum = np.zeros((rows, cols))
    boxes = []
    for phantom in phantoms:
        unit = _unit_profile(phantom, spec.fov_px, spec.pixel_size_um)
        unit_sum += unit
        rr, cc = np.nonzero(unit)
        boxes.append((int(rr.min()), int(cc.min()),
                      int(rr.max() - rr.min() + 1), int(cc.max() - cc.min() + 1)))

    truths, frames = {}, {}
    for k, ch in enumerate(CHANNELS):
        truths[ch] = PhaseMap(values_rad=unit_sum * peaks[ch], wrapped=False,
                              wavelength_um=WAVELENGTHS_UM[ch])
        frames[ch] = synthesize_interferogram(
            truths[ch], carrier=spec.carrier, background=spec.background,
            modulation=spec.modulation, noise_sigma=spec.noise_sigma,
            seed=spec.seed * 3 + k, subject_id=spec.subject_id)
    return SubjectData(interferograms=frames, truths=truths, boxes=boxes, phantoms=phantoms)
