"""Phantom generator and interferogram synthesis contracts."""

import numpy as np
import pytest
from scipy import ndimage

from rbcphase.errors import AliasingError, GeometryError, PlacementError
from rbcphase.forward_model import (CellClass, DEFAULT_PIXEL_SIZE_UM, Interferogram,
                                    PhantomSpec, PhaseMap, SubjectSpec,
                                    expected_phase_ratio, make_phantom_field, make_subject,
                                    peak_phases_for_class, synthesize_interferogram)

CANVAS = (256, 256)
PEAKS = {"red": 1.5, "green": 1.8, "blue": 2.1}


def healthy_spec(seed=1, center=(128, 128)):
    return PhantomSpec(class_label=CellClass.HEALTHY, cell_radius_um=7.5,
                       peak_phase_rad=PEAKS, center_px=center, rng_seed=seed)


def test_phantom_background_zero_and_peak_exact():
    field = make_phantom_field(healthy_spec(), CANVAS, "red")
    values = field.values_rad
    radius_px = 7.5 / DEFAULT_PIXEL_SIZE_UM
    rr, cc = np.ogrid[0:CANVAS[0], 0:CANVAS[1]]
    outside = (rr - 128) ** 2 + (cc - 128) ** 2 >= (radius_px + 1) ** 2
    assert np.all(values[outside] == 0.0)
    assert values.max() == pytest.approx(PEAKS["red"], abs=0)  # grid max normalized to the peak


def test_phantom_deterministic():
    a = make_phantom_field(healthy_spec(seed=7), CANVAS, "green")
    b = make_phantom_field(healthy_spec(seed=7), CANVAS, "green")
    assert np.array_equal(a.values_rad, b.values_rad)


def test_phantom_biconcave_dip():
    values = make_phantom_field(healthy_spec(), CANVAS, "red").values_rad
    center_val = values[128, 128]
    assert 0 < center_val < values.max()  # rim peak above the centre dip


def test_early_trophozoite_dot_count():
    spec = PhantomSpec(class_label=CellClass.EARLY_TROPHOZOITE, cell_radius_um=7.5,
                       peak_phase_rad=PEAKS, center_px=(128, 128), rng_seed=3,
                       inclusion_count=2)
    early = make_phantom_field(spec, CANVAS, "red").values_rad
    base = make_phantom_field(healthy_spec(seed=3), CANVAS, "red").values_rad
    elevated = early > 1.2 * base
    _, count = ndimage.label(elevated, structure=np.ones((3, 3), dtype=int))
    assert count == 2


def test_early_trophozoite_requires_two_dots():
    with pytest.raises(ValueError):
        PhantomSpec(class_label=CellClass.EARLY_TROPHOZOITE, cell_radius_um=7.5,
                    peak_phase_rad=PEAKS, center_px=(128, 128), rng_seed=0,
                    inclusion_count=1)


def test_late_trophozoite_pigment_region():
    spec = PhantomSpec(class_label=CellClass.LATE_TROPHOZOITE, cell_radius_um=7.5,
                       peak_phase_rad=PEAKS, center_px=(128, 128), rng_seed=5,
                       pigment_fraction=0.3)
    late = make_phantom_field(spec, CANVAS, "red").values_rad
    base = make_phantom_field(healthy_spec(seed=5), CANVAS, "red").values_rad
    elevated = late > 1.2 * base
    labels, count = ndimage.label(elevated, structure=np.ones((3, 3), dtype=int))
    assert count == 1  # one contiguous pigment region
    cell_area = int(np.count_nonzero(base))
    assert elevated.sum() == pytest.approx(0.3 * cell_area, rel=0.02)
    with pytest.raises(ValueError):
        PhantomSpec(class_label=CellClass.LATE_TROPHOZOITE, cell_radius_um=7.5,
                    peak_phase_rad=PEAKS, center_px=(128, 128), rng_seed=0,
                    pigment_fraction=0.0)


def test_phantom_out_of_bounds_rejected():
    with pytest.raises(GeometryError):
        make_phantom_field(healthy_spec(center=(5, 128)), CANVAS, "red")


def test_interferogram_zero_phase_is_pure_fringe():
    truth = PhaseMap(values_rad=np.zeros((64, 64)), wrapped=False, wavelength_um=0.632)
    frame = synthesize_interferogram(truth, carrier=(0.25, 0.0), background=100.0,
                                     modulation=0.5, noise_sigma=0.0)
    row = frame.pixels[0]
    # period 1/0.25 = 4 px along the column axis
    assert np.allclose(row[::4], row[0], atol=1e-9)
    assert row.max() == pytest.approx(150.0, abs=1e-9)
    assert row.min() == pytest.approx(50.0, abs=1e-9)


def test_interferogram_pi_shift_flips_fringes():
    zero = synthesize_interferogram(PhaseMap(np.zeros((32, 32)), False, 0.632),
                                    carrier=(0.25, 0.0), noise_sigma=0.0)
    pi = synthesize_interferogram(PhaseMap(np.full((32, 32), np.pi), False, 0.632),
                                  carrier=(0.25, 0.0), noise_sigma=0.0)
    # cos(x + pi) = -cos(x): fringes half-period shifted
    assert np.allclose(pi.pixels, zero.pixels[:, list(range(2, 32)) + [0, 1]], atol=1e-9)


def test_interferogram_determinism_and_energy_bound():
    truth = make_phantom_field(healthy_spec(), CANVAS, "blue")
    a = synthesize_interferogram(truth, noise_sigma=2.0, seed=11)
    b = synthesize_interferogram(truth, noise_sigma=2.0, seed=11)
    assert np.array_equal(a.pixels, b.pixels)
    assert a.pixels.min() >= 0.0
    assert a.pixels.max() <= 100.0 * 1.3 + 6 * 2.0


def test_interferogram_nyquist_rejected():
    truth = PhaseMap(np.zeros((16, 16)), False, 0.632)
    with pytest.raises(AliasingError):
        synthesize_interferogram(truth, carrier=(0.5, 0.0))
    with pytest.raises(AliasingError):
        synthesize_interferogram(truth, carrier=(0.0, 0.0))
    with pytest.raises(AliasingError):
        Interferogram(pixels=np.ones((8, 8)), wavelength_um=0.632,
                      carrier_cycles_per_px=(0.7, 0.0))


def test_spectral_peaks_at_carrier_bins():
    truth = PhaseMap(np.zeros((128, 128)), False, 0.632)
    frame = synthesize_interferogram(truth, carrier=(0.125, 0.0625), noise_sigma=0.0)
    spectrum = np.abs(np.fft.fftshift(np.fft.fft2(frame.pixels)))
    spectrum[64, 64] = 0.0  # drop DC
    flat = np.argsort(spectrum.ravel())[::-1][:2]
    peaks = {tuple(np.unravel_index(i, spectrum.shape)) for i in flat}
    # fx=0.125 -> col offset 16, fy=0.0625 -> row offset 8
    assert peaks == {(64 + 8, 64 + 16), (64 - 8, 64 - 16)}


def test_subject_empty_scene():
    data = make_subject(SubjectSpec(subject_id="s0", class_label=CellClass.HEALTHY,
                                    cell_count=0, seed=1, fov_px=(128, 128)))
    assert data.boxes == []
    for ch in ("red", "green", "blue"):
        assert np.all(data.truths[ch].values_rad == 0.0)
        assert data.interferograms[ch].pixels.shape == (128, 128)


def test_subject_boxes_disjoint_and_exact():
    data = make_subject(SubjectSpec(subject_id="s1", class_label=CellClass.HEALTHY,
                                    cell_count=5, seed=3))
    assert len(data.boxes) == 5
    for i, (r0, c0, h, w) in enumerate(data.boxes):
        for j, (r1, c1, h2, w2) in enumerate(data.boxes):
            if i < j:
                assert r0 + h <= r1 or r1 + h2 <= r0 or c0 + w <= c1 or c1 + w2 <= c0
    truth = data.truths["red"].values_rad
    for r0, c0, h, w in data.boxes:
        box = truth[r0:r0 + h, c0:c0 + w]
        assert box.max() > 0
        # boxes are tight: nonzero support touches every side
        assert box[0, :].max() > 0 or box[:, 0].max() > 0 or h <= 2
    assert np.array_equal(truth, make_subject(SubjectSpec(
        subject_id="s1", class_label=CellClass.HEALTHY, cell_count=5,
        seed=3)).truths["red"].values_rad)


def test_subject_placement_error_when_impossible():
    with pytest.raises(PlacementError):
        make_subject(SubjectSpec(subject_id="s2", class_label=CellClass.HEALTHY,
                                 cell_count=200, seed=1, fov_px=(128, 128)))


def test_multiwavelength_ratio_exact():
    data = make_subject(SubjectSpec(subject_id="s3", class_label=CellClass.HEALTHY,
                                    cell_count=3, seed=9))
    red = data.truths["red"].values_rad
    blue = data.truths["blue"].values_rad
    inside = red > 0
    ratio = expected_phase_ratio(CellClass.HEALTHY, "red", "blue")
    assert np.allclose(red[inside] / blue[inside], ratio, rtol=1e-12, atol=0)
    peaks = peak_phases_for_class(CellClass.HEALTHY, 0.15)
    assert peaks["red"] / peaks["blue"] == pytest.approx(ratio, rel=1e-12)
    assert ratio == pytest.approx(0.460 / 0.632, rel=1e-12)
