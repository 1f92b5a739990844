"""Fringe analysis and Goldstein unwrapping against synthetic truths."""

import numpy as np
import pytest

from rbcphase.errors import DegenerateFieldError, FilterError, NotWrappedError
from rbcphase.forward_model import (CellClass, PhantomSpec, PhaseMap, SubjectSpec,
                                    expected_phase_ratio, make_subject,
                                    synthesize_interferogram)
from rbcphase.phase_retrieval import (ComplexField, FringeFilter, amplitude,
                                      branch_cut_mask, detect_carrier_bin,
                                      extract_complex_field, find_residues,
                                      goldstein_unwrap, plane_fit_subtract, retrieve,
                                      wrap_to_pi, wrapped_phase)


def gaussian_bump(shape=(256, 256), peak=2.0, sigma=25.0):
    rows, cols = shape
    rr, cc = np.ogrid[0:rows, 0:cols]
    return peak * np.exp(-((rr - rows / 2) ** 2 + (cc - cols / 2) ** 2) / (2 * sigma**2))


def offset_removed(a, b):
    return a - b - np.mean(a - b)


def test_wrap_to_pi_range_and_identity():
    x = np.linspace(-10, 10, 10001)
    w = wrap_to_pi(x)
    assert w.min() > -np.pi - 1e-12 and w.max() <= np.pi + 1e-12
    assert np.allclose(np.exp(1j * w), np.exp(1j * x), atol=1e-12)
    assert wrap_to_pi(np.pi) == pytest.approx(np.pi)
    assert wrap_to_pi(-np.pi) == pytest.approx(np.pi)  # -pi is identified with +pi


def test_flat_fringe_gives_constant_phase():
    truth = PhaseMap(np.zeros((256, 256)), False, 0.632)
    frame = synthesize_interferogram(truth, carrier=(0.125, 0.0625), noise_sigma=0.0)
    field = extract_complex_field(frame)
    interior = np.angle(field.values)[8:-8, 8:-8]
    assert np.std(interior) < 1e-3


def test_gaussian_bump_round_trip_interior():
    truth_vals = gaussian_bump()
    truth = PhaseMap(truth_vals, False, 0.632)
    frame = synthesize_interferogram(truth, carrier=(0.125, 0.0625), noise_sigma=0.0)
    field = extract_complex_field(frame)
    err = offset_removed(np.angle(field.values), truth_vals)[8:-8, 8:-8]
    assert np.sqrt(np.mean(err**2)) < 0.02


def test_filter_validation():
    truth = PhaseMap(np.zeros((128, 128)), False, 0.632)
    frame = synthesize_interferogram(truth, carrier=(0.25, 0.0), noise_sigma=0.0)
    with pytest.raises(FilterError):  # centred on DC
        extract_complex_field(frame, FringeFilter(center_bin=(0, 0), radius_bins=4))
    with pytest.raises(FilterError):  # circle touches DC
        extract_complex_field(frame, FringeFilter(center_bin=(0, 8), radius_bins=8))
    with pytest.raises(FilterError):  # radius too small
        extract_complex_field(frame, FringeFilter(center_bin=(0, 32), radius_bins=1))
    with pytest.raises(FilterError):  # leaves the spectrum
        extract_complex_field(frame, FringeFilter(center_bin=(0, 60), radius_bins=8))


def test_detect_carrier_matches_configuration():
    truth = PhaseMap(np.zeros((256, 256)), False, 0.632)
    frame = synthesize_interferogram(truth, carrier=(0.125, 0.0625), noise_sigma=0.0)
    assert detect_carrier_bin(frame.pixels) == (16, 32)  # (fy*rows, fx*cols)


def test_wrapped_phase_trivial_fields():
    ones = ComplexField(np.ones((8, 8), dtype=complex))
    assert np.all(wrapped_phase(ones).values_rad == 0.0)
    imag = ComplexField(1j * np.ones((8, 8)))
    assert np.allclose(wrapped_phase(imag).values_rad, np.pi / 2)
    assert np.allclose(amplitude(imag), 1.0)
    with pytest.raises(DegenerateFieldError):
        wrapped_phase(ComplexField(np.zeros((4, 4), dtype=complex)))


def test_wrapped_bump_has_closed_jump_contour():
    bump = gaussian_bump(peak=3.5)
    wrapped = wrap_to_pi(bump)
    centre_row = wrapped[128]
    jumps = np.abs(np.diff(centre_row)) > np.pi
    assert jumps.sum() == 2  # enter and leave the 2-pi contour around the peak


def spiral(shape=(64, 64), sign=1):
    rows, cols = shape
    rr, cc = np.ogrid[0:rows, 0:cols]
    return PhaseMap(sign * np.arctan2(rr - rows / 2 - 0.5, cc - cols / 2 - 0.5),
                    wrapped=True, wavelength_um=0.632)


def test_residues_empty_on_smooth_ramp():
    rows, cols = 64, 64
    ramp = np.tile(np.linspace(0, 12.0, cols), (rows, 1))
    wrapped = PhaseMap(wrap_to_pi(ramp), wrapped=True, wavelength_um=0.632)
    assert find_residues(wrapped) == []


def test_single_vortex_residue_signs():
    plus = find_residues(spiral(sign=1))
    minus = find_residues(spiral(sign=-1))
    assert len(plus) == 1 and plus[0].charge == 1
    assert len(minus) == 1 and minus[0].charge == -1
    assert plus[0].position == minus[0].position


def test_vortex_pair_charges_cancel():
    rows, cols = 96, 96
    rr, cc = np.ogrid[0:rows, 0:cols]
    phi = (np.arctan2(rr - 48.5, cc - 30.5) - np.arctan2(rr - 48.5, cc - 65.5))
    wrapped = PhaseMap(wrap_to_pi(phi), wrapped=True, wavelength_um=0.632)
    residues = find_residues(wrapped)
    assert len(residues) == 2
    assert sum(r.charge for r in residues) == 0


def test_residues_require_wrapped_input():
    with pytest.raises(NotWrappedError):
        find_residues(PhaseMap(np.zeros((8, 8)), wrapped=False, wavelength_um=0.632))
    with pytest.raises(NotWrappedError):
        goldstein_unwrap(PhaseMap(np.zeros((8, 8)), wrapped=False, wavelength_um=0.632))


def test_branch_cuts_connect_pair():
    residues = find_residues(spiral(sign=1))
    cuts = branch_cut_mask(residues, (64, 64))
    assert cuts.any()  # single residue connects to the border


def test_unwrap_plane_ramp_exact():
    rows, cols = 128, 128
    ramp = np.tile(np.linspace(0, 12.0, cols), (rows, 1)) \
        + np.tile(np.linspace(0, 5.0, rows), (cols, 1)).T
    wrapped = PhaseMap(wrap_to_pi(ramp), wrapped=True, wavelength_um=0.632)
    unwrapped = goldstein_unwrap(wrapped)
    dev = offset_removed(unwrapped.values_rad, ramp)
    assert np.max(np.abs(dev)) < 1e-9
    assert unwrapped.quality.all()


def test_unwrap_smooth_input_is_identity_plus_constant():
    smooth = gaussian_bump(shape=(64, 64), peak=2.5, sigma=10.0) - 1.0
    wrapped = PhaseMap(smooth, wrapped=True, wavelength_um=0.632)  # |values| < pi
    unwrapped = goldstein_unwrap(wrapped)
    dev = offset_removed(unwrapped.values_rad, smooth)
    assert np.max(np.abs(dev)) < 1e-12


def test_unwrap_vortex_field_quality_flags():
    unwrapped = goldstein_unwrap(spiral(sign=1))
    assert not unwrapped.quality.all()  # cut pixels were continuation-filled
    assert unwrapped.quality.mean() > 0.5


def test_plane_fit_removes_tilt():
    rows, cols = 64, 64
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    tilt = 0.01 * rr - 0.02 * cc + 0.3
    out = plane_fit_subtract(tilt.astype(float))
    assert np.max(np.abs(out)) < 1e-9


def test_retrieve_flat_scene():
    truth = PhaseMap(np.zeros((256, 256)), False, 0.632)
    frame = synthesize_interferogram(truth, noise_sigma=0.0)  # default bin-aligned carrier
    phase, amp = retrieve(frame)
    assert np.std(phase.values_rad[8:-8, 8:-8]) < 1e-2
    assert amp.shape == (256, 256)


def test_retrieve_tolerates_fractional_bin_carrier():
    data = make_subject(SubjectSpec(subject_id="t", class_label=CellClass.HEALTHY,
                                    cell_count=1, seed=2, noise_sigma=0.15,
                                    carrier=(0.2, 0.05)))
    phase, _ = retrieve(data.interferograms["red"])
    err = offset_removed(phase.values_rad, data.truths["red"].values_rad)[8:-8, 8:-8]
    assert np.sqrt(np.mean(err**2)) < 0.03


def test_retrieve_single_cell_round_trip():
    data = make_subject(SubjectSpec(subject_id="t", class_label=CellClass.HEALTHY,
                                    cell_count=1, seed=21, noise_sigma=0.15))
    truth = data.truths["red"].values_rad
    phase, _ = retrieve(data.interferograms["red"])
    err = offset_removed(phase.values_rad, truth)[8:-8, 8:-8]
    assert np.sqrt(np.mean(err**2)) < 0.03


def test_retrieve_multiwavelength_dispersion_ratio():
    data = make_subject(SubjectSpec(subject_id="t", class_label=CellClass.HEALTHY,
                                    cell_count=1, seed=33, noise_sigma=0.1,
                                    opd_peak_um=0.18))
    recovered = {}
    for ch in ("red", "blue"):
        phase, _ = retrieve(data.interferograms[ch])
        values = phase.values_rad - np.median(phase.values_rad)  # background to zero
        recovered[ch] = values
    inside = data.truths["red"].values_rad > 0.5 * data.truths["red"].values_rad.max()
    measured = np.mean(recovered["red"][inside]) / np.mean(recovered["blue"][inside])
    expected = expected_phase_ratio(CellClass.HEALTHY, "red", "blue")
    assert measured == pytest.approx(expected, rel=0.02)
