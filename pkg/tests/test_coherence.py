"""Coherence formula oracle values and algebraic properties.

Expected values are frozen from direct evaluation of the defining formulas
(2*pi/lambda * cos(theta); lambda/(2 sin^2(theta/2)); 0.61*lambda/NA) in
double precision.
"""

import math

import pytest
from hypothesis import given, strategies as st

from rbcphase.coherence import (CoherenceReport, SourceSpec, coherence_length,
                                half_angle_from_na, lateral_resolution,
                                longitudinal_frequency, monochromatic_coherence_length,
                                report, um_from_nm)
from rbcphase.errors import InfiniteCoherenceError

THETA_NA04 = math.asin(0.4)


def test_longitudinal_frequency_normal_incidence():
    # oracle: 2*pi/0.632
    assert longitudinal_frequency(0.632, 0.0) == pytest.approx(9.941748903765168, rel=1e-12)


def test_longitudinal_frequency_at_na_angle():
    # oracle: 2*pi/0.460 * cos(asin(0.4))
    assert longitudinal_frequency(0.460, THETA_NA04) == pytest.approx(12.518770554602092, rel=1e-12)


def test_longitudinal_frequency_vanishes_at_grazing():
    eps = 1e-9
    assert longitudinal_frequency(0.632, math.pi / 2 - eps) == pytest.approx(0.0, abs=1e-7)


def test_longitudinal_frequency_identity_times_wavelength():
    for lam in (0.2, 0.46, 0.532, 0.632, 1.55):
        assert longitudinal_frequency(lam, 0.0) * lam == pytest.approx(2 * math.pi, rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_longitudinal_frequency_rejects_bad_wavelength(bad):
    with pytest.raises(ValueError):
        longitudinal_frequency(bad, 0.0)


@pytest.mark.parametrize("lam,expected", [
    (0.632, 7.570234799015111),
    (0.532, 6.372412837145632),
    (0.460, 5.509981024599607),
])
def test_monochromatic_coherence_length_frozen(lam, expected):
    # oracle: lam / (2 sin^2(asin(0.4)/2)) evaluated directly
    assert monochromatic_coherence_length(lam, THETA_NA04) == pytest.approx(expected, rel=1e-12)


def test_monochromatic_coherence_length_linear_in_wavelength():
    one = monochromatic_coherence_length(0.5, THETA_NA04)
    two = monochromatic_coherence_length(1.0, THETA_NA04)
    assert two == pytest.approx(2 * one, rel=1e-12)


def test_monochromatic_zero_angle_diverges():
    with pytest.raises(InfiniteCoherenceError):
        monochromatic_coherence_length(0.632, 0.0)


def test_coherence_length_matches_monochromatic_form():
    for lam in (0.46, 0.532, 0.632):
        full = coherence_length(SourceSpec(lam, 0.0, THETA_NA04))
        mono = monochromatic_coherence_length(lam, THETA_NA04)
        assert abs(full - mono) <= 1e-12 * mono


def test_coherence_length_broadband_shorter():
    mono = coherence_length(SourceSpec(0.632, 0.0, THETA_NA04))
    broad = coherence_length(SourceSpec(0.632, 0.01, THETA_NA04))
    assert broad < mono


@given(lam=st.floats(0.2, 2.0), dl1=st.floats(0.0, 0.05), dl2=st.floats(0.0, 0.05),
       theta=st.floats(1e-3, math.pi / 2 - 1e-3))
def test_coherence_length_monotone_in_spectral_width(lam, dl1, dl2, theta):
    lo, hi = sorted((dl1, dl2))
    a = coherence_length(SourceSpec(lam, lo, theta))
    b = coherence_length(SourceSpec(lam, hi, theta))
    assert b <= a * (1 + 1e-12)


@given(lam=st.floats(0.2, 2.0), dl=st.floats(0.0, 0.05),
       t1=st.floats(1e-3, math.pi / 2 - 1e-3), t2=st.floats(1e-3, math.pi / 2 - 1e-3))
def test_coherence_length_monotone_in_half_angle(lam, dl, t1, t2):
    lo, hi = sorted((t1, t2))
    a = coherence_length(SourceSpec(lam, dl, lo))
    b = coherence_length(SourceSpec(lam, dl, hi))
    assert b <= a * (1 + 1e-12)


@pytest.mark.parametrize("lam,na,expected", [
    (0.632, 0.4, 0.9638),
    (0.460, 0.4, 0.7015),
    (0.61, 0.61, 0.61),  # formula collapses to lambda when NA = 0.61
])
def test_lateral_resolution_frozen(lam, na, expected):
    assert lateral_resolution(lam, na) == pytest.approx(expected, abs=1e-12)


@given(lam=st.floats(0.2, 2.0), na=st.floats(0.05, 1.0), scale=st.floats(0.5, 2.0))
def test_lateral_resolution_scaling(lam, na, scale):
    base = lateral_resolution(lam, na)
    assert lateral_resolution(lam * scale, na) == pytest.approx(base * scale, rel=1e-9)
    assert lateral_resolution(lam, na / scale if na / scale <= 1 else na) > 0


def test_lateral_resolution_inverse_in_na():
    assert lateral_resolution(0.632, 0.2) == pytest.approx(2 * lateral_resolution(0.632, 0.4), rel=1e-12)


@pytest.mark.parametrize("na", [0.0, -0.4, 1.5])
def test_lateral_resolution_rejects_bad_na(na):
    with pytest.raises(ValueError):
        lateral_resolution(0.632, na)


def test_source_spec_invariants():
    with pytest.raises(ValueError):
        SourceSpec(-1.0, 0.0, THETA_NA04)
    with pytest.raises(ValueError):
        SourceSpec(0.632, -0.1, THETA_NA04)
    with pytest.raises(ValueError):
        SourceSpec(0.632, 0.0, 0.0)
    with pytest.raises(ValueError):
        SourceSpec(0.632, 0.0, math.pi / 2)


def test_report_fields_positive_and_consistent():
    rep = report(0.632, 0.4)
    assert isinstance(rep, CoherenceReport)
    assert rep.coherence_length_um == pytest.approx(7.570234799015111, rel=1e-12)
    assert rep.lateral_resolution_um == pytest.approx(0.9638, abs=1e-12)
    assert rep.longitudinal_frequency_rad_per_um == pytest.approx(
        longitudinal_frequency(0.632, THETA_NA04), rel=1e-12)


def test_nm_conversion_helper():
    assert um_from_nm(632.0) == pytest.approx(0.632, rel=1e-15)
    assert half_angle_from_na(0.4) == pytest.approx(THETA_NA04, rel=1e-15)
