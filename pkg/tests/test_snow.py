import numpy as np
import pytest
from hypothesis import given, strategies as st

from arlane.snow import (
    NO_OCCLUSION, OcclusionConfig, OcclusionSpec, ViewConfig, read_pgm, render, sample_occlusion, speckle_count,
    write_labeled_frame, write_pgm,
)
from arlane.track import Route, make_edge
from arlane.vehicle import VehicleState

ROUTE = Route([make_edge(0, 1, (0.0, 0.0, 0.0), "straight", 200.0)], 0, 1)
STATE = VehicleState(50.0, 0.0, 0.0, 5.0)
VIEW = ViewConfig()


def _oracle(view=VIEW, lane_width=3.5):
    """Analytic raster of two straight boundary strips seen from the centerline."""
    dy = view.span / view.width
    img = np.zeros((view.height, view.width))
    for c in range(view.width):
        y_hi = view.span / 2 - c * dy
        y_lo = y_hi - dy
        for yb in (lane_width / 2, -lane_width / 2):
            lo = max(y_lo, yb - view.marker_width / 2)
            hi = min(y_hi, yb + view.marker_width / 2)
            img[:, c] = np.maximum(img[:, c], max(hi - lo, 0.0) / dy)
    return img


def test_clean_render_matches_line_oracle():
    img = render(STATE, ROUTE, NO_OCCLUSION)[0]
    ref = _oracle()
    locus = ref > 0
    assert img[locus].sum() > 0.9 * ref[locus].sum()
    assert np.abs(img - ref).max() <= 0.5 / 255 + 1e-12


def test_both_markers_dropped_removes_line_mass():
    img = render(STATE, ROUTE, OcclusionConfig(frozenset({"left", "right"})))[0]
    locus = _oracle() > 0
    assert img[locus].sum() < 0.05 * _oracle()[locus].sum()


def test_one_marker_dropped_keeps_other():
    img = render(STATE, ROUTE, OcclusionConfig(frozenset({"left"})))[0]
    half = VIEW.width // 2
    assert img[:, :half].sum() == 0.0
    assert img[:, half:].sum() > 0.0


def test_snow_changes_pixels():
    clean = render(STATE, ROUTE, OcclusionConfig(snow_density=0.0, seed=3))
    snowy = render(STATE, ROUTE, OcclusionConfig(snow_density=1.0, seed=3))
    assert np.mean(np.abs(snowy - clean)) > 0.05


def test_gap_removes_marker_rows():
    img = render(STATE, ROUTE, OcclusionConfig(gaps=((40.0, 80.0),)))[0]
    assert img.sum() == 0.0


@given(st.floats(0, 1), st.integers(0, 1000), st.integers(0, 50))
def test_pixels_in_unit_range_and_deterministic(density, seed, frame):
    occ = OcclusionConfig(snow_density=density, seed=seed)
    a = render(STATE, ROUTE, occ, frame=frame)
    b = render(STATE, ROUTE, occ, frame=frame)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert np.array_equal(a, b)


@given(st.floats(0, 1), st.floats(0, 1))
def test_speckle_count_monotone(d1, d2):
    lo, hi = sorted((d1, d2))
    assert speckle_count(OcclusionConfig(snow_density=lo)) <= speckle_count(OcclusionConfig(snow_density=hi))


def test_render_shape_and_channels():
    img = render(STATE, ROUTE, view=ViewConfig(channels=3))
    assert img.shape == (3, 64, 64)
    assert np.array_equal(img[0], img[2])


def test_dropout_extremes():
    none = OcclusionSpec(p_drop_left=0.0, p_drop_right=0.0)
    both = OcclusionSpec(p_drop_left=1.0, p_drop_right=1.0)
    for seed in range(20):
        assert sample_occlusion(seed, none).dropped_markers == frozenset()
        assert sample_occlusion(seed, both).dropped_markers == frozenset({"left", "right"})


def test_sample_occlusion_deterministic():
    assert sample_occlusion(42) == sample_occlusion(42)
    occ = sample_occlusion(42)
    assert 0.0 <= occ.snow_density <= 1.0


def test_occlusion_validation():
    with pytest.raises(ValueError):
        OcclusionConfig(snow_density=1.5)
    with pytest.raises(ValueError):
        OcclusionConfig(frozenset({"middle"}))


def test_pgm_round_trip(tmp_path):
    img = render(STATE, ROUTE, OcclusionConfig(snow_density=0.5, seed=1))
    write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img[0])
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n64 64\n255\n")


def test_labeled_frame_writes_pair(tmp_path):
    pgm, js = write_labeled_frame(tmp_path, 3, render(STATE, ROUTE), {"coeffs": [0, 0, 0, 0]})
    assert pgm.name == "frame_00003.pgm" and js.name == "frame_00003.json"
