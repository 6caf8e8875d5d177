import numpy as np
import pytest

from otvelo import GridGeometry, IntensityRaster, matches_to_csv, ncc_displacements
from otvelo.ncc import CSV_HEADER


def pair_from(base, shift_rows, shift_cols, pixel_size=250.0):
    g = GridGeometry(base.shape[1], base.shape[0], pixel_size)
    src = IntensityRaster(g, base, 0.0)
    tgt = IntensityRaster(g, np.roll(base, (shift_rows, shift_cols), (0, 1)),
                          86400.0)
    return src, tgt


def test_exact_shift_recovered_on_interior_tiles():
    rng = np.random.default_rng(5)
    base = rng.uniform(0.0, 255.0, (64, 64))
    src, tgt = pair_from(base, -2, 3)
    matches = ncc_displacements(src, tgt, window=16, search_radius=5,
                                threshold=0.25)
    assert len(matches) > 0
    interior = [m for m in matches
                if 8 <= m.center_x <= 55 and 8 <= m.center_y <= 55]
    assert interior
    for m in interior:
        assert (m.dx, m.dy) == (3, -2)
        assert m.correlation == pytest.approx(1.0, abs=1e-9)


def test_all_matches_respect_threshold():
    rng = np.random.default_rng(6)
    base = rng.uniform(0.0, 255.0, (48, 48))
    src, tgt = pair_from(base, 1, -1)
    for threshold in (0.25, 0.9):
        matches = ncc_displacements(src, tgt, window=12, search_radius=3,
                                    threshold=threshold)
        assert all(m.correlation >= threshold for m in matches)


def test_zero_variance_windows_skipped():
    base = np.zeros((32, 32))
    base[12:20, 12:20] = 255.0  # one feature; most tiles are flat
    src, tgt = pair_from(base, 0, 2)
    matches = ncc_displacements(src, tgt, window=8, search_radius=2,
                                threshold=0.25)
    # flat tiles produce no match instead of 0/0 correlations
    for m in matches:
        assert np.isfinite(m.correlation)


def test_affine_intensity_invariance():
    rng = np.random.default_rng(7)
    base = rng.uniform(10.0, 100.0, (40, 40))
    src, tgt = pair_from(base, 2, 1)
    plain = ncc_displacements(src, tgt, window=10, search_radius=3)

    g = src.geometry
    src2 = IntensityRaster(g, np.clip(2.0 * src.values + 10.0, 0, 255), 0.0)
    tgt2 = IntensityRaster(g, np.clip(2.0 * tgt.values + 10.0, 0, 255), 86400.0)
    scaled = ncc_displacements(src2, tgt2, window=10, search_radius=3)
    assert len(plain) == len(scaled)
    for a, b in zip(plain, scaled):
        assert (a.dx, a.dy) == (b.dx, b.dy)
        assert a.correlation == pytest.approx(b.correlation, abs=1e-9)


def test_search_radius_bounds_displacement():
    rng = np.random.default_rng(9)
    base = rng.uniform(0.0, 255.0, (40, 40))
    src, tgt = pair_from(base, 0, 6)
    matches = ncc_displacements(src, tgt, window=10, search_radius=2,
                                threshold=0.01)
    for m in matches:
        assert abs(m.dx) <= 2 and abs(m.dy) <= 2


def test_stride_defaults_to_window():
    rng = np.random.default_rng(10)
    base = rng.uniform(0.0, 255.0, (64, 64))
    src, tgt = pair_from(base, 0, 1)
    matches = ncc_displacements(src, tgt, window=16, search_radius=2)
    xs = sorted({m.center_x for m in matches})
    assert xs == [7.5, 23.5, 39.5]  # tiles at 0, 16, 32 (48 cannot shift)


def test_window_validation():
    rng = np.random.default_rng(11)
    base = rng.uniform(0.0, 255.0, (32, 32))
    src, tgt = pair_from(base, 0, 0)
    with pytest.raises(ValueError):
        ncc_displacements(src, tgt, window=4)
    with pytest.raises(ValueError):
        ncc_displacements(src, tgt, window=40)
    with pytest.raises(ValueError):
        ncc_displacements(src, tgt, window=16, threshold=0.0)
    with pytest.raises(ValueError):
        ncc_displacements(src, tgt, window=16, search_radius=0)


def test_csv_output(tmp_path):
    rng = np.random.default_rng(12)
    base = rng.uniform(0.0, 255.0, (48, 48))
    src, tgt = pair_from(base, 0, 2)
    matches = ncc_displacements(src, tgt, window=12, search_radius=3)
    path = tmp_path / "matches.csv"
    matches_to_csv(matches, path, pixel_size=250.0, dt=86400.0)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == len(matches) + 1
    first = lines[1].split(",")
    assert float(first[2]) == matches[0].dx
    # m/s columns are px * pixel_size / dt
    assert float(first[4]) == pytest.approx(matches[0].dx * 250.0 / 86400.0)
