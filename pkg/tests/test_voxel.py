import numpy as np
import pytest

from evfi.events import EventStream, reverse_stream
from evfi.voxel import VoxelGrid, bin_slice, build_voxel_grid, read_voxel_grid, write_voxel_grid

from conftest import random_stream_arrays


def random_stream(n, width=24, height=16, seed=0):
    rng = np.random.default_rng(seed)
    t, x, y, p = random_stream_arrays(rng, n, width, height)
    return EventStream(width, height, t, x, y, p).sorted()


def test_event_at_window_start_lands_in_bin_zero():
    s = EventStream(4, 4, [0.0], [2], [1], [1])
    g = build_voxel_grid(s, 5, 0.0, 1.0)
    assert g.values[0, 1, 2] == 1.0
    assert g.values.sum() == 1.0
    assert np.count_nonzero(g.values) == 1


def test_tent_split_at_half_bin():
    # u = 1.5 for B=5 over [0,1] -> t = 1.5/4
    s = EventStream(4, 4, [1.5 / 4.0], [0], [0], [-1])
    g = build_voxel_grid(s, 5, 0.0, 1.0)
    assert g.values[1, 0, 0] == pytest.approx(-0.5)
    assert g.values[2, 0, 0] == pytest.approx(-0.5)
    assert np.abs(g.values).sum() == pytest.approx(1.0)


def test_mass_conservation_global_and_per_pixel():
    for bins in (1, 4, 16):
        s = random_stream(10_000, seed=bins)
        g = build_voxel_grid(s, bins, 0.0, 1.0)
        total = float(s.p.astype(np.float64).sum())
        assert g.values.sum() == pytest.approx(total, rel=1e-9, abs=1e-9)
        per_pixel = np.zeros((s.height, s.width))
        np.add.at(per_pixel, (s.y, s.x), s.p.astype(np.float64))
        assert np.allclose(g.values.sum(axis=0), per_pixel, rtol=1e-9, atol=1e-9)


def test_tent_partition_of_unity_exact():
    rng = np.random.default_rng(12)
    for t in rng.random(200):
        s = EventStream(2, 2, [t], [0], [0], [1])
        g = build_voxel_grid(s, 7, 0.0, 1.0)
        assert np.abs(g.values).sum() == 1.0  # bit-exact, see rounding analysis


def test_time_reversal_symmetry():
    s = random_stream(5000, seed=3)
    fwd = build_voxel_grid(s, 8, 0.0, 1.0)
    bwd = build_voxel_grid(reverse_stream(s, 0.0, 1.0), 8, 0.0, 1.0)
    assert np.allclose(bwd.values, -fwd.values[::-1], rtol=1e-9, atol=1e-9)


def test_single_bin_equals_signed_count_image():
    s = random_stream(2000, seed=4)
    g = build_voxel_grid(s, 1, 0.0, 1.0)
    counts = np.zeros((s.height, s.width))
    np.add.at(counts, (s.y, s.x), s.p.astype(np.float64))
    assert np.array_equal(g.values[0], counts)


def test_bin_slice_contents_and_timestamps():
    s = EventStream(4, 4, [0.0], [1], [1], [1])
    g = build_voxel_grid(s, 5, 0.0, 1.0)
    sl, t0 = bin_slice(g, 0)
    assert sl[1, 1] == 1.0 and t0 == 0.0
    for k in range(1, 5):
        sl, tk = bin_slice(g, k)
        assert sl.sum() == 0.0
        assert tk == pytest.approx(k / 4.0)
    with pytest.raises(IndexError):
        bin_slice(g, 5)


def test_single_bin_timestamp_is_window_start():
    g = build_voxel_grid(EventStream(2, 2), 1, 0.5, 1.5)
    _, t = bin_slice(g, 0)
    assert t == 0.5


def test_reversed_grid_slices_match_negated_forward():
    s = random_stream(800, seed=5)
    fwd = build_voxel_grid(s, 6, 0.0, 1.0)
    bwd = build_voxel_grid(reverse_stream(s, 0.0, 1.0), 6, 0.0, 1.0)
    for k in range(6):
        a, _ = bin_slice(bwd, k)
        b, _ = bin_slice(fwd, 5 - k)
        assert np.allclose(a, -b, atol=1e-9)


def test_window_and_bin_validation():
    s = EventStream(4, 4, [0.5], [0], [0], [1])
    with pytest.raises(ValueError):
        build_voxel_grid(s, 0, 0.0, 1.0)
    with pytest.raises(ValueError):
        build_voxel_grid(s, 4, 0.6, 1.0)
    with pytest.raises(ValueError):
        VoxelGrid(2, 4, 4, 1.0, 0.5, np.zeros((2, 4, 4)))


def test_vox_file_round_trip(tmp_path):
    s = random_stream(300, seed=6)
    g = build_voxel_grid(s, 4, 0.0, 1.0)
    path = tmp_path / "grid.vox"
    write_voxel_grid(path, g)
    r = read_voxel_grid(path)
    assert (r.bins, r.width, r.height) == (4, s.width, s.height)
    assert (r.t_start, r.t_end) == (0.0, 1.0)
    assert np.array_equal(r.values, g.values.astype("<f4").astype(np.float64))
    assert path.read_bytes()[:4] == b"VOX1"


def test_vox_bad_magic(tmp_path):
    path = tmp_path / "bad.vox"
    path.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(ValueError):
        read_voxel_grid(path)
