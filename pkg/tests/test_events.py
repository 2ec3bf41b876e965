import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evfi.events import (EventStream, SimulatorConfig, accumulate_event_frame,
                         log_intensity, read_events, reverse_stream,
                         simulate_events, slice_stream, write_events)

from conftest import random_stream_arrays


def make_stream(n=200, width=32, height=24, seed=0):
    rng = np.random.default_rng(seed)
    t, x, y, p = random_stream_arrays(rng, n, width, height)
    return EventStream(width, height, t, x, y, p).sorted()


class TestSimulator:
    def test_identical_frames_emit_nothing(self):
        frame = np.full((8, 8), 120.0)
        s = simulate_events([frame, frame.copy()], [0.0, 1.0])
        assert len(s) == 0

    def test_exact_double_threshold_crossing(self):
        cfg = SimulatorConfig(contrast_threshold=0.1)
        i0 = np.full((4, 4), 50.0)
        i1 = i0.copy()
        # raise one pixel by exactly 2C + epsilon in log space
        target = np.exp(np.log(50.0 + cfg.log_eps) + 2 * 0.1 + 1e-6) - cfg.log_eps
        i1[2, 1] = target
        s = simulate_events([i0, i1], [0.0, 1.0], cfg)
        assert len(s) == 2
        assert np.all(s.x == 1) and np.all(s.y == 2) and np.all(s.p == 1)

    def test_flat_square_events_hug_the_edges(self):
        # flat square over flat background: only occlusion edges change
        h = w = 48
        size, v = 16, 4
        frames, times = [], []
        x0, y0 = 10, 16
        for k in range(5):
            img = np.full((h, w), 50.0)
            xk = x0 + v * k
            img[y0:y0 + size, xk:xk + size] = 200.0
            frames.append(img)
            times.append(k * 0.25)
        s = simulate_events(frames, times, SimulatorConfig(contrast_threshold=0.1))
        assert len(s) > 0
        # oracle: analytic edge band of the moving square, one pixel wide
        near_edge = np.zeros(len(s), bool)
        for k in range(1, 5):
            xa, xb = x0 + v * (k - 1), x0 + v * k
            in_rows = (s.y >= y0 - 1) & (s.y <= y0 + size)
            horiz = in_rows & (((s.x >= xa - 1) & (s.x <= xb + size)))
            near_edge |= horiz
        assert near_edge.all()
        # tighter: every event column is within 1 px of a left/right edge
        # position or within the band swept by them
        cols_ok = ((s.x >= x0 - 1) & (s.x <= x0 + 4 * v + size)).all()
        assert cols_ok

    def test_simulator_threshold_soundness(self):
        rng = np.random.default_rng(3)
        cfg = SimulatorConfig(contrast_threshold=0.07,
                              max_events_per_pixel_per_interval=10_000)
        frames = [rng.uniform(0, 255, (6, 7)) for _ in range(5)]
        times = np.linspace(0.0, 1.0, 5)
        logs = [log_intensity(f, cfg.log_eps) for f in frames]
        s = simulate_events(frames, times, cfg)
        counts = np.zeros((6, 7))
        for k in range(1, 5):
            upto = s.t <= times[k] + 1e-12
            counts[:] = 0
            np.add.at(counts, (s.y[upto], s.x[upto]), s.p[upto])
            drift = np.abs(counts * cfg.contrast_threshold - (logs[k] - logs[0]))
            assert drift.max() < cfg.contrast_threshold

    def test_doubling_threshold_never_adds_events(self):
        rng = np.random.default_rng(4)
        frames = [rng.uniform(0, 255, (9, 9)) for _ in range(4)]
        times = [0.0, 0.3, 0.6, 1.0]
        big = SimulatorConfig(contrast_threshold=0.2,
                              max_events_per_pixel_per_interval=10_000)
        small = SimulatorConfig(contrast_threshold=0.1,
                                max_events_per_pixel_per_interval=10_000)
        assert len(simulate_events(frames, times, big)) <= \
            len(simulate_events(frames, times, small))

    def test_cap_reported(self, caplog):
        cfg = SimulatorConfig(contrast_threshold=0.001,
                              max_events_per_pixel_per_interval=4)
        i0 = np.full((2, 2), 10.0)
        i1 = np.full((2, 2), 240.0)
        with caplog.at_level("WARNING", logger="evfi.events"):
            s = simulate_events([i0, i1], [0.0, 1.0], cfg)
        assert len(s) == 4 * 4
        assert any("cap" in rec.message for rec in caplog.records)

    def test_input_validation(self):
        f = np.zeros((4, 4))
        with pytest.raises(ValueError):
            simulate_events([f], [0.0])
        with pytest.raises(ValueError):
            simulate_events([f, np.zeros((4, 5))], [0.0, 1.0])
        with pytest.raises(ValueError):
            simulate_events([f, f], [0.5, 0.5])


class TestReverse:
    def test_single_event(self):
        s = EventStream(4, 4, [0.3], [1], [2], [1])
        r = reverse_stream(s, 0.0, 1.0)
        assert r.t[0] == pytest.approx(0.7)
        assert r.p[0] == -1 and r.x[0] == 1 and r.y[0] == 2

    def test_empty(self):
        r = reverse_stream(EventStream(4, 4), 0.0, 1.0)
        assert len(r) == 0

    def test_double_reversal_bit_exact(self):
        s = make_stream(1000, seed=5)
        rr = reverse_stream(reverse_stream(s, 0.0, 1.0), 0.0, 1.0)
        assert np.array_equal(rr.t, s.t)
        assert np.array_equal(rr.x, s.x)
        assert np.array_equal(rr.y, s.y)
        assert np.array_equal(rr.p, s.p)

    def test_out_of_window_rejected(self):
        s = EventStream(4, 4, [0.5], [0], [0], [1])
        with pytest.raises(ValueError):
            reverse_stream(s, 0.0, 0.4)

    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 300))
    @settings(max_examples=25, deadline=None)
    def test_reversal_involution_property(self, seed, n):
        s = make_stream(n, seed=seed)
        rr = reverse_stream(reverse_stream(s, 0.0, 1.0), 0.0, 1.0)
        assert np.array_equal(rr.t, s.t) and np.array_equal(rr.p, s.p)


class TestAccumulate:
    def test_empty(self):
        assert accumulate_event_frame(EventStream(5, 3)).sum() == 0

    def test_count_discarded(self):
        s = EventStream(4, 4, [0.1, 0.2, 0.3], [2, 2, 2], [1, 1, 1], [1, -1, 1])
        frame = accumulate_event_frame(s)
        assert frame[1, 2] == 1 and frame.sum() == 1

    def test_matches_bruteforce_presence(self):
        s = make_stream(500, seed=6)
        frame = accumulate_event_frame(s)
        ref = np.zeros((s.height, s.width), np.uint8)
        for ev in s:
            ref[ev.y, ev.x] = 1
        assert np.array_equal(frame, ref)


class TestSlice:
    def test_full_range_identity(self):
        s = make_stream(300, seed=7)
        sl = slice_stream(s, 0.0, 2.0)
        assert np.array_equal(sl.t, s.t) and np.array_equal(sl.p, s.p)

    def test_empty_gap(self):
        s = EventStream(4, 4, [0.1, 0.9], [0, 1], [0, 1], [1, 1])
        assert len(slice_stream(s, 0.4, 0.6)) == 0

    def test_adjacent_slices_concatenate(self):
        s = make_stream(400, seed=8)
        a = slice_stream(s, 0.0, 0.5)
        b = slice_stream(s, 0.5, 2.0)
        assert np.array_equal(np.concatenate([a.t, b.t]), s.t)
        assert np.array_equal(np.concatenate([a.p, b.p]), s.p)

    def test_inverted_interval(self):
        with pytest.raises(ValueError):
            slice_stream(make_stream(10), 0.5, 0.4)

    @given(st.integers(0, 2 ** 32 - 1),
           st.lists(st.floats(0.01, 0.99), min_size=1, max_size=5))
    @settings(max_examples=25, deadline=None)
    def test_partition_conservation(self, seed, cuts):
        s = make_stream(150, seed=seed)
        bounds = [0.0] + sorted(set(cuts)) + [1.0 + 1e-9]
        parts = [slice_stream(s, a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        t = np.concatenate([p.t for p in parts])
        p = np.concatenate([pp.p for pp in parts])
        assert np.array_equal(t, s.t) and np.array_equal(p, s.p)


class TestEventFile:
    def test_round_trip(self, tmp_path):
        s = make_stream(250, seed=9)
        path = tmp_path / "events.evt"
        write_events(path, s)
        r = read_events(path)
        assert r.width == s.width and r.height == s.height
        assert np.array_equal(r.t, s.t) and np.array_equal(r.x, s.x)
        assert np.array_equal(r.y, s.y) and np.array_equal(r.p, s.p)

    def test_record_layout(self, tmp_path):
        s = make_stream(10, seed=10)
        path = tmp_path / "events.evt"
        write_events(path, s)
        data = path.read_bytes()
        assert data[:4] == b"EVT1"
        assert len(data) == 20 + 10 * 14

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.evt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError):
            read_events(path)

    def test_out_of_bounds_rejected(self, tmp_path):
        path = tmp_path / "oob.evt"
        import struct
        rec = struct.pack("<dHHbB", 0.1, 9, 0, 1, 0)
        path.write_bytes(struct.pack("<4sIIQ", b"EVT1", 4, 4, 1) + rec)
        with pytest.raises(ValueError):
            read_events(path)

    def test_bad_polarity_rejected(self, tmp_path):
        import struct
        path = tmp_path / "pol.evt"
        rec = struct.pack("<dHHbB", 0.1, 1, 1, 3, 0)
        path.write_bytes(struct.pack("<4sIIQ", b"EVT1", 4, 4, 1) + rec)
        with pytest.raises(ValueError):
            read_events(path)


class TestStreamInvariants:
    def test_bounds_checked(self):
        with pytest.raises(ValueError):
            EventStream(4, 4, [0.1], [4], [0], [1])
        with pytest.raises(ValueError):
            EventStream(4, 4, [0.1], [0], [-1], [1])
        with pytest.raises(ValueError):
            EventStream(4, 4, [0.1], [0], [0], [2])
        with pytest.raises(ValueError):
            EventStream(4, 4, [0.2, 0.1], [0, 0], [0, 0], [1, 1])
