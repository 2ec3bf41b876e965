import numpy as np
import pytest

from evfi.config import ConfigError, PipelineConfig, parse_config_text, serialize_config
from evfi.flow import read_flo, write_flo
from evfi.netpbm import quantize_frame, read_netpbm, write_pgm, write_ppm
from evfi.tracking import Trajectory, read_trajectories, write_trajectories


class TestNetpbm:
    def test_pgm8_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (12, 17)).astype(np.uint8)
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        assert np.array_equal(read_netpbm(path), img)

    def test_pgm16_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 65536, (9, 5)).astype(np.uint16)
        path = tmp_path / "labels.pgm"
        write_pgm(path, img, maxval=65535)
        assert np.array_equal(read_netpbm(path), img)

    def test_ppm_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 256, (6, 7, 3)).astype(np.uint8)
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        assert np.array_equal(read_netpbm(path), img)

    def test_header_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04")
        img = read_netpbm(path)
        assert np.array_equal(img, [[1, 2], [3, 4]])

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(ValueError):
            read_netpbm(path)

    def test_quantize_rounds_half_away_and_clamps(self):
        vals = np.array([[-3.0, 0.49, 0.5, 1.5, 254.5, 300.0]])
        out = quantize_frame(vals)
        assert out.tolist() == [[0, 0, 1, 2, 255, 255]]


class TestFlo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        flow = rng.normal(0, 3, (11, 13, 2)).astype(np.float32).astype(np.float64)
        path = tmp_path / "f.flo"
        write_flo(path, flow)
        assert np.array_equal(read_flo(path), flow)

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bad.flo"
        path.write_bytes(b"\x00" * 20)
        with pytest.raises(ValueError):
            read_flo(path)


class TestTrajectoryText:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        trajs = []
        for label in (3, 7):
            pos = rng.normal(50, 5, (6, 2))
            vis = rng.random(6) > 0.3
            vis[0] = True
            res = rng.random(6)
            trajs.append(Trajectory(label, pos, vis, res))
        path = tmp_path / "tracks.txt"
        write_trajectories(path, trajs)
        back = {t.label: t for t in read_trajectories(path)}
        for t in trajs:
            r = back[t.label]
            assert np.array_equal(r.positions, t.positions)
            assert np.array_equal(r.visibility, t.visibility)
            assert np.array_equal(r.residuals, t.residuals)


class TestConfig:
    def test_parse_serialize_fixed_point(self):
        text = "tracker.window_length=10\nflow.gamma1=0.01\nrun.timestamps=0.25,0.5\n"
        once = parse_config_text(text)
        again = parse_config_text(serialize_config(once))
        assert once == again
        assert parse_config_text(serialize_config(again)) == again

    def test_pipeline_config_file_round_trip(self, tmp_path):
        cfg = PipelineConfig(voxel_bins=8, tracker_max_step=5.0,
                             run_timestamps=[0.1, 0.9])
        path = tmp_path / "pipe.cfg"
        cfg.save(path)
        loaded = PipelineConfig.load(path)
        assert loaded == cfg

    def test_comments_and_blank_lines(self):
        values = parse_config_text("# header\n\nvoxel.bins=4  # inline\n")
        assert values == {"voxel.bins": 4}

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"nope.key": 1})

    def test_bounds_validated(self):
        with pytest.raises(ConfigError):
            PipelineConfig(voxel_bins=0).validate()
        with pytest.raises(ConfigError):
            PipelineConfig(run_timestamps=[1.5]).validate()
        with pytest.raises(ConfigError):
            PipelineConfig(flow_gamma1=-1.0).validate()
