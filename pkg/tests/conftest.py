import numpy as np
import pytest

from evfi.events import SimulatorConfig, simulate_events
from evfi.netpbm import quantize_frame
from evfi.scenes import Scene, SceneSpec
from evfi.voxel import build_voxel_grid


def random_stream_arrays(rng, n, width, height, t0=0.0, t1=1.0):
    """Sorted random event arrays on the dyadic time grid rng.random uses."""
    t = np.sort(t0 + (t1 - t0) * rng.random(n))
    x = rng.integers(0, width, n)
    y = rng.integers(0, height, n)
    p = rng.choice([-1, 1], n)
    return t, x, y, p


@pytest.fixture(scope="session")
def translate_setup():
    """Shared constant-velocity scene with events and a B=16 grid."""
    spec = SceneSpec(kind="translate", width=128, height=128,
                     velocity=(6.0, 0.0), seed=1)
    scene = Scene(spec)
    frames, times = scene.frames()
    frames_u8 = [quantize_frame(f) for f in frames]
    stream = simulate_events(frames_u8, times,
                             SimulatorConfig(contrast_threshold=0.005))
    grid = build_voxel_grid(stream, 16, float(times[0]), float(times[-1]))
    return scene, frames_u8, times, stream, grid
