"""Synthetic benchmark scenes with closed-form motion and ground truth.

Textures are sums of random oriented cosine waves, so any frame, flow field,
or point trajectory can be evaluated exactly at any time.  Time is
normalized: t = 0 is the first boundary frame, t = 1 the last; a scene with
frame_count = N provides N full-rate frames at t = k / (N - 1) and withholds
N - 2 of them ("skips") from the interpolation pipeline.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields

import numpy as np

from . import config as cfgmod
from .flow import write_flo
from .netpbm import quantize_frame, write_pgm

SCENE_KINDS = ("translate", "sinusoid", "rotate", "two_objects", "disocclusion")


@dataclass
class SceneSpec:
    kind: str = "translate"
    width: int = 128
    height: int = 128
    skip: int = 7                  # protocol-rate frames withheld between boundaries
    render_factor: int = 8         # rendered frames per protocol step (event fidelity)
    frame_count: int = 0           # 0 = derive from skip and render_factor
    duration: float = 1.0          # seconds between the boundary frames
    seed: int = 0
    velocity: tuple = (6.0, 0.0)   # px over the whole interval
    amplitude: float = 8.0         # sinusoid / disocclusion swing, px
    cycles: float = 0.5            # sinusoid oscillations per interval
    rotation_deg: float = 15.0
    object_size: int = 48
    bg_contrast: float = 90.0
    fg_contrast: float = 70.0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError("unknown scene kind %r" % self.kind)
        if self.skip < 0 or self.render_factor < 1:
            raise ValueError("skip must be >= 0 and render_factor >= 1")
        if self.frame_count == 0:
            self.frame_count = (self.skip + 1) * self.render_factor + 1
        if self.frame_count < 2:
            raise ValueError("need at least two frames")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out["scene.%s" % f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "SceneSpec":
        kwargs = {}
        for f in fields(cls):
            key = "scene.%s" % f.name
            if key in values:
                v = values[key]
                kwargs[f.name] = tuple(v) if f.name == "velocity" else v
        return cls(**kwargs)


class _WaveTexture:
    """Smooth analytic texture: mean + sum of oriented cosine waves."""

    def __init__(self, rng, mean: float, contrast: float, waves: int = 24,
                 fmin: float = 0.03, fmax: float = 0.08):
        self.mean = mean
        angles = rng.uniform(0, np.pi, waves)
        freqs = rng.uniform(fmin, fmax, waves)
        self.kx = np.cos(angles) * freqs * 2 * np.pi
        self.ky = np.sin(angles) * freqs * 2 * np.pi
        self.phases = rng.uniform(0, 2 * np.pi, waves)
        amps = rng.uniform(0.5, 1.0, waves)
        total = amps.sum()
        self.amps = amps / total * contrast if total > 0 and contrast > 0 else amps * 0.0

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.full(np.broadcast(x, y).shape, self.mean, np.float64)
        for a, kx, ky, ph in zip(self.amps, self.kx, self.ky, self.phases):
            out += a * np.cos(kx * x + ky * y + ph)
        return out


def _soft_box(x, y, cx, cy, half):
    """Box coverage in [0, 1] with a one-pixel feathered edge."""
    ax = np.clip(half + 0.5 - np.abs(x - cx), 0.0, 1.0)
    ay = np.clip(half + 0.5 - np.abs(y - cy), 0.0, 1.0)
    return ax * ay


class Scene:
    """Renderer and oracle for one SceneSpec."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        self.bg = _WaveTexture(rng, 110.0, spec.bg_contrast)
        self.fg = [_WaveTexture(rng, 180.0, spec.fg_contrast),
                   _WaveTexture(rng, 60.0, spec.fg_contrast)]
        w, h = spec.width, spec.height
        self._grid = np.mgrid[0:h, 0:w].astype(np.float64)
        if spec.kind == "two_objects":
            self.centers = [(w * 0.3, h * 0.3), (w * 0.7, h * 0.7)]
        else:
            self.centers = [(w * 0.5, h * 0.5)]

    # motion laws -----------------------------------------------------------
    def offsets(self, t: float):
        """Per-object displacement from its t = 0 placement, in px."""
        s = self.spec
        if s.kind == "translate":
            return [(s.velocity[0] * t, s.velocity[1] * t)]
        if s.kind == "sinusoid":
            return [(s.amplitude * math.sin(2 * math.pi * s.cycles * t), 0.0)]
        if s.kind == "disocclusion":
            return [(s.amplitude * math.sin(math.pi * t), 0.0)]
        if s.kind == "two_objects":
            return [(s.velocity[0] * t, s.velocity[1] * t),
                    (-s.velocity[0] * t, -s.velocity[1] * t)]
        return [(0.0, 0.0)]  # rotate handled via the angle

    def angle(self, t: float) -> float:
        return math.radians(self.spec.rotation_deg) * t

    # rendering -------------------------------------------------------------
    def frame(self, t: float) -> np.ndarray:
        s = self.spec
        yy, xx = self._grid
        if s.kind in ("translate", "sinusoid"):
            (ox, oy), = self.offsets(t)
            return self.bg(xx - ox, yy - oy)
        if s.kind == "rotate":
            a = self.angle(t)
            cx, cy = self.centers[0]
            rx = math.cos(-a) * (xx - cx) - math.sin(-a) * (yy - cy) + cx
            ry = math.sin(-a) * (xx - cx) + math.cos(-a) * (yy - cy) + cy
            return self.bg(rx, ry)
        out = self.bg(xx, yy)
        half = s.object_size / 2.0
        for i, ((cx, cy), (ox, oy)) in enumerate(zip(self.centers, self.offsets(t))):
            alpha = _soft_box(xx, yy, cx + ox, cy + oy, half)
            tex = self.fg[i % len(self.fg)](xx - ox, yy - oy)
            out = alpha * tex + (1.0 - alpha) * out
        return out

    def frame_u8(self, t: float) -> np.ndarray:
        return quantize_frame(self.frame(t))

    def frame_times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.spec.frame_count)

    def frames(self):
        """All full-rate frames (float) with their timestamps in seconds."""
        ts = self.frame_times() * self.spec.duration
        return [self.frame(t) for t in self.frame_times()], ts

    # ground truth ----------------------------------------------------------
    def covered(self, t: float) -> np.ndarray:
        """Pixels strictly inside any foreground object at time t."""
        s = self.spec
        yy, xx = self._grid
        mask = np.zeros((s.height, s.width), bool)
        if s.kind not in ("two_objects", "disocclusion"):
            return mask
        half = s.object_size / 2.0
        for (cx, cy), (ox, oy) in zip(self.centers, self.offsets(t)):
            mask |= ((np.abs(xx - (cx + ox)) <= half) & (np.abs(yy - (cy + oy)) <= half))
        return mask

    def flow_0_to_t(self, t: float) -> np.ndarray:
        """Displacement of each t = 0 grid pixel's surface point by time t."""
        s = self.spec
        yy, xx = self._grid
        flow = np.zeros((s.height, s.width, 2), np.float64)
        if s.kind in ("translate", "sinusoid"):
            (ox, oy), = self.offsets(t)
            flow[..., 0] = ox
            flow[..., 1] = oy
        elif s.kind == "rotate":
            a = self.angle(t)
            cx, cy = self.centers[0]
            flow[..., 0] = math.cos(a) * (xx - cx) - math.sin(a) * (yy - cy) + cx - xx
            flow[..., 1] = math.sin(a) * (xx - cx) + math.cos(a) * (yy - cy) + cy - yy
        else:
            half = self.spec.object_size / 2.0
            for (cx, cy), (ox, oy) in zip(self.centers, self.offsets(t)):
                inside = ((np.abs(xx - cx) <= half) & (np.abs(yy - cy) <= half))
                flow[inside, 0] = ox
                flow[inside, 1] = oy
        return flow

    def flow_t_to_0(self, t: float) -> np.ndarray:
        """Displacement from the grid at time t back to each point's t = 0 spot."""
        s = self.spec
        yy, xx = self._grid
        flow = np.zeros((s.height, s.width, 2), np.float64)
        if s.kind in ("translate", "sinusoid"):
            (ox, oy), = self.offsets(t)
            flow[..., 0] = -ox
            flow[..., 1] = -oy
        elif s.kind == "rotate":
            a = -self.angle(t)
            cx, cy = self.centers[0]
            flow[..., 0] = math.cos(a) * (xx - cx) - math.sin(a) * (yy - cy) + cx - xx
            flow[..., 1] = math.sin(a) * (xx - cx) + math.cos(a) * (yy - cy) + cy - yy
        else:
            half = self.spec.object_size / 2.0
            for (cx, cy), (ox, oy) in zip(self.centers, self.offsets(t)):
                inside = ((np.abs(xx - (cx + ox)) <= half) & (np.abs(yy - (cy + oy)) <= half))
                flow[inside, 0] = -ox
                flow[inside, 1] = -oy
        return flow

    def flow_t_to_1(self, t: float) -> np.ndarray:
        """Displacement from the grid at time t to each point's t = 1 spot."""
        s = self.spec
        yy, xx = self._grid
        flow = np.zeros((s.height, s.width, 2), np.float64)
        if s.kind in ("translate", "sinusoid"):
            (ox, oy), = self.offsets(t)
            (ex, ey), = self.offsets(1.0)
            flow[..., 0] = ex - ox
            flow[..., 1] = ey - oy
        elif s.kind == "rotate":
            a = self.angle(1.0) - self.angle(t)
            cx, cy = self.centers[0]
            flow[..., 0] = math.cos(a) * (xx - cx) - math.sin(a) * (yy - cy) + cx - xx
            flow[..., 1] = math.sin(a) * (xx - cx) + math.cos(a) * (yy - cy) + cy - yy
        else:
            half = self.spec.object_size / 2.0
            ends = self.offsets(1.0)
            for (cx, cy), (ox, oy), (ex, ey) in zip(self.centers, self.offsets(t), ends):
                inside = ((np.abs(xx - (cx + ox)) <= half) & (np.abs(yy - (cy + oy)) <= half))
                flow[inside, 0] = ex - ox
                flow[inside, 1] = ey - oy
        return flow

    def flow_1_to_t(self, t: float) -> np.ndarray:
        """Displacement from the grid at time 1 to each point's time-t spot."""
        s = self.spec
        yy, xx = self._grid
        flow = np.zeros((s.height, s.width, 2), np.float64)
        if s.kind in ("translate", "sinusoid"):
            (ox, oy), = self.offsets(t)
            (ex, ey), = self.offsets(1.0)
            flow[..., 0] = ox - ex
            flow[..., 1] = oy - ey
        elif s.kind == "rotate":
            a = self.angle(t) - self.angle(1.0)
            cx, cy = self.centers[0]
            flow[..., 0] = math.cos(a) * (xx - cx) - math.sin(a) * (yy - cy) + cx - xx
            flow[..., 1] = math.sin(a) * (xx - cx) + math.cos(a) * (yy - cy) + cy - yy
        else:
            half = self.spec.object_size / 2.0
            ends = self.offsets(1.0)
            for (cx, cy), (ox, oy), (ex, ey) in zip(self.centers, self.offsets(t), ends):
                inside = ((np.abs(xx - (cx + ex)) <= half) & (np.abs(yy - (cy + ey)) <= half))
                flow[inside, 0] = ox - ex
                flow[inside, 1] = oy - ey
        return flow

    def point_at(self, p0, t: float):
        """Position at time t of the surface point that sits at p0 when t = 0."""
        s = self.spec
        x0, y0 = float(p0[0]), float(p0[1])
        if s.kind == "rotate":
            a = self.angle(t)
            cx, cy = self.centers[0]
            return (math.cos(a) * (x0 - cx) - math.sin(a) * (y0 - cy) + cx,
                    math.sin(a) * (x0 - cx) + math.cos(a) * (y0 - cy) + cy)
        offs = self.offsets(t)
        if s.kind in ("two_objects", "disocclusion"):
            half = s.object_size / 2.0
            for (cx, cy), (ox, oy) in zip(self.centers, offs):
                if abs(x0 - cx) <= half and abs(y0 - cy) <= half:
                    return (x0 + ox, y0 + oy)
            return (x0, y0)
        ox, oy = offs[0]
        return (x0 + ox, y0 + oy)

    def gt_trajectory(self, p0, times) -> np.ndarray:
        return np.array([self.point_at(p0, t) for t in times], np.float64)

    def disocclusion_band(self, t: float) -> np.ndarray:
        """Pixels visible at t but covered in both boundary frames."""
        return self.covered(0.0) & self.covered(1.0) & ~self.covered(t)

    def reference_points(self):
        """A few well-inside surface points for track evaluation (t = 0 grid)."""
        s = self.spec
        pts = []
        if s.kind in ("two_objects", "disocclusion"):
            q = s.object_size / 4.0
            for cx, cy in self.centers:
                pts.extend([(cx, cy), (cx - q, cy - q), (cx + q, cy + q)])
        else:
            for fy in (0.35, 0.5, 0.65):
                for fx in (0.35, 0.5, 0.65):
                    pts.append((s.width * fx, s.height * fy))
        return pts


def write_scene(spec: SceneSpec, out_dir, t_list=(0.25, 0.5, 0.75)) -> Scene:
    """Render a scene to disk: full-rate frames, spec file, ground truth.

    Deterministic for a fixed seed: regenerating produces identical bytes.
    """
    scene = Scene(spec)
    os.makedirs(out_dir, exist_ok=True)
    gt_dir = os.path.join(out_dir, "gt")
    os.makedirs(gt_dir, exist_ok=True)
    for k, t in enumerate(scene.frame_times()):
        write_pgm(os.path.join(out_dir, "frame_%03d.pgm" % k), scene.frame_u8(t))
    cfgmod.write_config(os.path.join(out_dir, "scene.cfg"), spec.to_dict())
    for t in t_list:
        write_flo(os.path.join(gt_dir, "flow_t%0.4f_to0.flo" % t), scene.flow_t_to_0(t))
        write_flo(os.path.join(gt_dir, "flow_t%0.4f_to1.flo" % t), scene.flow_t_to_1(t))
    times = scene.frame_times()
    with open(os.path.join(gt_dir, "tracks.txt"), "w") as f:
        for label, p0 in enumerate(scene.reference_points()):
            traj = scene.gt_trajectory(p0, times)
            for k in range(len(times)):
                f.write("%d %d %.17g %.17g 1 0\n" % (label, k, traj[k, 0], traj[k, 1]))
    return scene


def load_scene(scene_dir) -> Scene:
    spec = SceneSpec.from_dict(cfgmod.read_config(os.path.join(scene_dir, "scene.cfg")))
    return Scene(spec)
