"""Voxel grids: signed temporal histograms of events with tent weighting.

Each event lands at a fractional bin position u = (t - t_start) / (t_end -
t_start) * (B - 1) and splits its polarity between bins floor(u) and ceil(u)
with weights (1 - frac, frac).  Normalization uses the caller-supplied window,
not the first/last event timestamps, so grids over fixed windows stay
comparable when streams are sliced and the empty stream is well defined.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .events import EventStream

VOX_MAGIC = b"VOX1"
_VOX_HEADER = struct.Struct("<4sIIIdd")


@dataclass
class VoxelGrid:
    """B x H x W signed accumulation over the window [t_start, t_end]."""

    bins: int
    width: int
    height: int
    t_start: float
    t_end: float
    values: np.ndarray  # (B, H, W) float64

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bin count must be >= 1")
        if not self.t_start < self.t_end:
            raise ValueError("t_start must precede t_end")
        self.values = np.asarray(self.values, np.float64)
        if self.values.shape != (self.bins, self.height, self.width):
            raise ValueError("voxel values shape mismatch")

    def bin_time(self, k: int) -> float:
        """Center timestamp of bin k (t_start when B == 1)."""
        if self.bins == 1:
            return self.t_start
        return self.t_start + (self.t_end - self.t_start) * k / (self.bins - 1)


def build_voxel_grid(s: EventStream, bins: int, t_start: float, t_end: float) -> VoxelGrid:
    """Deposit tent-weighted polarities into a B-bin grid.

    Accumulation follows stream order so single-threaded builds are bitwise
    deterministic.
    """
    if bins < 1:
        raise ValueError("bin count must be >= 1")
    if len(s) and (s.t[0] < t_start or s.t[-1] > t_end):
        raise ValueError("events outside voxel window")
    values = np.zeros((bins, s.height, s.width), np.float64)
    if len(s):
        if bins == 1:
            u = np.zeros(len(s), np.float64)
        else:
            u = (s.t - t_start) / (t_end - t_start) * (bins - 1)
        k0 = np.floor(u).astype(np.int64)
        k0 = np.minimum(k0, bins - 1)
        frac = u - k0
        pol = s.p.astype(np.float64)
        flat = values.reshape(bins, -1)
        idx = s.y.astype(np.int64) * s.width + s.x
        np.add.at(flat, (k0, idx), pol * (1.0 - frac))
        upper = frac > 0.0
        if np.any(upper):
            np.add.at(flat, (k0[upper] + 1, idx[upper]), pol[upper] * frac[upper])
    return VoxelGrid(bins, s.width, s.height, t_start, t_end, values)


def bin_slice(v: VoxelGrid, k: int):
    """Return (H x W slice of bin k, its center timestamp)."""
    if not 0 <= k < v.bins:
        raise IndexError("bin index out of range")
    return v.values[k], v.bin_time(k)


def write_voxel_grid(path, v: VoxelGrid) -> None:
    """Raw dump: VOX1 magic, dims, window, then B*H*W little-endian f32."""
    with open(path, "wb") as f:
        f.write(_VOX_HEADER.pack(VOX_MAGIC, v.bins, v.width, v.height, v.t_start, v.t_end))
        f.write(v.values.astype("<f4").tobytes())


def read_voxel_grid(path) -> VoxelGrid:
    with open(path, "rb") as f:
        header = f.read(_VOX_HEADER.size)
        if len(header) != _VOX_HEADER.size:
            raise ValueError("truncated voxel file header")
        magic, bins, width, height, t_start, t_end = _VOX_HEADER.unpack(header)
        if magic != VOX_MAGIC:
            raise ValueError("bad magic in voxel file")
        raw = f.read(bins * height * width * 4)
    if len(raw) != bins * height * width * 4:
        raise ValueError("truncated voxel data")
    values = np.frombuffer(raw, "<f4").astype(np.float64).reshape(bins, height, width)
    return VoxelGrid(bins, width, height, t_start, t_end, values)
