"""Dense any-time optical flow from region trajectories.

Trajectories fill their regions with cumulative displacements (coarse flow);
guide-weighted median fill plus edge-aware diffusion turn that into a
complete smooth field that respects guide-image edges; forward-backward
consistency yields a confidence map, and low confidence in both directions
marks occlusion.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .sampling import bilinear

FLO_MAGIC = 202021.25


@dataclass
class AnyTimeFlow:
    """Displacement fields anchored at one boundary frame.

    flow[k] maps that frame's grid to positions at bin time times[k] (a
    fraction of the tracked interval, so times[0] == 0 and flow[0] == 0).
    """

    direction: str            # "forward" (from frame 0) | "backward" (from frame 1)
    times: np.ndarray         # (B,) fractions in [0, 1]
    flow: np.ndarray          # (B, H, W, 2) in px
    valid: np.ndarray         # (B, H, W) bool

    @property
    def bins(self):
        return len(self.times)


def consolidate_trajectories(trajectories, regions, guide: np.ndarray,
                             radius: float = None, appearance_sigma: float = 20.0):
    """Appearance-weighted median consensus among neighboring region tracks.

    Each region's per-bin displacement is replaced by the weighted median of
    the displacements of nearby regions, weighted by how similar their mean
    intensities are.  Similar-looking neighbors share motion (the premise of
    region-based tracking), so the consensus suppresses single-region
    failures without mixing motion across appearance boundaries.
    """
    from .tracking import Trajectory
    guide = np.asarray(guide, np.float64)
    regs = {r.label: r for r in regions}
    trajs = [t for t in trajectories if t.label in regs]
    n = len(trajs)
    if n == 0:
        return list(trajectories)
    centroids = np.zeros((n, 2))
    means = np.zeros(n)
    sizes = np.zeros(n)
    for i, t in enumerate(trajs):
        px = regs[t.label].pixels
        centroids[i] = (px[:, 1].mean(), px[:, 0].mean())
        means[i] = guide[px[:, 0], px[:, 1]].mean()
        sizes[i] = len(px)
    if radius is None:
        radius = 3.0 * math.sqrt(float(np.median(sizes)))
    dist2 = ((centroids[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    close = dist2 <= radius * radius
    appearance = np.exp(-((means[:, None] - means[None, :]) ** 2)
                        / (2.0 * appearance_sigma ** 2))
    weights = np.where(close, appearance, 0.0)
    B = len(trajs[0].positions)
    disp = np.stack([t.positions - t.positions[0] for t in trajs])   # (n, B, 2)
    vis = np.stack([t.visibility for t in trajs])                    # (n, B)
    out = []
    for i, t in enumerate(trajs):
        w = weights[i].copy()
        w[i] = max(w[i], 1.0)  # a region always votes for itself
        new = disp[i].copy()
        for k in range(1, B):
            wk = w * vis[:, k]
            for c in range(2):
                new[k, c] = _scalar_weighted_median(disp[:, k, c], wk)
        positions = t.positions[0][None, :] + new
        out.append(Trajectory(t.label, positions, t.visibility.copy(),
                              t.residuals.copy()))
    by_label = {t.label: t for t in out}
    return [by_label.get(t.label, t) for t in trajectories]


def _scalar_weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    sval = values[order]
    swt = weights[order]
    cum = np.cumsum(swt)
    total = cum[-1]
    if total <= 0:
        return float(values[0])
    k = int(np.argmax(cum >= 0.5 * total - 1e-15))
    return float(sval[k])


def densify_flow(trajectories, regions, dims, direction: str = "forward") -> AnyTimeFlow:
    """Coarse dense flow: each region pixel takes its trajectory's cumulative
    displacement per bin; static pixels stay zero and valid; bins where a
    trajectory is invisible are marked invalid for that region."""
    by_label = {t.label: t for t in trajectories}
    for region in regions:
        if region.label not in by_label:
            raise ValueError("no trajectory for region %d" % region.label)
    h, w = dims
    B = len(next(iter(by_label.values())).positions) if by_label else 1
    flow = np.zeros((B, h, w, 2), np.float64)
    valid = np.ones((B, h, w), bool)
    for region in regions:
        traj = by_label[region.label]
        ys = region.pixels[:, 0]
        xs = region.pixels[:, 1]
        disp = traj.positions - traj.positions[0]
        for k in range(B):
            flow[k, ys, xs] = disp[k]
            if not traj.visibility[k]:
                valid[k, ys, xs] = False
    times = np.linspace(0.0, 1.0, B) if B > 1 else np.zeros(1)
    return AnyTimeFlow(direction, times, flow, valid)


_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]


def _shift_planes(arr: np.ndarray):
    """Stack the 8 one-pixel shifts of (..., H, W) planes along a new axis 0."""
    h, w = arr.shape[-2:]
    stacks = np.zeros((len(_OFFSETS),) + arr.shape, arr.dtype)
    for i, (dy, dx) in enumerate(_OFFSETS):
        ys0, ys1 = max(0, dy), min(h, h + dy)
        xs0, xs1 = max(0, dx), min(w, w + dx)
        yd0, yd1 = max(0, -dy), min(h, h - dy)
        xd0, xd1 = max(0, -dx), min(w, w - dx)
        stacks[i, ..., yd0:yd1, xd0:xd1] = arr[..., ys0:ys1, xs0:xs1]
    return stacks


def _inbounds_mask(h: int, w: int) -> np.ndarray:
    inb = np.zeros((len(_OFFSETS), h, w), bool)
    for i, (dy, dx) in enumerate(_OFFSETS):
        yd0, yd1 = max(0, -dy), min(h, h - dy)
        xd0, xd1 = max(0, -dx), min(w, w - dx)
        inb[i, yd0:yd1, xd0:xd1] = True
    return inb


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted median along axis 0; zero total weight yields 0 (mask it)."""
    order = np.argsort(values, axis=0, kind="stable")
    sval = np.take_along_axis(values, order, axis=0)
    swt = np.take_along_axis(weights, order, axis=0)
    cum = np.cumsum(swt, axis=0)
    total = cum[-1]
    target = 0.5 * total
    pick = np.argmax(cum >= target[None, ...] - 1e-15, axis=0)
    return np.take_along_axis(sval, pick[None, ...], axis=0)[0]


def _guide_weights(guide: np.ndarray, sigma: float) -> np.ndarray:
    g = np.asarray(guide, np.float32)
    shifted = _shift_planes(g)
    w = np.exp(-((shifted - g[None, ...]) ** 2) / np.float32(2.0 * sigma * sigma))
    w[~_inbounds_mask(*g.shape)] = 0.0
    return w


def refine_flow(coarse: AnyTimeFlow, guide: np.ndarray, iters: int = 30,
                lambda_smooth: float = 0.1, guide_sigma: float = 15.0) -> AnyTimeFlow:
    """Edge-aware fill and smoothing of the coarse flow.

    Invalid pixels are filled by guide-weighted medians of valid neighbors
    (repeated until the field is complete); then `iters` damped diffusion
    passes move each pixel toward the guide-weighted neighborhood average,
    smoothing flat guide areas while strong guide edges keep flow
    discontinuities sharp.  The update is written in delta form, so a
    globally constant valid field is an exact fixed point.  All bins are
    processed together in float32, matching the flow file precision.
    """
    gw = _guide_weights(guide, guide_sigma)
    field = coarse.flow.astype(np.float32).transpose(3, 0, 1, 2).copy()  # (2,B,H,W)
    valid = coarse.valid.copy()
    lam = np.float32(lambda_smooth)
    while not valid.all():
        vstack = _shift_planes(valid.astype(np.float32))
        weights = gw[:, None] * vstack
        total = weights.sum(axis=0)
        fillable = ~valid & (total > 0)
        if not fillable.any():
            break
        for c in range(2):
            med = _weighted_median(_shift_planes(field[c]), weights)
            field[c][fillable] = med[fillable]
        valid |= fillable
    gwb = gw[:, None]
    wsum = gw.sum(axis=0)
    wsum = np.where(wsum > 0, wsum, np.float32(1.0))[None]
    for _ in range(iters):
        new = np.empty_like(field)
        for c in range(2):
            delta = ((_shift_planes(field[c]) - field[c][None]) * gwb).sum(axis=0)
            new[c] = field[c] + lam * (delta / wsum)
        if np.array_equal(new, field):
            break
        field = new
    out_flow = field.transpose(1, 2, 3, 0).astype(np.float64)
    return AnyTimeFlow(coarse.direction, coarse.times.copy(), out_flow,
                       np.ones_like(coarse.valid))


def confidence_map(f_fwd: np.ndarray, f_bwd: np.ndarray,
                   gamma1: float = 0.01, gamma2: float = 0.5) -> np.ndarray:
    """Forward-backward consistency confidence in (0, 1].

    C(x) = exp(-|F(x) + G(x + F(x))|^2 / (g1 (|F(x)|^2 + |G(x+F(x))|^2) + g2))
    with G sampled bilinearly (border clamp) at the mapped position.
    """
    if f_fwd.shape != f_bwd.shape:
        raise ValueError("flow field dimensions differ")
    h, w = f_fwd.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    tx = xx + f_fwd[..., 0]
    ty = yy + f_fwd[..., 1]
    g = bilinear(f_bwd, tx, ty)
    resid = ((f_fwd + g) ** 2).sum(axis=-1)
    denom = gamma1 * ((f_fwd ** 2).sum(axis=-1) + (g ** 2).sum(axis=-1)) + gamma2
    return np.exp(-resid / denom)


def occlusion_mask(conf_fwd: np.ndarray, conf_bwd: np.ndarray,
                   threshold: float = 0.5) -> np.ndarray:
    """1 where both directions fall below the confidence threshold."""
    if conf_fwd.shape != conf_bwd.shape:
        raise ValueError("confidence map dimensions differ")
    return ((conf_fwd < threshold) & (conf_bwd < threshold)).astype(np.uint8)


def sample_flow_at(f: AnyTimeFlow, t: float) -> np.ndarray:
    """Field at fractional time t, linearly interpolated between bin fields."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    times = f.times
    if f.bins == 1 or t <= times[0]:
        return f.flow[0].copy()
    k = int(np.searchsorted(times, t, side="right") - 1)
    if k >= f.bins - 1:
        return f.flow[-1].copy()
    span = times[k + 1] - times[k]
    a = (t - times[k]) / span
    return (1.0 - a) * f.flow[k] + a * f.flow[k + 1]


def write_flo(path, flow: np.ndarray) -> None:
    """Middlebury format: f32 magic, i32 width/height, interleaved f32 (u, v)."""
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError("flow must be (H, W, 2)")
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, w, h))
        f.write(flow.astype("<f4").tobytes())


def read_flo(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) != 12:
            raise ValueError("truncated flo header")
        magic, w, h = struct.unpack("<fii", header)
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise ValueError("bad magic in flo file")
        raw = f.read(w * h * 2 * 4)
    if len(raw) != w * h * 2 * 4:
        raise ValueError("truncated flo data")
    return np.frombuffer(raw, "<f4").astype(np.float64).reshape(h, w, 2)
