"""Intermediate frame synthesis: warp boundary frames, fuse, in-fill occlusions.

Intermediate flows are sampled from the bidirectional any-time flow: the
field anchored at a boundary frame is negated and forward-splatted onto the
grid at time t, so each output pixel knows where to fetch its value from that
boundary frame.  Fusion weights the two backward warps by their consistency
confidences; occluded pixels take the more trusted single warp instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import AnyTimeFlow, sample_flow_at
from .sampling import bilinear


@dataclass
class FusionInputs:
    i0: np.ndarray            # boundary frame at t=0
    i1: np.ndarray            # boundary frame at t=1
    f_t0: np.ndarray          # (H, W, 2) flow t -> 0
    f_t1: np.ndarray          # (H, W, 2) flow t -> 1
    c_t0: np.ndarray          # (H, W) confidence of the I0 warp
    c_t1: np.ndarray          # (H, W) confidence of the I1 warp
    occlusion: np.ndarray     # (H, W) binary, 1 = unreliable both ways
    t: float = 0.5


def backward_warp(img: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """out(x) = img(x + flow(x)) with bilinear sampling and border clamping."""
    img = np.asarray(img, np.float64)
    if img.shape[:2] != flow.shape[:2]:
        raise ValueError("image and flow dimensions differ")
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    return bilinear(img, xx + flow[..., 0], yy + flow[..., 1])


def _splat_negate(field: np.ndarray) -> np.ndarray:
    """Re-anchor a displacement field to its destination grid.

    Each source pixel x carries value -field(x) to position x + field(x)
    (bilinear splat); uncovered pixels are filled from their neighbors.
    """
    h, w = field.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    px = (xx + field[..., 0]).ravel()
    py = (yy + field[..., 1]).ravel()
    vals = -field.reshape(-1, 2)
    acc = np.zeros((h, w, 2), np.float64)
    wacc = np.zeros((h, w), np.float64)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        cx = x0 + dx
        cy = y0 + dy
        wgt = (1 - np.abs(px - cx)) * (1 - np.abs(py - cy))
        ok = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h) & (wgt > 0)
        np.add.at(acc, (cy[ok], cx[ok]), vals[ok] * wgt[ok, None])
        np.add.at(wacc, (cy[ok], cx[ok]), wgt[ok])
    covered = wacc > 1e-12
    out = np.zeros((h, w, 2), np.float64)
    out[covered] = acc[covered] / wacc[covered, None]
    out = _fill_holes(out, covered)
    return out


def _fill_holes(field: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Jacobi passes: each hole takes the mean of its valid 3x3 neighbors."""
    if valid.all():
        return field
    if not valid.any():
        return field
    field = field.copy()
    valid = valid.copy()
    h, w = valid.shape
    while not valid.all():
        vs = np.zeros((h, w, 2), np.float64)
        ws = np.zeros((h, w), np.float64)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                ys0, ys1 = max(0, dy), min(h, h + dy)
                xs0, xs1 = max(0, dx), min(w, w + dx)
                yd0, yd1 = max(0, -dy), min(h, h - dy)
                xd0, xd1 = max(0, -dx), min(w, w - dx)
                vmask = valid[ys0:ys1, xs0:xs1]
                vs[yd0:yd1, xd0:xd1] += field[ys0:ys1, xs0:xs1] * vmask[..., None]
                ws[yd0:yd1, xd0:xd1] += vmask
        fillable = ~valid & (ws > 0)
        if not fillable.any():
            break
        field[fillable] = vs[fillable] / ws[fillable, None]
        valid |= fillable
    return field


def sample_intermediate_flows(fwd: AnyTimeFlow, bwd: AnyTimeFlow, t: float):
    """Flows (F_t->0, F_t->1) anchored at the grid of time t."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    f0t = sample_flow_at(fwd, t)            # grid 0 -> positions at t
    f1t = sample_flow_at(bwd, 1.0 - t)      # grid 1 -> positions at t
    return _splat_negate(f0t), _splat_negate(f1t)


def fuse_frames(inputs: FusionInputs) -> np.ndarray:
    """Confidence-weighted blend of the two backward warps."""
    w0 = backward_warp(inputs.i0, inputs.f_t0)
    w1 = backward_warp(inputs.i1, inputs.f_t1)
    c0 = np.asarray(inputs.c_t0, np.float64)
    c1 = np.asarray(inputs.c_t1, np.float64)
    total = c0 + c1
    a0 = np.where(total < 1e-8, 0.5, c0 / np.where(total < 1e-8, 1.0, total))
    a1 = np.where(total < 1e-8, 0.5, c1 / np.where(total < 1e-8, 1.0, total))
    if w0.ndim == 3:
        a0 = a0[..., None]
        a1 = a1[..., None]
    return a0 * w0 + a1 * w1


def infill_occlusions(fused: np.ndarray, inputs: FusionInputs,
                      threshold: float = 0.5) -> np.ndarray:
    """Replace occluded pixels with a single trusted warp.

    Where either confidence clears the threshold the higher-confidence warp
    wins; where both are below it the temporally nearer boundary frame's warp
    is used (t < 0.5 favors I0).  Unmasked pixels pass through unchanged.
    """
    occ = np.asarray(inputs.occlusion).astype(bool)
    if occ.shape != fused.shape[:2]:
        raise ValueError("occlusion mask dimensions differ")
    if not occ.any():
        return fused.copy()
    w0 = backward_warp(inputs.i0, inputs.f_t0)
    w1 = backward_warp(inputs.i1, inputs.f_t1)
    c0 = np.asarray(inputs.c_t0, np.float64)
    c1 = np.asarray(inputs.c_t1, np.float64)
    both_low = (c0 < threshold) & (c1 < threshold)
    prefer0 = np.where(both_low, inputs.t < 0.5, c0 >= c1)
    if w0.ndim == 3:
        prefer0 = prefer0[..., None]
        occ_sel = occ[..., None]
    else:
        occ_sel = occ
    replacement = np.where(prefer0, w0, w1)
    return np.where(occ_sel, replacement, fused)
