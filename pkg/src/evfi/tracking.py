"""Per-region point tracking over voxel-bin features.

Each motion region contributes one query point (best corner with event
support, else the event location nearest that corner).  Features are
multi-scale average-pooled magnitudes of the voxel slices; a query is carried
bin to bin by an integer correlation search refined to sub-pixel accuracy,
inside sliding windows that overlap by half their length and warm-start from
the previous window's estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .events import EventStream, accumulate_event_frame
from .sampling import bilinear
from .segmentation import RegionSet
from .voxel import VoxelGrid

_ZNCC_EPS = 1e-12


@dataclass(frozen=True)
class TrackerConfig:
    window_length: int = 10
    refine_iters: int = 5
    patch_radius: int = 5
    max_step: float = 8.0
    visibility_threshold: float = 0.3
    # scalar pooled features lose sub-stride detail, so the pyramid starts at
    # full resolution; four octaves as in the multi-scale correlation design
    scales: tuple = (1, 2, 4, 8)
    corner_rel_threshold: float = 0.01

    def __post_init__(self):
        if self.window_length < 2:
            raise ValueError("window_length must be >= 2")
        if self.refine_iters < 1:
            raise ValueError("refine_iters must be >= 1")


@dataclass(frozen=True)
class QueryPoint:
    label: int
    position: tuple          # (x, y), sub-pixel
    source: str              # "corner" | "nearest_event"


@dataclass
class FeaturePyramid:
    bins: int
    width: int
    height: int
    scales: tuple
    levels: dict             # scale -> (B, ceil(H/s), ceil(W/s)) float64


@dataclass
class Trajectory:
    label: int
    positions: np.ndarray    # (B, 2) of (x, y)
    visibility: np.ndarray   # (B,) bool
    residuals: np.ndarray    # (B,) matching cost per sample


def average_pool(img: np.ndarray, factor: int) -> np.ndarray:
    """Mean over factor x factor cells; ragged border cells average what they cover."""
    if factor == 1:
        return img.copy()
    h, w = img.shape
    h2 = -(-h // factor)
    w2 = -(-w // factor)
    yy, xx = np.mgrid[0:h, 0:w]
    sums = np.zeros((h2, w2), np.float64)
    np.add.at(sums, (yy // factor, xx // factor), img)
    counts = np.zeros((h2, w2), np.float64)
    np.add.at(counts, (yy // factor, xx // factor), 1.0)
    return sums / counts


def build_feature_pyramid(v: VoxelGrid, scales=(1, 2, 4, 8)) -> FeaturePyramid:
    """Per bin: |slice| -> 3x3 box smoothing -> max-normalize -> pooled chain.

    Every pooling step smooths again first; without that, texture near a
    level's Nyquist aliases onto the pooled grid and anchors the correlation.
    """
    if v.bins < 2:
        raise ValueError("need at least two bins to build features")
    scales = tuple(sorted(int(s) for s in scales))
    base = np.empty_like(v.values)
    for k in range(v.bins):
        s = ndimage.uniform_filter(np.abs(v.values[k]), size=3, mode="nearest")
        m = s.max()
        base[k] = s / m if m > 0 else s
    levels = {}
    prev = base
    prev_scale = 1
    for s in scales:
        ratio = s // prev_scale
        if prev_scale * ratio != s:
            raise ValueError("scales must form an integer pooling chain")
        if ratio > 1:
            smoothed = ndimage.uniform_filter(prev, size=(1, 3, 3), mode="nearest")
            pooled = np.stack([average_pool(smoothed[k], ratio) for k in range(v.bins)])
        else:
            pooled = prev.copy()
        levels[s] = pooled
        prev = pooled
        prev_scale = s
    return FeaturePyramid(v.bins, v.width, v.height, scales, levels)


_OFFSET_CACHE = {}


def _patch_offsets(r: int):
    if r not in _OFFSET_CACHE:
        off = np.arange(-r, r + 1, dtype=np.float64)
        ox, oy = np.meshgrid(off, off)
        _OFFSET_CACHE[r] = (ox.ravel()[None, :], oy.ravel()[None, :])
    return _OFFSET_CACHE[r]


def _patches(feature: np.ndarray, centers: np.ndarray, scale: int, r: int):
    """Sample (N, (2r+1)^2) bilinear patches at image-space centers (N, 2).

    Also returns which samples fell inside the feature grid: border-clamped
    samples are static content that would anchor matching, so ZNCC drops
    them.
    """
    h, w = feature.shape
    ox, oy = _patch_offsets(r)
    fx = (centers[:, 0, None] - (scale - 1) / 2.0) / scale + ox
    fy = (centers[:, 1, None] - (scale - 1) / 2.0) / scale + oy
    inside = (fx >= 0) & (fx <= w - 1) & (fy >= 0) & (fy <= h - 1)
    return bilinear(feature, fx, fy), inside


def _masked_zncc(a: np.ndarray, b: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Row-wise ZNCC over the jointly valid samples; flat patches score 0."""
    count = valid.sum(axis=-1)
    ok_rows = count >= 4
    cnt = np.where(ok_rows, count, 1).astype(np.float64)
    av = np.where(valid, a, 0.0)
    bv = np.where(valid, b, 0.0)
    ma = av.sum(axis=-1) / cnt
    mb = bv.sum(axis=-1) / cnt
    a0 = np.where(valid, a - ma[..., None], 0.0)
    b0 = np.where(valid, b - mb[..., None], 0.0)
    na = np.sqrt((a0 * a0).sum(axis=-1))
    nb = np.sqrt((b0 * b0).sum(axis=-1))
    num = (a0 * b0).sum(axis=-1)
    denom = na * nb
    out = np.zeros(num.shape, np.float64)
    ok = ok_rows & (denom > _ZNCC_EPS)
    np.divide(num, denom, out=out, where=ok)
    return out


def _cost_batch(p: FeaturePyramid, pos: np.ndarray, ka: int, kb: int,
                cands: np.ndarray, r: int, scales=None, anchors=None) -> np.ndarray:
    """Correlation costs for per-region candidate displacements.

    pos is (R, 2), cands (R, C, 2); returns (R, C) costs of matching bin ka
    at pos against bin kb at pos + d.  Every operation is row-local, so the
    result for a region never depends on which others share the batch.
    """
    scales = p.scales if scales is None else scales
    n_regions, n_cands = cands.shape[:2]
    centers_b = (pos[:, None, :] + cands).reshape(n_regions * n_cands, 2)
    zsum = np.zeros((n_regions, n_cands), np.float64)
    for s in scales:
        if anchors is not None:
            pa, va = anchors[s]
        else:
            pa, va = _patches(p.levels[s][ka], pos, s, r)
        pb, vb = _patches(p.levels[s][kb], centers_b, s, r)
        samples = pb.shape[-1]
        pb = pb.reshape(n_regions, n_cands, samples)
        vb = vb.reshape(n_regions, n_cands, samples)
        zsum += _masked_zncc(pa[:, None, :], pb, va[:, None, :] & vb)
    return 1.0 - zsum / len(scales)


def local_correlation(p: FeaturePyramid, pos, k: int, d) -> float:
    """Matching cost between bin k at pos and bin k+1 at pos + d."""
    if not k + 1 < p.bins:
        raise IndexError("bin k+1 out of range")
    pos = np.asarray(pos, np.float64)[None, :]
    cand = np.asarray(d, np.float64)[None, None, :]
    return float(_cost_batch(p, pos, k, k + 1, cand, r=3)[0, 0])


def _candidate_grid(max_step: float) -> np.ndarray:
    """Integer displacement grid ordered by (|d|^2, dx, dy) for tie-breaking."""
    m = int(np.floor(max_step))
    axis = np.arange(-m, m + 1)
    dx, dy = np.meshgrid(axis, axis)
    cands = np.stack([dx.ravel(), dy.ravel()], axis=1).astype(np.float64)
    order = np.lexsort((cands[:, 1], cands[:, 0], (cands ** 2).sum(axis=1)))
    return cands[order]


def _parabola_shift(c_minus: np.ndarray, c_0: np.ndarray, c_plus: np.ndarray,
                    h: float) -> np.ndarray:
    """Vertex offsets of parabolas through three points spaced h apart."""
    denom = c_minus - 2.0 * c_0 + c_plus
    ok = denom > _ZNCC_EPS
    shift = np.where(ok, 0.5 * h * (c_minus - c_plus) / np.where(ok, denom, 1.0), 0.0)
    return np.clip(shift, -h, h)


def _refine_pair_batch(p: FeaturePyramid, pos: np.ndarray, ka: int, kb: int,
                       d_init: np.ndarray, grid: np.ndarray, limit: float,
                       cfg: TrackerConfig):
    """Displacement estimates (R, 2) between bins ka and kb, anchored at pos.

    Iteration 1 sweeps the integer grid around the initialization, scored on
    the coarsest level (cheap, wide context); the shortlist survives only if
    the full multi-scale cost agrees.  Each further iteration probes at a
    halved spacing and fits 1-D parabolas per axis, so M iterations resolve
    to roughly 2^(1-M) px.  A candidate only replaces the current estimate
    when its cost is strictly lower, which keeps the search sound: the final
    cost never exceeds the cost at the initialization.
    """
    r = cfg.patch_radius
    anchors = {s: _patches(p.levels[s][ka], pos, s, r) for s in p.scales}
    d = np.clip(np.asarray(d_init, np.float64), -limit, limit)
    cost_d = _cost_batch(p, pos, ka, kb, d[:, None, :], r, anchors=anchors)[:, 0]
    # warm starts keep the optimum nearby: try a +-2 px ring first and run
    # the wide sweep only for regions whose best ring match is still poor
    ring = _candidate_grid(min(2.0, cfg.max_step))
    cands = np.clip(np.round(d)[:, None, :] + ring[None, :, :], -limit, limit)
    costs = _cost_batch(p, pos, ka, kb, cands, r, anchors=anchors)
    best = np.argmin(costs, axis=1)
    best_cost = np.take_along_axis(costs, best[:, None], axis=1)[:, 0]
    best_d = np.take_along_axis(cands, best[:, None, None], axis=1)[:, 0]
    better = best_cost < cost_d
    d = np.where(better[:, None], best_d, d)
    cost_d = np.where(better, best_cost, cost_d)
    need = cost_d > 1.0 - cfg.visibility_threshold
    if np.any(need) and len(grid) > len(ring):
        sub = np.nonzero(need)[0]
        pos_s = pos[sub]
        anchors_s = {s: (anchors[s][0][sub], anchors[s][1][sub]) for s in p.scales}
        cands = np.clip(np.round(d[sub])[:, None, :] + grid[None, :, :], -limit, limit)
        coarse = _cost_batch(p, pos_s, ka, kb, cands, r, scales=(p.scales[-1],),
                             anchors=anchors_s)
        top = np.argsort(coarse, axis=1, kind="stable")[:, :8]
        shortlist = np.take_along_axis(cands, top[:, :, None], axis=1)
        costs = _cost_batch(p, pos_s, ka, kb, shortlist, r, anchors=anchors_s)
        best = np.argmin(costs, axis=1)
        best_cost = np.take_along_axis(costs, best[:, None], axis=1)[:, 0]
        best_d = np.take_along_axis(shortlist, best[:, None, None], axis=1)[:, 0]
        better = best_cost < cost_d[sub]
        d[sub] = np.where(better[:, None], best_d, d[sub])
        cost_d[sub] = np.where(better, best_cost, cost_d[sub])
    h = 0.5
    for _ in range(cfg.refine_iters - 1):
        probes = np.stack([d + (-h, 0), d + (h, 0), d + (0, -h), d + (0, h)], axis=1)
        probes = np.clip(probes, -limit, limit)
        pc = _cost_batch(p, pos, ka, kb, probes, r, anchors=anchors)
        shift = np.stack([_parabola_shift(pc[:, 0], cost_d, pc[:, 1], h),
                          _parabola_shift(pc[:, 2], cost_d, pc[:, 3], h)], axis=1)
        cand = np.clip(d + shift, -limit, limit)
        cand_cost = _cost_batch(p, pos, ka, kb, cand[:, None, :], r,
                                anchors=anchors)[:, 0]
        opt_costs = np.concatenate([cost_d[:, None], pc, cand_cost[:, None]], axis=1)
        opt_ds = np.concatenate([d[:, None, :], probes, cand[:, None, :]], axis=1)
        idx = np.argmin(opt_costs, axis=1)
        cost_d = np.take_along_axis(opt_costs, idx[:, None], axis=1)[:, 0]
        d = np.take_along_axis(opt_ds, idx[:, None, None], axis=1)[:, 0]
        h *= 0.5
    # visibility judges the finest scale alone: coarse patches reach far
    # enough to lock onto other objects when the region itself is silent
    fine = 1.0 - _cost_batch(p, pos, ka, kb, d[:, None, :], r,
                             scales=(p.scales[0],), anchors=anchors)[:, 0]
    return d, cost_d, fine


def _content_time(b: int, bins: int) -> float:
    """Effective temporal centroid of bin b, in bin units.

    Interior tents are symmetric around their bin time; the first and last
    tents are truncated, pulling their content a third of a bin inward.
    """
    if b == 0:
        return 1.0 / 3.0
    if b == bins - 1:
        return bins - 1 - 1.0 / 3.0
    return float(b)


def _step_pair(k: int, bins: int):
    """Bins matched for the step k -> k+1.

    Adjacent tents overlap, so they share events whose granularity anchors
    correlation at zero displacement; a two-bin baseline has disjoint tents
    and stays unbiased.  Edge steps fall back to the nearest valid pair.
    """
    if bins < 3:
        return k, k + 1
    if k == 0:
        return 0, 2
    if k + 1 == bins - 1:
        return bins - 3, bins - 1
    return k - 1, k + 1


def _track_chunk(p: FeaturePyramid, queries, grid: np.ndarray,
                 cfg: TrackerConfig) -> list:
    n = len(queries)
    B = p.bins
    positions = np.zeros((n, B, 2), np.float64)
    visibility = np.zeros((n, B), bool)
    residuals = np.zeros((n, B), np.float64)
    positions[:, 0] = [q.position for q in queries]
    visibility[:, 0] = True

    L = cfg.window_length
    last_visible_d = np.zeros((n, 2), np.float64)
    estimated_until = 0
    w0 = 0
    while True:
        w_end = min(w0 + L - 1, B - 1)
        for k in range(w0, w_end):
            ka, kb = _step_pair(k, B)
            gap = _content_time(kb, B) - _content_time(ka, B)
            if k + 1 <= estimated_until:
                v_init = positions[:, k + 1] - positions[:, k]
            elif k > 0:
                v_init = positions[:, k] - positions[:, k - 1]
            else:
                v_init = np.zeros((n, 2), np.float64)
            limit = cfg.max_step * max(gap, 1.0)
            d_pair, cost, fine = _refine_pair_batch(p, positions[:, ka], ka, kb,
                                                    v_init * gap, grid, limit, cfg)
            d = np.clip(d_pair / gap, -cfg.max_step, cfg.max_step)
            visible = fine >= cfg.visibility_threshold
            visibility[:, k + 1] = visible
            residuals[:, k + 1] = cost
            last_visible_d = np.where(visible[:, None], d, last_visible_d)
            positions[:, k + 1] = positions[:, k] + last_visible_d
        estimated_until = max(estimated_until, w_end)
        if w_end >= B - 1:
            break
        w0 += L // 2
    return [Trajectory(q.label, positions[i].copy(), visibility[i].copy(),
                       residuals[i].copy())
            for i, q in enumerate(queries)]


def track_regions(p: FeaturePyramid, queries, cfg: TrackerConfig = TrackerConfig()) -> list:
    """Track every query point; regions are independent, computed in batches.

    All per-region arithmetic is row-local, so the trajectories are bitwise
    identical whether regions are tracked together, in chunks, or one by one.
    """
    queries = list(queries)
    if not queries:
        return []
    grid = _candidate_grid(cfg.max_step)
    samples = (2 * cfg.patch_radius + 1) ** 2
    chunk = max(1, 3_000_000 // (len(grid) * samples))
    out = []
    for i in range(0, len(queries), chunk):
        out.extend(_track_chunk(p, queries[i:i + chunk], grid, cfg))
    return out


def track_region(p: FeaturePyramid, q: QueryPoint, cfg: TrackerConfig = TrackerConfig()) -> Trajectory:
    """Track one query point across all bins with sliding-window refinement.

    Per step the displacement is estimated over a disjoint-tent bin pair and
    converted to a per-bin velocity through the pair's effective time gap;
    invisible spans extrapolate the last visible displacement.
    """
    return _track_chunk(p, [q], _candidate_grid(cfg.max_step), cfg)[0]


def gate_static_regions(trajectories, regions: RegionSet, img_from: np.ndarray,
                        img_to: np.ndarray, min_disp: float = 1.5) -> list:
    """Correct trajectories whose appearance contradicts their net motion.

    Events only reveal that something moved through a region: a background
    patch swept by a foreign edge tracks that edge, and long chains can
    drift.  The boundary images arbitrate per region pixel (median vote, so
    pixels occluded in img_to cannot outvote the majority): when img_to
    matches img_from better in place than displaced by the tracked endpoint,
    the net displacement is treated as drift and removed linearly along the
    trajectory.  That zeroes swept static regions while preserving
    oscillations that genuinely return to their start.
    """
    img_from = np.asarray(img_from, np.float64)
    img_to = np.asarray(img_to, np.float64)
    by_label = {r.label: r for r in regions}
    out = []
    for traj in trajectories:
        q = traj.positions[0]
        disp = traj.positions[-1] - q
        region = by_label.get(traj.label)
        if region is None or float(np.hypot(disp[0], disp[1])) < min_disp:
            out.append(traj)
            continue
        ys = region.pixels[:, 0].astype(np.float64)
        xs = region.pixels[:, 1].astype(np.float64)
        src = img_from[region.pixels[:, 0], region.pixels[:, 1]]
        err_track = np.abs(bilinear(img_to, xs + disp[0], ys + disp[1]) - src)
        err_static = np.abs(img_to[region.pixels[:, 0], region.pixels[:, 1]] - src)
        if np.median(err_static) <= np.median(err_track):
            ramp = np.linspace(0.0, 1.0, len(traj.positions))[:, None]
            positions = traj.positions - ramp * disp[None, :]
            out.append(Trajectory(traj.label, positions, traj.visibility.copy(),
                                  traj.residuals.copy()))
        else:
            out.append(traj)
    return out


def corner_response(img: np.ndarray, sigma: float = 1.5, kappa: float = 0.05) -> np.ndarray:
    """Harris response on a grayscale frame."""
    img = np.asarray(img, np.float64)
    gy, gx = np.gradient(img)
    sxx = ndimage.gaussian_filter(gx * gx, sigma)
    syy = ndimage.gaussian_filter(gy * gy, sigma)
    sxy = ndimage.gaussian_filter(gx * gy, sigma)
    return sxx * syy - sxy * sxy - kappa * (sxx + syy) ** 2


def select_query_points(img: np.ndarray, regions: RegionSet, events: EventStream,
                        cfg: TrackerConfig = TrackerConfig()) -> list:
    """One query point per region: strongest corner backed by an event, else
    the in-region event location nearest that corner."""
    response = corner_response(img)
    floor = cfg.corner_rel_threshold * max(float(response.max()), 0.0)
    event_frame = accumulate_event_frame(events)
    points = []
    for region in regions:
        ys = region.pixels[:, 0]
        xs = region.pixels[:, 1]
        if len(ys) == 0:
            raise ValueError("region %d has zero pixels" % region.label)
        rvals = response[ys, xs]
        best = int(np.argmax(rvals))
        cx, cy = int(xs[best]), int(ys[best])
        if rvals[best] > floor and rvals[best] > 0 and event_frame[cy, cx]:
            points.append(QueryPoint(region.label, (float(cx), float(cy)), "corner"))
            continue
        has_event = event_frame[ys, xs] > 0
        if np.any(has_event):
            ey = ys[has_event]
            ex = xs[has_event]
            k = int(np.argmin((ex - cx) ** 2 + (ey - cy) ** 2))
            points.append(QueryPoint(region.label, (float(ex[k]), float(ey[k])),
                                     "nearest_event"))
        else:
            points.append(QueryPoint(region.label, (float(cx), float(cy)), "corner"))
    return points


def write_trajectories(path, trajectories) -> None:
    """Text export: one `label bin x y visible cost` line per sample."""
    with open(path, "w") as f:
        for traj in trajectories:
            for k in range(len(traj.positions)):
                f.write("%d %d %.17g %.17g %d %.17g\n" % (
                    traj.label, k, traj.positions[k, 0], traj.positions[k, 1],
                    int(traj.visibility[k]), traj.residuals[k]))


def read_trajectories(path) -> list:
    rows = {}
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            label = int(parts[0])
            rows.setdefault(label, []).append(
                (int(parts[1]), float(parts[2]), float(parts[3]),
                 bool(int(parts[4])), float(parts[5])))
    out = []
    for label, samples in rows.items():
        samples.sort(key=lambda s: s[0])
        positions = np.array([[s[1], s[2]] for s in samples], np.float64)
        visibility = np.array([s[3] for s in samples], bool)
        residuals = np.array([s[4] for s in samples], np.float64)
        out.append(Trajectory(label, positions, visibility, residuals))
    return out
