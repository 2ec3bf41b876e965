"""Scene segmentation: SLIC superpixels, event motion mask, region filtering.

The boundary image is clustered on intensity and position (grayscale SLIC);
the event frame, cleaned by morphological closing, marks where motion
happened; clusters that overlap the motion mask become tracking templates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class SuperpixelMap:
    """Per-pixel cluster labels in [0, K) with (intensity, x, y) centers."""

    labels: np.ndarray          # (H, W) int32
    K: int
    centers: np.ndarray         # (K, 3): mean intensity, mean x, mean y
    energy_history: list | None = None


@dataclass
class MotionMask:
    mask: np.ndarray            # (H, W) uint8, 1 = motion
    structuring_radius: int


@dataclass
class Region:
    label: int
    pixels: np.ndarray          # (N, 2) int32 rows of (y, x)
    bbox: tuple                 # (x0, y0, x1, y1) inclusive
    seed: tuple                 # (x, y) representative pixel


@dataclass
class RegionSet:
    regions: list
    width: int
    height: int

    def __len__(self):
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)


def _disc(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= r * r


def _init_centers(img: np.ndarray, K: int):
    """Regular grid seeds, more columns than rows on wide images, perturbed to
    the lowest-gradient pixel in each seed's 3x3 neighborhood."""
    h, w = img.shape
    nx = min(w, max(1, math.ceil(math.sqrt(K * w / h))))
    ny = min(h, max(1, round(K / nx)))
    gy, gx = np.gradient(img.astype(np.float64))
    grad = gx * gx + gy * gy
    centers = []
    for i in range(ny):
        for j in range(nx):
            cy = int((i + 0.5) * h / ny)
            cx = int((j + 0.5) * w / nx)
            y0, y1 = max(0, cy - 1), min(h, cy + 2)
            x0, x1 = max(0, cx - 1), min(w, cx + 2)
            win = grad[y0:y1, x0:x1]
            k = int(np.argmin(win))
            cy = y0 + k // win.shape[1]
            cx = x0 + k % win.shape[1]
            centers.append((img[cy, cx], float(cx), float(cy)))
    return np.array(centers, np.float64)


def slic_segment(img: np.ndarray, K: int, compactness: float = 10.0,
                 iters: int = 10) -> SuperpixelMap:
    """Grayscale SLIC with orphan-component cleanup.

    Assignment minimizes D = sqrt(d_int^2 + (compactness * d_xy / S)^2) inside
    2S x 2S windows around each center.  An iteration that would raise the
    total assignment cost is rolled back and the loop stops, so the recorded
    energy history is non-increasing.
    """
    img = np.asarray(img, np.float64)
    if img.size == 0:
        raise ValueError("empty image")
    h, w = img.shape
    if K < 1 or K > h * w:
        raise ValueError("cluster count must be in [1, H*W]")

    S = math.sqrt(h * w / K)
    centers = _init_centers(img, K)
    n_centers = len(centers)
    ratio2 = (compactness / S) ** 2

    labels = np.full((h, w), -1, np.int32)
    yy, xx = np.mgrid[0:h, 0:w]
    energy_history = []
    prev = None
    for _ in range(max(1, iters)):
        dist2 = np.full((h, w), np.inf)
        new_labels = np.full((h, w), -1, np.int32)
        for c in range(n_centers):
            ci, cx, cy = centers[c]
            x0, x1 = max(0, int(cx - S)), min(w, int(cx + S) + 1)
            y0, y1 = max(0, int(cy - S)), min(h, int(cy + S) + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            patch = img[y0:y1, x0:x1]
            dxy2 = (xx[y0:y1, x0:x1] - cx) ** 2 + (yy[y0:y1, x0:x1] - cy) ** 2
            d2 = (patch - ci) ** 2 + ratio2 * dxy2
            better = d2 < dist2[y0:y1, x0:x1]
            dist2[y0:y1, x0:x1][better] = d2[better]
            new_labels[y0:y1, x0:x1][better] = c
        missed = new_labels < 0
        if np.any(missed):
            # window sweep left gaps (extreme aspect ratios); brute-force them
            my, mx = np.nonzero(missed)
            d2 = ((img[my, mx, None] - centers[None, :, 0]) ** 2
                  + ratio2 * ((mx[:, None] - centers[None, :, 1]) ** 2
                              + (my[:, None] - centers[None, :, 2]) ** 2))
            new_labels[my, mx] = np.argmin(d2, axis=1)
            dist2[my, mx] = np.min(d2, axis=1)
        energy = float(np.sqrt(dist2).sum())
        if prev is not None and energy > prev:
            break
        labels = new_labels
        energy_history.append(energy)
        prev = energy
        # recenter on cluster means; empty clusters keep their old center
        counts = np.bincount(labels.ravel(), minlength=n_centers).astype(np.float64)
        sums_i = np.bincount(labels.ravel(), weights=img.ravel(), minlength=n_centers)
        sums_x = np.bincount(labels.ravel(), weights=xx.ravel().astype(np.float64),
                             minlength=n_centers)
        sums_y = np.bincount(labels.ravel(), weights=yy.ravel().astype(np.float64),
                             minlength=n_centers)
        nz = counts > 0
        centers[nz, 0] = sums_i[nz] / counts[nz]
        centers[nz, 1] = sums_x[nz] / counts[nz]
        centers[nz, 2] = sums_y[nz] / counts[nz]

    labels = _enforce_connectivity(labels, n_centers)
    labels, K_final, centers_final = _compact_labels(img, labels)
    return SuperpixelMap(labels, K_final, centers_final, energy_history)


_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool)


def _enforce_connectivity(labels: np.ndarray, n_centers: int) -> np.ndarray:
    """Keep each cluster's largest 4-connected component; merge every other
    component into the largest adjacent cluster."""
    labels = labels.copy()
    h, w = labels.shape
    for lab in range(n_centers):
        mask = labels == lab
        if not mask.any():
            continue
        comp, ncomp = ndimage.label(mask, structure=_FOUR)
        if ncomp <= 1:
            continue
        sizes = np.bincount(comp.ravel())[1:]
        keep = int(np.argmax(sizes)) + 1
        counts = np.bincount(labels.ravel(), minlength=n_centers)
        for c in range(1, ncomp + 1):
            if c == keep:
                continue
            part = comp == c
            ring = ndimage.binary_dilation(part, structure=_FOUR) & ~part
            neigh = np.unique(labels[ring])
            neigh = neigh[neigh != lab]
            if len(neigh) == 0:
                continue
            target = int(neigh[np.argmax(counts[neigh])])
            labels[part] = target
            counts[target] += int(part.sum())
            counts[lab] -= int(part.sum())
    return labels


def _compact_labels(img: np.ndarray, labels: np.ndarray):
    """Relabel to a dense [0, K) range and recompute centers."""
    used = np.unique(labels)
    remap = np.zeros(int(used.max()) + 1, np.int32)
    remap[used] = np.arange(len(used), dtype=np.int32)
    labels = remap[labels]
    K = len(used)
    h, w = labels.shape
    yy, xx = np.mgrid[0:h, 0:w]
    counts = np.bincount(labels.ravel(), minlength=K).astype(np.float64)
    centers = np.stack([
        np.bincount(labels.ravel(), weights=img.ravel().astype(np.float64), minlength=K) / counts,
        np.bincount(labels.ravel(), weights=xx.ravel().astype(np.float64), minlength=K) / counts,
        np.bincount(labels.ravel(), weights=yy.ravel().astype(np.float64), minlength=K) / counts,
    ], axis=1)
    return labels.astype(np.int32), K, centers


def motion_mask(event_frame: np.ndarray, structuring_radius: int = 2,
                min_component_px: int = 8) -> MotionMask:
    """Close the event frame with a disc, then drop tiny components.

    The closing is computed on a zero-padded copy so border behavior matches
    the unbounded-plane definition (and stays idempotent).
    """
    if structuring_radius < 1:
        raise ValueError("structuring radius must be >= 1")
    frame = np.asarray(event_frame).astype(bool)
    r = int(structuring_radius)
    disc = _disc(r)
    padded = np.pad(frame, r)
    closed = ndimage.binary_closing(padded, structure=disc)[r:-r, r:-r]
    if min_component_px > 1:
        comp, ncomp = ndimage.label(closed, structure=np.ones((3, 3), bool))
        if ncomp:
            sizes = np.bincount(comp.ravel())
            small = sizes < min_component_px
            small[0] = False
            closed[small[comp]] = False
    return MotionMask(closed.astype(np.uint8), r)


def filter_regions(sp: SuperpixelMap, m: MotionMask, min_overlap: float = 0.1) -> RegionSet:
    """Keep clusters whose motion-mask overlap fraction reaches min_overlap.

    Clusters with no overlapping pixel at all are always dropped, so an empty
    mask yields an empty region set even at min_overlap = 0.
    """
    if sp.labels.shape != m.mask.shape:
        raise ValueError("label map and mask dimensions differ")
    h, w = sp.labels.shape
    flat = sp.labels.ravel()
    sizes = np.bincount(flat, minlength=sp.K)
    overlaps = np.bincount(flat, weights=m.mask.ravel().astype(np.float64), minlength=sp.K)
    regions = []
    for lab in range(sp.K):
        if sizes[lab] == 0:
            raise ValueError("cluster %d has zero pixels" % lab)
        if overlaps[lab] <= 0 or overlaps[lab] / sizes[lab] < min_overlap:
            continue
        ys, xs = np.nonzero(sp.labels == lab)
        bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
        # default seed: pixel nearest the centroid; the tracker's query
        # selection replaces it when image/event context is available
        cx, cy = xs.mean(), ys.mean()
        k = int(np.argmin((xs - cx) ** 2 + (ys - cy) ** 2))
        pixels = np.stack([ys, xs], axis=1).astype(np.int32)
        regions.append(Region(lab, pixels, bbox, (float(xs[k]), float(ys[k]))))
    return RegionSet(regions, w, h)
