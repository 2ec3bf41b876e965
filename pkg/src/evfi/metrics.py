"""Evaluation functionals: image quality, flow error, and training-style losses."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

BCE_EPS = 1e-7
LAMBDA_OCC = 1.0
LAMBDA_REC = 1.0
LAMBDA_FLOW = 0.8


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """20*log10(255/sqrt(MSE)); identical frames return +inf."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError("frame dimensions differ")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(255.0 / math.sqrt(mse))


def ssim(a: np.ndarray, b: np.ndarray, window: int = 8,
         k1: float = 0.01, k2: float = 0.03, dynamic_range: float = 255.0) -> float:
    """Mean SSIM over sliding uniform windows (8x8 by default)."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError("frame dimensions differ")
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], window, k1, k2, dynamic_range)
                              for c in range(a.shape[2])]))
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    mu_a = ndimage.uniform_filter(a, window)
    mu_b = ndimage.uniform_filter(b, window)
    mu_aa = ndimage.uniform_filter(a * a, window)
    mu_bb = ndimage.uniform_filter(b * b, window)
    mu_ab = ndimage.uniform_filter(a * b, window)
    var_a = mu_aa - mu_a * mu_a
    var_b = mu_bb - mu_b * mu_b
    cov = mu_ab - mu_a * mu_b
    score = (((2 * mu_a * mu_b + c1) * (2 * cov + c2))
             / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    # average only windows that fit entirely inside the frame
    h, w = a.shape
    half = window // 2
    interior = score[half:h - window + half + 1, half:w - window + half + 1]
    return float(interior.mean() if interior.size else score.mean())


def tracking_loss(pred, gt) -> float:
    """Mean per-sample L1 position error (|dx| + |dy|) over matched trajectories."""
    total = 0.0
    count = 0
    pred_list = list(pred)
    gt_list = list(gt)
    if len(pred_list) != len(gt_list):
        raise ValueError("trajectory sets differ in size")
    for p, g in zip(pred_list, gt_list):
        pp = np.asarray(p.positions if hasattr(p, "positions") else p, np.float64)
        gg = np.asarray(g.positions if hasattr(g, "positions") else g, np.float64)
        if pp.shape != gg.shape:
            raise ValueError("trajectory lengths differ")
        total += float(np.abs(pp - gg).sum())
        count += len(pp)
    return total / count if count else 0.0


def occlusion_loss(pred_vis, gt_vis) -> float:
    """Mean binary cross entropy with predictions clamped to [eps, 1-eps]."""
    p = np.asarray(pred_vis, np.float64).ravel()
    g = np.asarray(gt_vis, np.float64).ravel()
    if p.shape != g.shape:
        raise ValueError("visibility lengths differ")
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(g * np.log(p) + (1.0 - g) * np.log(1.0 - p)))


def reconstruction_loss(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute intensity error."""
    pred = np.asarray(pred, np.float64)
    gt = np.asarray(gt, np.float64)
    if pred.shape != gt.shape:
        raise ValueError("frame dimensions differ")
    return float(np.mean(np.abs(pred - gt)))


def flow_consistency_loss(coarse: np.ndarray, reference: np.ndarray,
                          occ: np.ndarray, normalize_by_mask: bool = False) -> float:
    """Masked mean L1 between the coarse flow and an external reference flow.

    The mask multiplies element-wise; by default the mean divides by all
    pixels, optionally by the admitted count only.
    """
    coarse = np.asarray(coarse, np.float64)
    reference = np.asarray(reference, np.float64)
    if coarse.shape != reference.shape or coarse.shape[:2] != np.asarray(occ).shape:
        raise ValueError("flow/mask dimensions differ")
    mask = np.asarray(occ, np.float64)
    per_px = np.abs(coarse - reference).sum(axis=-1) * mask
    if normalize_by_mask:
        admitted = float(mask.sum())
        return float(per_px.sum() / admitted) if admitted else 0.0
    return float(per_px.mean())


def endpoint_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Euclidean norm of the per-pixel flow difference."""
    pred = np.asarray(pred, np.float64)
    gt = np.asarray(gt, np.float64)
    if pred.shape != gt.shape:
        raise ValueError("flow dimensions differ")
    return float(np.mean(np.sqrt(((pred - gt) ** 2).sum(axis=-1))))


@dataclass
class MetricReport:
    psnr: float = math.nan
    ssim: float = math.nan
    epe: float = math.nan
    l_track: float = math.nan
    l_occ: float = math.nan
    l_rec: float = math.nan
    l_flow: float = math.nan
    lambda1: float = LAMBDA_OCC
    lambda2: float = LAMBDA_REC
    lambda3: float = LAMBDA_FLOW
    extra: dict = field(default_factory=dict)

    @property
    def total_track(self) -> float:
        return self.l_track + self.lambda1 * self.l_occ

    @property
    def total_rec(self) -> float:
        return self.lambda2 * self.l_rec + self.lambda3 * self.l_flow

    def as_dict(self) -> dict:
        d = {
            "psnr": self.psnr,
            "ssim": self.ssim,
            "epe": self.epe,
            "l_track": self.l_track,
            "l_occ": self.l_occ,
            "l_rec": self.l_rec,
            "l_flow": self.l_flow,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "total_track": self.total_track,
            "total_rec": self.total_rec,
        }
        d.update(self.extra)
        return d

    def to_text(self) -> str:
        lines = ["%s=%.9g" % (k, v) if isinstance(v, float) else "%s=%s" % (k, v)
                 for k, v in self.as_dict().items()]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return repr(v)
            return v
        return json.dumps({k: clean(v) for k, v in self.as_dict().items()},
                          indent=2, sort_keys=True)
