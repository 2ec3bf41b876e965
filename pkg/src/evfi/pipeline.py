"""Stage orchestration: every stage reads and writes files.

The end-to-end run executes the same stage functions the CLI subcommands
expose, over a shared work directory, so running the stages manually with
intermediate files is bit-identical to one `run` invocation by construction.
"""

from __future__ import annotations

import glob
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as cfgio
from . import flow as flowmod
from . import metrics as metricsmod
from .config import PipelineConfig
from .events import (SimulatorConfig, accumulate_event_frame, read_events,
                     reverse_stream, simulate_events, write_events)
from .interpolate import FusionInputs, fuse_frames, infill_occlusions, sample_intermediate_flows
from .netpbm import quantize_frame, read_netpbm, write_pgm
from .scenes import Scene
from .segmentation import MotionMask, SuperpixelMap, filter_regions, motion_mask, slic_segment
from .tracking import (TrackerConfig, build_feature_pyramid, gate_static_regions,
                       read_trajectories, select_query_points, track_regions,
                       write_trajectories)
from .voxel import build_voxel_grid, read_voxel_grid, write_voxel_grid


class StageError(RuntimeError):
    """Failure attributed to a named pipeline stage."""

    def __init__(self, stage: str, message: str):
        super().__init__("stage %s: %s" % (stage, message))
        self.stage = stage


def parallel_map(fn, items, threads: int = 0):
    """Order-preserving map; results never depend on the thread count."""
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    workers = threads if threads > 0 else min(len(items), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def tracker_config(cfg: PipelineConfig) -> TrackerConfig:
    return TrackerConfig(
        window_length=cfg.tracker_window_length,
        refine_iters=cfg.tracker_refine_iters,
        patch_radius=cfg.tracker_patch_radius,
        max_step=cfg.tracker_max_step,
        visibility_threshold=cfg.tracker_visibility_threshold,
    )


def list_frames(frames_dir) -> list:
    paths = sorted(glob.glob(os.path.join(frames_dir, "*.pgm")))
    if not paths:
        raise FileNotFoundError("no .pgm frames in %s" % frames_dir)
    return paths


def load_frame_times(frames_dir, count: int) -> np.ndarray:
    path = os.path.join(frames_dir, "times.txt")
    if os.path.exists(path):
        with open(path) as f:
            ts = np.array([float(line) for line in f if line.strip()], np.float64)
        if len(ts) < count:
            raise ValueError("times.txt has fewer entries than frames")
        return ts[:count]
    return np.linspace(0.0, 1.0, count)


def auto_clusters(cfg: PipelineConfig, shape) -> int:
    if cfg.slic_clusters > 0:
        return cfg.slic_clusters
    return max(1, (shape[0] * shape[1]) // 256)


# stage functions: file in, file out ----------------------------------------

def stage_simulate(frame_paths, timestamps, cfg: PipelineConfig, events_out) -> None:
    frames = [np.asarray(read_netpbm(p), np.float64) for p in frame_paths]
    sim = SimulatorConfig(cfg.simulator_contrast_threshold, cfg.simulator_log_eps,
                          cfg.simulator_max_events_per_pixel)
    stream = simulate_events(frames, timestamps, sim)
    write_events(events_out, stream)


def stage_voxelize(events_path, bins: int, t_start: float, t_end: float,
                   vox_out, reverse: bool = False) -> None:
    stream = read_events(events_path)
    if reverse:
        stream = reverse_stream(stream, t_start, t_end)
    grid = build_voxel_grid(stream, bins, t_start, t_end)
    write_voxel_grid(vox_out, grid)


def stage_segment(image_path, events_path, cfg: PipelineConfig,
                  labels_out, mask_out) -> None:
    img = np.asarray(read_netpbm(image_path), np.float64)
    stream = read_events(events_path)
    sp = slic_segment(img, auto_clusters(cfg, img.shape),
                      cfg.slic_compactness, cfg.slic_iters)
    mm = motion_mask(accumulate_event_frame(stream), cfg.mask_radius,
                     cfg.mask_min_component_px)
    write_pgm(labels_out, sp.labels.astype(np.uint16), maxval=65535)
    write_pgm(mask_out, mm.mask * 255)


def _regions_from_files(labels_path, mask_path, cfg: PipelineConfig):
    labels = read_netpbm(labels_path).astype(np.int32)
    mask = (read_netpbm(mask_path) > 0).astype(np.uint8)
    sp = SuperpixelMap(labels, int(labels.max()) + 1, None)
    return filter_regions(sp, MotionMask(mask, cfg.mask_radius), cfg.regions_min_overlap)


def stage_track(vox_path, labels_path, mask_path, image_path, events_path,
                cfg: PipelineConfig, tracks_out, threads: int = 0,
                image_to_path=None) -> None:
    grid = read_voxel_grid(vox_path)
    regions = _regions_from_files(labels_path, mask_path, cfg)
    img = np.asarray(read_netpbm(image_path), np.float64)
    stream = read_events(events_path)
    tcfg = tracker_config(cfg)
    queries = select_query_points(img, regions, stream, tcfg)
    pyramid = build_feature_pyramid(grid, tcfg.scales)
    trajectories = track_regions(pyramid, queries, tcfg)
    if image_to_path is not None:
        img_to = np.asarray(read_netpbm(image_to_path), np.float64)
        trajectories = gate_static_regions(trajectories, regions, img, img_to)
    write_trajectories(tracks_out, trajectories)


def stage_flow(tracks_path, labels_path, mask_path, image_path,
               cfg: PipelineConfig, flo_pattern, direction: str) -> None:
    trajectories = read_trajectories(tracks_path)
    regions = _regions_from_files(labels_path, mask_path, cfg)
    guide = np.asarray(read_netpbm(image_path), np.float64)
    trajectories = flowmod.consolidate_trajectories(trajectories, regions, guide)
    coarse = flowmod.densify_flow(trajectories, regions, guide.shape, direction)
    refined = flowmod.refine_flow(coarse, guide, cfg.flow_smooth_iters,
                                  cfg.flow_lambda_smooth, cfg.flow_guide_sigma)
    for k in range(refined.bins):
        flowmod.write_flo(flo_pattern % k, refined.flow[k])


def load_anytime_flow(flo_pattern, direction: str) -> flowmod.AnyTimeFlow:
    paths = sorted(glob.glob(flo_pattern.replace("%02d", "*")))
    if not paths:
        raise FileNotFoundError("no flow files matching %s" % flo_pattern)
    fields = np.stack([flowmod.read_flo(p) for p in paths])
    times = np.linspace(0.0, 1.0, len(paths)) if len(paths) > 1 else np.zeros(1)
    valid = np.ones(fields.shape[:3], bool)
    return flowmod.AnyTimeFlow(direction, times, fields, valid)


def interpolate_frame(i0, i1, fwd: flowmod.AnyTimeFlow, bwd: flowmod.AnyTimeFlow,
                      t: float, cfg: PipelineConfig):
    """Synthesize the frame at fraction t; boundary times return the inputs."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return np.asarray(i0, np.float64), None
    if t == 1.0:
        return np.asarray(i1, np.float64), None
    f_t0, f_t1 = sample_intermediate_flows(fwd, bwd, t)
    f0t = flowmod.sample_flow_at(fwd, t)
    f1t = flowmod.sample_flow_at(bwd, 1.0 - t)
    c_t0 = flowmod.confidence_map(f_t0, f0t, cfg.flow_gamma1, cfg.flow_gamma2)
    c_t1 = flowmod.confidence_map(f_t1, f1t, cfg.flow_gamma1, cfg.flow_gamma2)
    occ = flowmod.occlusion_mask(c_t0, c_t1, cfg.flow_occlusion_threshold)
    inputs = FusionInputs(np.asarray(i0, np.float64), np.asarray(i1, np.float64),
                          f_t0, f_t1, c_t0, c_t1, occ, t)
    fused = fuse_frames(inputs)
    filled = infill_occlusions(fused, inputs, cfg.flow_occlusion_threshold)
    return filled, inputs


def stage_interpolate(i0_path, i1_path, fwd_pattern, bwd_pattern,
                      cfg: PipelineConfig, t_list, out_dir,
                      threads: int = 0) -> list:
    i0 = read_netpbm(i0_path)
    i1 = read_netpbm(i1_path)
    fwd = load_anytime_flow(fwd_pattern, "forward")
    bwd = load_anytime_flow(bwd_pattern, "backward")
    os.makedirs(out_dir, exist_ok=True)

    def one(t):
        frame, _ = interpolate_frame(i0, i1, fwd, bwd, t, cfg)
        path = os.path.join(out_dir, "interp_t%0.4f.pgm" % t)
        write_pgm(path, quantize_frame(frame))
        return path

    return parallel_map(one, list(t_list), threads)


def run_pipeline(frames_dir, out_dir, cfg: PipelineConfig, work_dir=None,
                 events_path=None, skip=None, t_list=None, threads=None) -> dict:
    """Full run: simulate (unless events given) through interpolation.

    Returns a dict of produced paths.  All stage communication goes through
    files in the work directory.
    """
    threads = cfg.run_threads if threads is None else threads
    t_list = cfg.timestamps() if t_list is None else [float(t) for t in t_list]
    skip = cfg.run_skip if skip is None else skip
    os.makedirs(out_dir, exist_ok=True)
    work = work_dir or os.path.join(out_dir, "work")
    os.makedirs(work, exist_ok=True)

    frame_paths = list_frames(frames_dir)
    if skip is not None and skip >= 0:
        # scene directories render several frames per protocol step; a skip
        # of N spans N+1 protocol steps worth of rendered frames
        factor = 1
        scene_cfg = os.path.join(frames_dir, "scene.cfg")
        if os.path.exists(scene_cfg):
            factor = int(cfgio.read_config(scene_cfg).get("scene.render_factor", 1))
        needed = (skip + 1) * factor + 1
        if len(frame_paths) < needed:
            raise StageError("input", "need %d frames for skip=%d, found %d"
                             % (needed, skip, len(frame_paths)))
        frame_paths = frame_paths[:needed]
    times = load_frame_times(frames_dir, len(frame_paths))
    t_start, t_end = float(times[0]), float(times[-1])
    i0_path, i1_path = frame_paths[0], frame_paths[-1]

    def _run(stage, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (OSError, FileNotFoundError):
            raise
        except Exception as exc:  # noqa: BLE001 - re-badged with the stage name
            raise StageError(stage, str(exc)) from exc

    events = events_path or os.path.join(work, "events.evt")
    if events_path is None:
        _run("simulate", stage_simulate, frame_paths, times, cfg, events)

    vox_fwd = os.path.join(work, "voxel_fwd.vox")
    vox_bwd = os.path.join(work, "voxel_bwd.vox")
    _run("voxelize", stage_voxelize, events, cfg.voxel_bins, t_start, t_end, vox_fwd)
    _run("voxelize", stage_voxelize, events, cfg.voxel_bins, t_start, t_end,
         vox_bwd, reverse=True)

    labels_fwd = os.path.join(work, "labels_fwd.pgm")
    labels_bwd = os.path.join(work, "labels_bwd.pgm")
    mask_path = os.path.join(work, "mask.pgm")
    _run("segment", stage_segment, i0_path, events, cfg, labels_fwd, mask_path)
    _run("segment", stage_segment, i1_path, events, cfg, labels_bwd, mask_path)

    tracks_fwd = os.path.join(work, "tracks_fwd.txt")
    tracks_bwd = os.path.join(work, "tracks_bwd.txt")
    _run("track", stage_track, vox_fwd, labels_fwd, mask_path, i0_path, events,
         cfg, tracks_fwd, threads, image_to_path=i1_path)
    _run("track", stage_track, vox_bwd, labels_bwd, mask_path, i1_path, events,
         cfg, tracks_bwd, threads, image_to_path=i0_path)

    fwd_pattern = os.path.join(work, "flow_fwd_bin%02d.flo")
    bwd_pattern = os.path.join(work, "flow_bwd_bin%02d.flo")
    _run("flow", stage_flow, tracks_fwd, labels_fwd, mask_path, i0_path, cfg,
         fwd_pattern, "forward")
    _run("flow", stage_flow, tracks_bwd, labels_bwd, mask_path, i1_path, cfg,
         bwd_pattern, "backward")

    outputs = _run("interpolate", stage_interpolate, i0_path, i1_path,
                   fwd_pattern, bwd_pattern, cfg, t_list, out_dir, threads)
    return {
        "events": events,
        "work": work,
        "frames": outputs,
        "boundaries": (i0_path, i1_path),
    }


# evaluation ------------------------------------------------------------------

def evaluate_against_scene(scene: Scene, pred_dir, work_dir=None,
                           cfg: PipelineConfig = None) -> metricsmod.MetricReport:
    """Score pipeline outputs against the scene's analytic ground truth."""
    cfg = cfg or PipelineConfig()
    report = metricsmod.MetricReport()
    psnrs, ssims, recs = [], [], []
    for path in sorted(glob.glob(os.path.join(pred_dir, "interp_t*.pgm"))):
        t = float(os.path.basename(path)[len("interp_t"):-len(".pgm")])
        pred = np.asarray(read_netpbm(path), np.float64)
        gt = np.asarray(scene.frame_u8(t), np.float64)
        psnrs.append(metricsmod.psnr(pred, gt))
        ssims.append(metricsmod.ssim(pred, gt))
        recs.append(metricsmod.reconstruction_loss(pred, gt))
        report.extra["psnr_t%0.4f" % t] = psnrs[-1]
        report.extra["ssim_t%0.4f" % t] = ssims[-1]
    if psnrs:
        report.psnr = float(np.mean([p for p in psnrs if np.isfinite(p)]) if any(
            np.isfinite(p) for p in psnrs) else np.inf)
        report.ssim = float(np.mean(ssims))
        report.l_rec = float(np.mean(recs))
    if work_dir:
        fwd_pattern = os.path.join(work_dir, "flow_fwd_bin%02d.flo")
        if glob.glob(fwd_pattern.replace("%02d", "*")):
            fwd = load_anytime_flow(fwd_pattern, "forward")
            gt_final = scene.flow_0_to_t(1.0)
            report.epe = metricsmod.endpoint_error(fwd.flow[-1], gt_final)
            report.l_flow = metricsmod.flow_consistency_loss(
                fwd.flow[-1], gt_final, np.ones(gt_final.shape[:2]))
        tracks_path = os.path.join(work_dir, "tracks_fwd.txt")
        if os.path.exists(tracks_path):
            trajectories = read_trajectories(tracks_path)
            if trajectories:
                B = len(trajectories[0].positions)
                bin_times = np.linspace(0.0, 1.0, B)
                gts = [scene.gt_trajectory(tuple(tr.positions[0]), bin_times)
                       for tr in trajectories]
                report.l_track = metricsmod.tracking_loss(trajectories, gts)
                pred_vis = np.concatenate([tr.visibility.astype(np.float64)
                                           for tr in trajectories])
                report.l_occ = metricsmod.occlusion_loss(
                    pred_vis, np.ones_like(pred_vis))
    return report


def bin_size_study(scene: Scene, bins_list, cfg: PipelineConfig,
                   threads: int = 0) -> list:
    """Track the scene across several voxel bin counts; one result row each."""
    frames, times = scene.frames()
    frames_u8 = [quantize_frame(f) for f in frames]
    sim = SimulatorConfig(cfg.simulator_contrast_threshold, cfg.simulator_log_eps,
                          cfg.simulator_max_events_per_pixel)
    stream = simulate_events(frames_u8, times, sim)
    img = np.asarray(frames_u8[0], np.float64)
    sp = slic_segment(img, auto_clusters(cfg, img.shape),
                      cfg.slic_compactness, cfg.slic_iters)
    mm = motion_mask(accumulate_event_frame(stream), cfg.mask_radius,
                     cfg.mask_min_component_px)
    regions = filter_regions(sp, mm, cfg.regions_min_overlap)
    tcfg = tracker_config(cfg)
    queries = select_query_points(img, regions, stream, tcfg)
    rows = []
    for bins in bins_list:
        grid = build_voxel_grid(stream, bins, float(times[0]), float(times[-1]))
        pyramid = build_feature_pyramid(grid, tcfg.scales)
        trajectories = track_regions(pyramid, queries, tcfg)
        bin_times = np.linspace(0.0, 1.0, bins)
        errs, ends = [], []
        for tr in trajectories:
            gt = scene.gt_trajectory(tuple(tr.positions[0]), bin_times)
            err = np.sqrt(((tr.positions - gt) ** 2).sum(axis=1))
            errs.append(err.mean())
            ends.append(err[-1])
        rows.append({
            "bins": bins,
            "mean_track_error": float(np.mean(errs)) if errs else float("nan"),
            "endpoint_error": float(np.mean(ends)) if ends else float("nan"),
            "tracked_regions": len(trajectories),
        })
    return rows
