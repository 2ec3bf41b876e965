"""Command-line interface: one subcommand per stage plus an end-to-end run.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 stage failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import pipeline
from .config import ConfigError, PipelineConfig
from .events import read_events
from .metrics import MetricReport
from .scenes import SceneSpec, load_scene, write_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_STAGE = 4


def _parse_t_list(text: str) -> list:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("--t expects a comma-separated list of fractions")
    for t in values:
        if not 0.0 <= t <= 1.0:
            raise ConfigError("interpolation timestamps must lie in [0, 1]")
    return values


def _load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    if not os.path.exists(path):
        raise FileNotFoundError("config file not found: %s" % path)
    return PipelineConfig.load(path)


def _add_common(p):
    p.add_argument("--config", default=None, help="pipeline config file")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (0 = auto); results never depend on it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evfi",
                                 description="Event-guided video frame interpolation")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", help="render a synthetic scene with ground truth")
    g.add_argument("--kind", default="translate",
                   choices=["translate", "sinusoid", "rotate", "two_objects", "disocclusion"])
    g.add_argument("--out", required=True)
    g.add_argument("--width", type=int, default=128)
    g.add_argument("--height", type=int, default=128)
    g.add_argument("--frames", type=int, default=9)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--velocity", default="6,0", help="px over the interval, 'vx,vy'")
    g.add_argument("--amplitude", type=float, default=8.0)
    g.add_argument("--cycles", type=float, default=0.5)
    g.add_argument("--rotation", type=float, default=15.0)
    g.add_argument("--object-size", type=int, default=48)
    g.add_argument("--t", default="0.25,0.5,0.75", help="ground-truth flow times")

    s = sub.add_parser("simulate", help="generate events from a frame directory")
    s.add_argument("--frames", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--skip", type=int, default=None)
    _add_common(s)

    v = sub.add_parser("voxelize", help="build a voxel grid from an event file")
    v.add_argument("--events", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--bins", type=int, default=None)
    v.add_argument("--window", default=None, help="'t0,t1' in seconds (default: stream extent)")
    v.add_argument("--reverse", action="store_true", help="reverse the stream first")
    _add_common(v)

    e = sub.add_parser("segment", help="superpixels + motion mask for one boundary image")
    e.add_argument("--image", required=True)
    e.add_argument("--events", required=True)
    e.add_argument("--labels-out", required=True)
    e.add_argument("--mask-out", required=True)
    _add_common(e)

    t = sub.add_parser("track", help="track every motion region across voxel bins")
    t.add_argument("--voxel", required=True)
    t.add_argument("--labels", required=True)
    t.add_argument("--mask", required=True)
    t.add_argument("--image", required=True)
    t.add_argument("--image-to", default=None,
                   help="other boundary frame; enables the static-region check")
    t.add_argument("--events", required=True)
    t.add_argument("--out", required=True)
    _add_common(t)

    f = sub.add_parser("flow", help="densify and refine trajectories into flow fields")
    f.add_argument("--tracks", required=True)
    f.add_argument("--labels", required=True)
    f.add_argument("--mask", required=True)
    f.add_argument("--image", required=True)
    f.add_argument("--out-pattern", required=True, help="e.g. work/flow_fwd_bin%%02d.flo")
    f.add_argument("--direction", choices=["forward", "backward"], default="forward")
    _add_common(f)

    i = sub.add_parser("interpolate", help="synthesize frames at requested timestamps")
    i.add_argument("--i0", required=True)
    i.add_argument("--i1", required=True)
    i.add_argument("--fwd-pattern", required=True)
    i.add_argument("--bwd-pattern", required=True)
    i.add_argument("--t", default="0.5")
    i.add_argument("--out", required=True)
    _add_common(i)

    r = sub.add_parser("run", help="end-to-end pipeline")
    r.add_argument("--frames", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--t", default=None)
    r.add_argument("--skip", type=int, default=None)
    r.add_argument("--events", default=None, help="use this event file instead of simulating")
    r.add_argument("--dump-intermediates", default=None)
    _add_common(r)

    ev = sub.add_parser("evaluate", help="score outputs against scene ground truth")
    ev.add_argument("--scene", required=True)
    ev.add_argument("--pred", default=None)
    ev.add_argument("--work", default=None)
    ev.add_argument("--report-out", default=None)
    ev.add_argument("--bin-study", default=None,
                    help="comma-separated bin counts; emits a tracking-error table")
    _add_common(ev)
    return ap


def _cmd_gen_scene(args) -> int:
    vx, vy = (float(v) for v in args.velocity.split(","))
    spec = SceneSpec(kind=args.kind, width=args.width, height=args.height,
                     frame_count=args.frames, seed=args.seed, velocity=(vx, vy),
                     amplitude=args.amplitude, cycles=args.cycles,
                     rotation_deg=args.rotation, object_size=args.object_size)
    write_scene(spec, args.out, _parse_t_list(args.t))
    print("scene written to %s" % args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    frame_paths = pipeline.list_frames(args.frames)
    if args.skip is not None:
        frame_paths = frame_paths[:args.skip + 2]
    times = pipeline.load_frame_times(args.frames, len(frame_paths))
    pipeline.stage_simulate(frame_paths, times, cfg, args.out)
    print("events written to %s" % args.out)
    return EXIT_OK


def _cmd_voxelize(args) -> int:
    cfg = _load_config(args.config)
    bins = args.bins if args.bins is not None else cfg.voxel_bins
    if args.window:
        t0, t1 = (float(v) for v in args.window.split(","))
    else:
        stream = read_events(args.events)
        if len(stream) == 0:
            raise ConfigError("empty stream: specify --window explicitly")
        t0, t1 = float(stream.t[0]), float(stream.t[-1])
    pipeline.stage_voxelize(args.events, bins, t0, t1, args.out, args.reverse)
    print("voxel grid written to %s" % args.out)
    return EXIT_OK


def _cmd_segment(args) -> int:
    cfg = _load_config(args.config)
    pipeline.stage_segment(args.image, args.events, cfg, args.labels_out, args.mask_out)
    print("labels written to %s, mask to %s" % (args.labels_out, args.mask_out))
    return EXIT_OK


def _cmd_track(args) -> int:
    cfg = _load_config(args.config)
    threads = args.threads if args.threads is not None else cfg.run_threads
    pipeline.stage_track(args.voxel, args.labels, args.mask, args.image,
                         args.events, cfg, args.out, threads,
                         image_to_path=args.image_to)
    print("trajectories written to %s" % args.out)
    return EXIT_OK


def _cmd_flow(args) -> int:
    cfg = _load_config(args.config)
    pipeline.stage_flow(args.tracks, args.labels, args.mask, args.image, cfg,
                        args.out_pattern, args.direction)
    print("flow fields written to %s" % args.out_pattern)
    return EXIT_OK


def _cmd_interpolate(args) -> int:
    cfg = _load_config(args.config)
    threads = args.threads if args.threads is not None else cfg.run_threads
    paths = pipeline.stage_interpolate(args.i0, args.i1, args.fwd_pattern,
                                       args.bwd_pattern, cfg,
                                       _parse_t_list(args.t), args.out, threads)
    for p in paths:
        print("wrote %s" % p)
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    threads = args.threads if args.threads is not None else None
    t_list = _parse_t_list(args.t) if args.t else None
    result = pipeline.run_pipeline(args.frames, args.out, cfg,
                                   work_dir=args.dump_intermediates,
                                   events_path=args.events, skip=args.skip,
                                   t_list=t_list, threads=threads)
    for p in result["frames"]:
        print("wrote %s" % p)
    scene_cfg = os.path.join(args.frames, "scene.cfg")
    if os.path.exists(scene_cfg):
        scene = load_scene(args.frames)
        report = pipeline.evaluate_against_scene(scene, args.out, result["work"], cfg)
        report_path = os.path.join(args.out, "report.txt")
        with open(report_path, "w") as fh:
            fh.write(report.to_text())
        with open(os.path.join(args.out, "report.json"), "w") as fh:
            fh.write(report.to_json())
        print("report written to %s" % report_path)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    threads = args.threads if args.threads is not None else cfg.run_threads
    scene = load_scene(args.scene)
    report = None
    if args.pred:
        report = pipeline.evaluate_against_scene(scene, args.pred, args.work, cfg)
        sys.stdout.write(report.to_text())
    if args.bin_study:
        bins_list = [int(b) for b in args.bin_study.split(",") if b.strip()]
        rows = pipeline.bin_size_study(scene, bins_list, cfg, threads)
        print("bins  mean_track_error  endpoint_error  tracked_regions")
        for row in rows:
            print("%-5d %-17.6f %-15.6f %d" % (row["bins"], row["mean_track_error"],
                                               row["endpoint_error"], row["tracked_regions"]))
        if report is None:
            report = MetricReport()
        for row in rows:
            report.extra["track_error_b%d" % row["bins"]] = row["mean_track_error"]
    if report is not None and args.report_out:
        with open(args.report_out, "w") as fh:
            fh.write(report.to_text())
        base, ext = os.path.splitext(args.report_out)
        with open(base + ".json", "w") as fh:
            fh.write(report.to_json())
    if report is None:
        raise ConfigError("evaluate needs --pred and/or --bin-study")
    return EXIT_OK


_COMMANDS = {
    "gen-scene": _cmd_gen_scene,
    "simulate": _cmd_simulate,
    "voxelize": _cmd_voxelize,
    "segment": _cmd_segment,
    "track": _cmd_track,
    "flow": _cmd_flow,
    "interpolate": _cmd_interpolate,
    "run": _cmd_run,
    "evaluate": _cmd_evaluate,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print("io error: %s" % exc, file=sys.stderr)
        return EXIT_IO
    except pipeline.StageError as exc:
        print("pipeline error: %s" % exc, file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # noqa: BLE001 - stage failures map to exit code 4
        print("pipeline error: %s" % exc, file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
