"""Pipeline configuration: diff-friendly `section.key=value` text files."""

from __future__ import annotations

from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    pass


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(tok) for tok in text.split(",") if tok.strip() != ""]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str) -> dict:
    """Parse `key=value` lines; '#' starts a comment, blank lines ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key=value" % lineno)
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


def serialize_config(values: dict) -> str:
    return "".join("%s=%s\n" % (k, _format_value(values[k])) for k in sorted(values))


def read_config(path) -> dict:
    with open(path) as f:
        return parse_config_text(f.read())


def write_config(path, values: dict) -> None:
    with open(path, "w") as f:
        f.write(serialize_config(values))


@dataclass
class PipelineConfig:
    """Every stage parameter, flattened with section prefixes for the file form."""

    # low threshold = dense streams; synthetic oracle scenes rely on that
    simulator_contrast_threshold: float = 0.005
    simulator_log_eps: float = 1.0
    simulator_max_events_per_pixel: int = 64
    voxel_bins: int = 16
    slic_clusters: int = 0          # 0 = auto: one cluster per ~256 px
    slic_compactness: float = 10.0
    slic_iters: int = 10
    mask_radius: int = 2
    mask_min_component_px: int = 8
    regions_min_overlap: float = 0.1
    tracker_window_length: int = 10
    tracker_refine_iters: int = 5
    tracker_patch_radius: int = 5
    tracker_max_step: float = 8.0
    tracker_visibility_threshold: float = 0.3
    flow_gamma1: float = 0.01
    flow_gamma2: float = 0.5
    flow_occlusion_threshold: float = 0.5
    flow_smooth_iters: int = 30
    flow_lambda_smooth: float = 0.1
    flow_guide_sigma: float = 15.0
    run_timestamps: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    run_skip: int = 7
    run_threads: int = 0            # 0 = auto; results never depend on it
    io_frames_dir: str = ""
    io_events_path: str = ""
    io_output_dir: str = ""

    _SECTIONS = {
        "simulator": ("contrast_threshold", "log_eps", "max_events_per_pixel"),
        "voxel": ("bins",),
        "slic": ("clusters", "compactness", "iters"),
        "mask": ("radius", "min_component_px"),
        "regions": ("min_overlap",),
        "tracker": ("window_length", "refine_iters", "patch_radius", "max_step",
                    "visibility_threshold"),
        "flow": ("gamma1", "gamma2", "occlusion_threshold", "smooth_iters",
                 "lambda_smooth", "guide_sigma"),
        "run": ("timestamps", "skip", "threads"),
        "io": ("frames_dir", "events_path", "output_dir"),
    }

    def to_dict(self) -> dict:
        out = {}
        for section, keys in self._SECTIONS.items():
            for key in keys:
                out["%s.%s" % (section, key)] = getattr(self, "%s_%s" % (section, key))
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for dotted, value in values.items():
            name = dotted.replace(".", "_", 1)
            if name not in known:
                raise ConfigError("unknown config key %r" % dotted)
            kwargs[name] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        checks = [
            (self.simulator_contrast_threshold > 0, "simulator.contrast_threshold must be > 0"),
            (self.simulator_log_eps > 0, "simulator.log_eps must be > 0"),
            (self.simulator_max_events_per_pixel >= 1, "simulator.max_events_per_pixel must be >= 1"),
            (self.voxel_bins >= 1, "voxel.bins must be >= 1"),
            (self.slic_clusters >= 0, "slic.clusters must be >= 0"),
            (self.slic_compactness > 0, "slic.compactness must be > 0"),
            (self.slic_iters >= 1, "slic.iters must be >= 1"),
            (self.mask_radius >= 1, "mask.radius must be >= 1"),
            (self.mask_min_component_px >= 0, "mask.min_component_px must be >= 0"),
            (0.0 <= self.regions_min_overlap <= 1.0, "regions.min_overlap must be in [0, 1]"),
            (self.tracker_window_length >= 2, "tracker.window_length must be >= 2"),
            (self.tracker_refine_iters >= 1, "tracker.refine_iters must be >= 1"),
            (self.tracker_patch_radius >= 1, "tracker.patch_radius must be >= 1"),
            (self.tracker_max_step >= 1, "tracker.max_step must be >= 1"),
            (self.flow_gamma1 > 0, "flow.gamma1 must be > 0"),
            (self.flow_gamma2 > 0, "flow.gamma2 must be > 0"),
            (0 < self.flow_occlusion_threshold <= 1, "flow.occlusion_threshold must be in (0, 1]"),
            (self.flow_smooth_iters >= 0, "flow.smooth_iters must be >= 0"),
            (0 <= self.flow_lambda_smooth <= 1, "flow.lambda_smooth must be in [0, 1]"),
            (self.flow_guide_sigma > 0, "flow.guide_sigma must be > 0"),
            (self.run_skip >= 0, "run.skip must be >= 0"),
            (self.run_threads >= 0, "run.threads must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        for t in self.timestamps():
            if not 0.0 <= t <= 1.0:
                raise ConfigError("run.timestamps must lie in [0, 1]")

    def timestamps(self) -> list:
        ts = self.run_timestamps
        if isinstance(ts, (int, float)):
            ts = [ts]
        return [float(t) for t in ts]

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(read_config(path))

    def save(self, path) -> None:
        write_config(path, self.to_dict())
