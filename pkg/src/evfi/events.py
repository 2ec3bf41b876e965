"""Event streams: domain types, a threshold-model simulator, and stream utilities.

An event camera pixel fires whenever its log intensity drifts a full contrast
threshold C away from a per-pixel reference level; the reference then steps by
p*C.  The simulator below replays that model over a dense frame sequence,
interpolating log intensity linearly in time so every crossing instant is
analytic and reproducible.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

EVT_MAGIC = b"EVT1"
_EVT_HEADER = struct.Struct("<4sIIQ")
_EVT_RECORD = struct.Struct("<dHHbB")


@dataclass(frozen=True)
class Event:
    """Single polarity impulse at pixel (x, y) and time t (seconds)."""

    t: float
    x: int
    y: int
    p: int


@dataclass
class EventStream:
    """Time-sorted event arrays over a fixed sensor geometry.

    Stored as structure-of-arrays; iteration yields `Event` records.  Sort
    order is (t, y, x, p) lexicographic so serialization is bit-stable.
    """

    width: int
    height: int
    t: np.ndarray = field(default_factory=lambda: np.empty(0, np.float64))
    x: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    p: np.ndarray = field(default_factory=lambda: np.empty(0, np.int8))

    def __post_init__(self):
        self.t = np.asarray(self.t, np.float64)
        self.x = np.asarray(self.x, np.int32)
        self.y = np.asarray(self.y, np.int32)
        self.p = np.asarray(self.p, np.int8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event field arrays must have equal length")
        if n:
            if self.x.min() < 0 or self.x.max() >= self.width:
                raise ValueError("event x coordinate out of bounds")
            if self.y.min() < 0 or self.y.max() >= self.height:
                raise ValueError("event y coordinate out of bounds")
            if not np.all(np.abs(self.p) == 1):
                raise ValueError("polarity must be -1 or +1")
            if np.any(np.diff(self.t) < 0):
                raise ValueError("events must be sorted by time")

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for i in range(len(self.t)):
            yield Event(float(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def sorted(self) -> "EventStream":
        """Return a copy in canonical (t, y, x, p) order."""
        order = np.lexsort((self.p, self.x, self.y, self.t))
        return EventStream(self.width, self.height,
                           self.t[order], self.x[order], self.y[order], self.p[order])


@dataclass(frozen=True)
class SimulatorConfig:
    """Threshold-model parameters for the synthetic event generator."""

    contrast_threshold: float = 0.1
    log_eps: float = 1.0
    max_events_per_pixel_per_interval: int = 64

    def __post_init__(self):
        if self.contrast_threshold <= 0:
            raise ValueError("contrast_threshold must be positive")
        if self.log_eps <= 0:
            raise ValueError("log_eps must be positive")
        if self.max_events_per_pixel_per_interval < 1:
            raise ValueError("event cap must be a positive integer")


def log_intensity(frame: np.ndarray, log_eps: float = 1.0) -> np.ndarray:
    """log(I + log_eps) on a 0-255 intensity scale; safe for dark pixels."""
    return np.log(np.asarray(frame, np.float64) + log_eps)


def simulate_events(frames, timestamps, cfg: SimulatorConfig = SimulatorConfig()) -> EventStream:
    """Generate events from a dense grayscale frame sequence.

    Per pixel, a reference log intensity starts at the first frame's level.
    Between consecutive frames the log intensity is interpolated linearly in
    time; one event is emitted per full threshold crossing, timestamped at the
    crossing instant, and the reference steps by p*C per event.

    Pixels that would exceed the per-interval event cap are truncated and
    counted in a warning (never silently).
    """
    frames = [np.asarray(f, np.float64) for f in frames]
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    h, w = frames[0].shape
    for f in frames[1:]:
        if f.shape != (h, w):
            raise ValueError("frame dimensions differ")
    ts = np.asarray(timestamps, np.float64)
    if len(ts) != len(frames):
        raise ValueError("one timestamp per frame required")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("timestamps must be strictly increasing")

    C = cfg.contrast_threshold
    cap = cfg.max_events_per_pixel_per_interval
    ref = log_intensity(frames[0], cfg.log_eps)
    yy, xx = np.mgrid[0:h, 0:w]
    yy = yy.ravel()
    xx = xx.ravel()

    out_t, out_x, out_y, out_p = [], [], [], []
    capped_pixels = 0
    prev_log = ref.copy()
    for k in range(1, len(frames)):
        cur_log = log_intensity(frames[k], cfg.log_eps)
        delta = cur_log - ref
        pol = np.sign(delta)
        n = np.floor(np.abs(delta) / C).astype(np.int64)
        n[pol == 0] = 0
        over = n > cap
        if np.any(over):
            capped_pixels += int(np.count_nonzero(over))
            n = np.minimum(n, cap)

        n_flat = n.ravel()
        total = int(n_flat.sum())
        if total:
            pix = np.repeat(np.arange(h * w), n_flat)
            # per-pixel event ordinal 1..n
            offsets = np.concatenate(([0], np.cumsum(n_flat)[:-1]))
            ordinal = np.arange(total) - np.repeat(offsets, n_flat) + 1
            p_ev = pol.ravel()[pix]
            # crossing level = ref + ordinal*p*C; invert the linear ramp for time
            lvl = ref.ravel()[pix] + ordinal * p_ev * C
            ramp = (cur_log - prev_log).ravel()[pix]
            frac = np.where(ramp != 0.0,
                            (lvl - prev_log.ravel()[pix]) / np.where(ramp == 0.0, 1.0, ramp),
                            0.0)
            frac = np.clip(frac, 0.0, 1.0)
            t_ev = ts[k - 1] + frac * (ts[k] - ts[k - 1])
            out_t.append(t_ev)
            out_x.append(xx[pix])
            out_y.append(yy[pix])
            out_p.append(p_ev.astype(np.int8))
        ref = ref + n * pol * C
        prev_log = cur_log

    if capped_pixels:
        logger.warning("event cap (%d/pixel/interval) hit at %d pixel-intervals",
                       cap, capped_pixels)
    if not out_t:
        return EventStream(w, h)
    t = np.concatenate(out_t)
    x = np.concatenate(out_x).astype(np.int32)
    y = np.concatenate(out_y).astype(np.int32)
    p = np.concatenate(out_p)
    order = np.lexsort((p, x, y, t))
    return EventStream(w, h, t[order], x[order], y[order], p[order])


def reverse_stream(s: EventStream, t_start: float, t_end: float) -> EventStream:
    """Mirror a stream in time: (t, x, y, p) -> (t_start + t_end - t, x, y, -p)."""
    if len(s) and (s.t[0] < t_start or s.t[-1] > t_end):
        raise ValueError("event outside reversal window")
    t = (t_start + t_end) - s.t
    p = -s.p
    order = np.lexsort((p, s.x, s.y, t))
    return EventStream(s.width, s.height, t[order], s.x[order], s.y[order], p[order])


def accumulate_event_frame(s: EventStream) -> np.ndarray:
    """Binary H x W image: 1 where at least one event fired, polarity ignored."""
    frame = np.zeros((s.height, s.width), np.uint8)
    if len(s):
        frame[s.y, s.x] = 1
    return frame


def slice_stream(s: EventStream, t0: float, t1: float) -> EventStream:
    """Events with t0 <= t < t1, original order preserved."""
    if not t0 < t1:
        raise ValueError("slice interval must satisfy t0 < t1")
    lo = np.searchsorted(s.t, t0, side="left")
    hi = np.searchsorted(s.t, t1, side="left")
    return EventStream(s.width, s.height, s.t[lo:hi], s.x[lo:hi], s.y[lo:hi], s.p[lo:hi])


def write_events(path, s: EventStream) -> None:
    """Write the binary event file (magic EVT1, LE header, 14-byte records)."""
    with open(path, "wb") as f:
        f.write(_EVT_HEADER.pack(EVT_MAGIC, s.width, s.height, len(s)))
        if len(s):
            rec = np.zeros(len(s), dtype=np.dtype(
                [("t", "<f8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "u1")]))
            rec["t"] = s.t
            rec["x"] = s.x
            rec["y"] = s.y
            rec["p"] = s.p
            f.write(rec.tobytes())


def read_events(path) -> EventStream:
    """Read an EVT1 file, validating magic, bounds and polarity."""
    with open(path, "rb") as f:
        header = f.read(_EVT_HEADER.size)
        if len(header) != _EVT_HEADER.size:
            raise ValueError("truncated event file header")
        magic, width, height, count = _EVT_HEADER.unpack(header)
        if magic != EVT_MAGIC:
            raise ValueError("bad magic in event file")
        raw = f.read(count * _EVT_RECORD.size)
    if len(raw) != count * _EVT_RECORD.size:
        raise ValueError("truncated event records")
    rec = np.frombuffer(raw, dtype=np.dtype(
        [("t", "<f8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "u1")]))
    x = rec["x"].astype(np.int32)
    y = rec["y"].astype(np.int32)
    p = rec["p"].astype(np.int8)
    if count:
        if x.max(initial=0) >= width or y.max(initial=0) >= height:
            raise ValueError("event coordinates out of bounds")
        if not np.all(np.abs(p) == 1):
            raise ValueError("polarity must be -1 or +1")
    return EventStream(width, height, rec["t"].astype(np.float64), x, y, p)
