"""Binary netpbm readers and writers (P5 grayscale, P6 color).

8-bit frames use maxval 255; label maps are written as 16-bit P5 with maxval
65535 and big-endian samples, as the format requires.
"""

from __future__ import annotations

import numpy as np


def _read_tokens(f, n):
    tokens = []
    while len(tokens) < n:
        line = f.readline()
        if not line:
            raise ValueError("truncated netpbm header")
        line = line.split(b"#", 1)[0]
        tokens.extend(line.split())
    return tokens


def read_netpbm(path) -> np.ndarray:
    """Read a binary PGM/PPM file into uint8 (H, W) / (H, W, 3) or uint16."""
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic not in (b"P5", b"P6"):
            raise ValueError("unsupported netpbm magic %r" % magic)
        width, height, maxval = (int(v) for v in _read_tokens(f, 3))
        if maxval <= 0 or maxval > 65535:
            raise ValueError("invalid maxval %d" % maxval)
        channels = 3 if magic == b"P6" else 1
        two_byte = maxval > 255
        count = width * height * channels
        raw = f.read(count * (2 if two_byte else 1))
    if len(raw) != count * (2 if two_byte else 1):
        raise ValueError("truncated netpbm pixel data")
    dtype = ">u2" if two_byte else np.uint8
    img = np.frombuffer(raw, dtype).reshape(
        (height, width) if channels == 1 else (height, width, 3))
    return img.astype(np.uint16) if two_byte else img.copy()


def write_pgm(path, img: np.ndarray, maxval: int = 255) -> None:
    """Write uint8 (maxval 255) or uint16 (maxval 65535) grayscale P5."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n%d\n" % (img.shape[1], img.shape[0], maxval))
        if maxval > 255:
            f.write(img.astype(">u2").tobytes())
        else:
            f.write(img.astype(np.uint8).tobytes())


def write_ppm(path, img: np.ndarray) -> None:
    """Write uint8 (H, W, 3) color P6."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM image must be (H, W, 3)")
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        f.write(img.astype(np.uint8).tobytes())


def quantize_frame(img: np.ndarray) -> np.ndarray:
    """Round half away from zero and clamp to [0, 255] for file output."""
    q = np.floor(np.abs(img) + 0.5) * np.sign(img)
    return np.clip(q, 0, 255).astype(np.uint8)
