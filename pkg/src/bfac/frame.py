"""Pictures, videos, file I/O and GOP segmentation.

A :class:`Frame` stores planar 8-bit samples as a read-only ``(planes, height,
width)`` uint8 array. One plane means grayscale, three planes mean RGB.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    InvalidArgument,
    MalformedHeader,
    TruncatedData,
    UnsupportedBitDepth,
    UnsupportedFormat,
)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(np.asarray(x, dtype=np.float64)), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Frame:
    planes: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.planes)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise InvalidArgument(f"frame must have 1 or 3 planes, got shape {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise InvalidArgument("frame must be non-empty")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.integer) and (arr.min() < 0 or arr.max() > 255):
                raise InvalidArgument("sample values must lie in [0, 255]")
            arr = to_uint8(arr)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "planes", arr)

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def n_planes(self) -> int:
        return self.planes.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.planes.shape

    def luma(self) -> np.ndarray:
        """Float luma plane (BT.601 weights for RGB, the plane itself for grayscale)."""
        p = self.planes.astype(np.float64)
        if self.n_planes == 1:
            return p[0]
        return np.tensordot(LUMA_WEIGHTS, p, axes=1)

    def to_gray(self) -> "Frame":
        if self.n_planes == 1:
            return self
        return Frame(to_uint8(self.luma())[None])

    def to_rgb(self) -> "Frame":
        if self.n_planes == 3:
            return self
        return Frame(np.repeat(self.planes, 3, axis=0))

    def float_planes(self) -> np.ndarray:
        return self.planes.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.planes, other.planes))

    def __hash__(self):
        return hash((self.shape, self.planes.tobytes()))

    @classmethod
    def constant(cls, width: int, height: int, value: int, n_planes: int = 1) -> "Frame":
        return cls(np.full((n_planes, height, width), value, dtype=np.uint8))


@dataclass(frozen=True)
class Video:
    frames: tuple[Frame, ...]
    fps: float = 25.0

    def __post_init__(self):
        frames = tuple(self.frames)
        if frames:
            shape = frames[0].shape
            for f in frames[1:]:
                if f.shape != shape:
                    raise InvalidArgument("all frames must share dimensions and plane count")
        if not self.fps > 0:
            raise InvalidArgument("fps must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def n_planes(self) -> int:
        return self.frames[0].n_planes


@dataclass(frozen=True)
class GopUnit:
    start_index: int
    end_index: int
    past_key: Frame
    future_key: Frame
    intermediates: tuple[Frame, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.end_index - self.start_index < 1:
            raise InvalidArgument("a GOP spans at least two frames")
        object.__setattr__(self, "intermediates", tuple(self.intermediates))
        if len(self.intermediates) != self.end_index - self.start_index - 1:
            raise InvalidArgument("intermediate count does not match GOP span")

    @property
    def size(self) -> int:
        return self.end_index - self.start_index + 1

    @property
    def intermediate_indices(self) -> range:
        return range(self.start_index + 1, self.end_index)


def gop_count(frame_count: int, gop_size: int) -> int:
    """Number of GOPs :func:`gop_bounds` yields, without building them."""
    if gop_size < 2:
        raise InvalidArgument(f"gop_size must be >= 2, got {gop_size}")
    if frame_count < 2:
        raise InvalidArgument(f"need at least 2 frames, got {frame_count}")
    return -(-(frame_count - 1) // (gop_size - 1))


def gop_bounds(frame_count: int, gop_size: int) -> list[tuple[int, int]]:
    """Inclusive (start, end) index pairs; neighbouring GOPs share one boundary frame."""
    gop_count(frame_count, gop_size)
    stride = gop_size - 1
    bounds = []
    start = 0
    while start < frame_count - 1:
        end = min(start + stride, frame_count - 1)
        bounds.append((start, end))
        start = end
    return bounds


def segment_gops(video: Video | Sequence[Frame], gop_size: int) -> list[GopUnit]:
    frames = video.frames if isinstance(video, Video) else tuple(video)
    return [
        GopUnit(s, e, frames[s], frames[e], frames[s + 1 : e])
        for s, e in gop_bounds(len(frames), gop_size)
    ]


def flatten_gops(gops: Sequence[GopUnit]) -> list[Frame]:
    """Inverse of :func:`segment_gops`: frames in order, boundaries once."""
    out: list[Frame] = []
    for i, g in enumerate(gops):
        if i == 0:
            out.append(g.past_key)
        out.extend(g.intermediates)
        out.append(g.future_key)
    return out


# --- raw planar + sidecar -------------------------------------------------

def sidecar_path(path: str | os.PathLike) -> Path:
    return Path(str(path) + ".hdr")


def _parse_sidecar(text: str) -> dict[str, str]:
    fields = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedHeader(f"sidecar line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        fields[k.strip()] = v.strip()
    return fields


def load_raw(path: str | os.PathLike) -> Video:
    hdr = sidecar_path(path)
    if not hdr.exists():
        raise MalformedHeader(f"missing sidecar header {hdr}")
    fields = _parse_sidecar(hdr.read_text(encoding="ascii"))
    try:
        width = int(fields["width"])
        height = int(fields["height"])
        count = int(fields["frames"])
        n_planes = int(fields.get("planes", "1"))
        depth = int(fields.get("bitdepth", "8"))
        fps = float(fields.get("fps", "25"))
    except (KeyError, ValueError) as exc:
        raise MalformedHeader(f"bad sidecar header: {exc}") from None
    if depth != 8:
        raise UnsupportedBitDepth(f"unsupported bit depth {depth}")
    if width < 1 or height < 1 or count < 0 or n_planes not in (1, 3) or not fps > 0:
        raise MalformedHeader("sidecar values out of range")
    data = Path(path).read_bytes()
    frame_bytes = width * height * n_planes
    if len(data) < frame_bytes * count:
        raise TruncatedData(f"expected {frame_bytes * count} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype=np.uint8, count=frame_bytes * count)
    arr = arr.reshape(count, n_planes, height, width)
    return Video(tuple(Frame(a.copy()) for a in arr), fps=fps)


def save_raw(video: Video, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        for f in video.frames:
            fh.write(f.planes.tobytes())
    sidecar_path(path).write_text(
        f"width={video.width}\nheight={video.height}\nframes={len(video)}\n"
        f"planes={video.n_planes}\nbitdepth=8\nfps={video.fps!r}\n",
        encoding="ascii",
    )


# --- y4m ------------------------------------------------------------------

_Y4M_MAGIC = b"YUV4MPEG2"


def _parse_y4m_params(tokens: list[bytes]) -> dict[str, str]:
    params = {}
    for tok in tokens:
        if not tok:
            continue
        params[chr(tok[0])] = tok[1:].decode("ascii", "replace")
    return params


def load_y4m(path: str | os.PathLike) -> Video:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0 or not data.startswith(_Y4M_MAGIC + b" "):
        raise MalformedHeader("not a YUV4MPEG2 stream")
    params = _parse_y4m_params(data[len(_Y4M_MAGIC) + 1 : nl].split(b" "))
    try:
        width = int(params["W"])
        height = int(params["H"])
    except (KeyError, ValueError):
        raise MalformedHeader("y4m header lacks valid W/H") from None
    fps = 25.0
    if "F" in params:
        try:
            num, den = params["F"].split(":")
            fps = int(num) / int(den)
        except (ValueError, ZeroDivisionError):
            raise MalformedHeader(f"bad frame rate {params['F']!r}") from None
    colour = params.get("C", "420jpeg")
    if colour == "444":
        n_planes = 3
    elif colour == "mono":
        n_planes = 1
    elif re.fullmatch(r"(444|mono)p\d+", colour):
        raise UnsupportedBitDepth(f"unsupported bit depth in colour space {colour!r}")
    else:
        raise UnsupportedFormat(f"unsupported pixel format {colour!r}")
    if width < 1 or height < 1:
        raise MalformedHeader("y4m dimensions must be positive")
    frame_bytes = width * height * n_planes
    frames = []
    pos = nl + 1
    while pos < len(data):
        end = data.find(b"\n", pos)
        if end < 0 or not data.startswith(b"FRAME", pos):
            raise MalformedHeader(f"expected FRAME marker at byte {pos}")
        pos = end + 1
        if pos + frame_bytes > len(data):
            raise TruncatedData(f"frame {len(frames)} truncated")
        arr = np.frombuffer(data, dtype=np.uint8, count=frame_bytes, offset=pos)
        frames.append(Frame(arr.reshape(n_planes, height, width).copy()))
        pos += frame_bytes
    return Video(tuple(frames), fps=fps)


def fps_fraction(fps: float) -> tuple[int, int]:
    from fractions import Fraction

    f = Fraction(fps).limit_denominator(1001)
    return f.numerator, f.denominator


def save_y4m(video: Video, path: str | os.PathLike) -> None:
    num, den = fps_fraction(video.fps)
    colour = "444" if video.n_planes == 3 else "mono"
    with open(path, "wb") as fh:
        fh.write(
            f"YUV4MPEG2 W{video.width} H{video.height} F{num}:{den} Ip A1:1 C{colour}\n".encode("ascii")
        )
        for f in video.frames:
            fh.write(b"FRAME\n")
            fh.write(f.planes.tobytes())


def _infer_format(path: str | os.PathLike, format: str | None) -> str:
    if format:
        if format not in ("raw", "y4m"):
            raise InvalidArgument(f"unknown video format {format!r}")
        return format
    return "y4m" if str(path).lower().endswith(".y4m") else "raw"


def load_video(path: str | os.PathLike, format: str | None = None) -> Video:
    """Read a ``raw`` (planar + ``.hdr`` sidecar) or ``y4m`` video."""
    if not Path(path).exists():
        raise FileNotFoundError(path)
    if _infer_format(path, format) == "y4m":
        return load_y4m(path)
    return load_raw(path)


def save_video(video: Video, path: str | os.PathLike, format: str | None = None) -> None:
    if _infer_format(path, format) == "y4m":
        save_y4m(video, path)
    else:
        save_raw(video, path)
