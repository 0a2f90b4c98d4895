"""Keypoint extraction, quantization and temporal entropy coding.

Coordinates are normalized so that 0 and 1 land on the centres of the first
and last pixel: ``x_norm = x_px / (width - 1)``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy import ndimage

from . import rangecoder as rc
from .errors import DecodeError, InvalidArgument, MalformedHeader, TruncatedData
from .frame import Frame

DEFAULT_COUNT = 10
DEFAULT_PRECISION = 8


@dataclass(frozen=True, eq=False)
class KeypointSet:
    points: np.ndarray
    jacobians: np.ndarray | None = None
    padded: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(pts)) or pts.min(initial=0) < 0 or pts.max(initial=0) > 1:
            raise InvalidArgument("keypoint coordinates must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.jacobians is not None:
            jac = np.asarray(self.jacobians, dtype=np.float64).reshape(-1, 2, 2)
            if jac.shape[0] != pts.shape[0]:
                raise InvalidArgument("one jacobian per keypoint required")
            det = np.linalg.det(jac)
            if not np.all(np.isfinite(det)) or np.any(det == 0):
                raise InvalidArgument("jacobians must be invertible")
            jac.setflags(write=False)
            object.__setattr__(self, "jacobians", jac)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def jacobian_array(self) -> np.ndarray:
        if self.jacobians is None:
            return np.broadcast_to(np.eye(2), (self.count, 2, 2))
        return self.jacobians

    def __eq__(self, other):
        if not isinstance(other, KeypointSet):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.jacobian_array(), other.jacobian_array())
        )

    def to_pixels(self, width: int, height: int) -> np.ndarray:
        return self.points * [max(width - 1, 1), max(height - 1, 1)]

    @classmethod
    def from_pixels(cls, px: np.ndarray, width: int, height: int, **kw) -> "KeypointSet":
        pts = np.asarray(px, dtype=np.float64) / [max(width - 1, 1), max(height - 1, 1)]
        return cls(np.clip(pts, 0.0, 1.0), **kw)


@dataclass(frozen=True)
class QuantizedKeypoints:
    indices: np.ndarray
    precision: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, 2)
        if idx.min(initial=0) < 0 or idx.max(initial=0) > (1 << self.precision) - 1:
            raise InvalidArgument("quantized index out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __eq__(self, other):
        if not isinstance(other, QuantizedKeypoints):
            return NotImplemented
        return self.precision == other.precision and np.array_equal(self.indices, other.indices)

    @property
    def count(self) -> int:
        return self.indices.shape[0]


# --- extraction -----------------------------------------------------------

@dataclass(frozen=True)
class CornerDetector:
    """Shi-Tomasi style detector: minimum eigenvalue of the smoothed structure tensor.

    A pixel is a candidate when it is a local maximum of the response and the
    response exceeds both ``abs_threshold`` and ``rel_threshold`` times the
    frame maximum. Candidates are accepted greedily by response, rejecting any
    within ``nms_radius`` pixels (Chebyshev) of one already accepted.
    """

    count: int = DEFAULT_COUNT
    nms_radius: int = 8
    tensor_sigma: float = 1.5
    rel_threshold: float = 0.05
    abs_threshold: float = 1.0

    def response(self, frame: Frame) -> np.ndarray:
        y = frame.luma()
        gx = ndimage.sobel(y, axis=1, mode="nearest") / 8.0
        gy = ndimage.sobel(y, axis=0, mode="nearest") / 8.0
        a = ndimage.gaussian_filter(gx * gx, self.tensor_sigma, mode="nearest")
        b = ndimage.gaussian_filter(gx * gy, self.tensor_sigma, mode="nearest")
        c = ndimage.gaussian_filter(gy * gy, self.tensor_sigma, mode="nearest")
        return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)

    def __call__(self, frame: Frame, index: int | None = None) -> KeypointSet:
        r = self.response(frame)
        peak = float(r.max())
        thresh = max(self.abs_threshold, self.rel_threshold * peak)
        local_max = r == ndimage.maximum_filter(r, size=3, mode="nearest")
        ys, xs = np.nonzero(local_max & (r > thresh))
        order = np.lexsort((xs, ys, -r[ys, xs]))
        chosen: list[tuple[int, int]] = []
        for i in order:
            y, x = int(ys[i]), int(xs[i])
            if all(max(abs(y - cy), abs(x - cx)) > self.nms_radius for cy, cx in chosen):
                chosen.append((y, x))
                if len(chosen) == self.count:
                    break
        padded = len(chosen) < self.count
        chosen.sort()
        px = [(x, y) for y, x in chosen]
        pts = KeypointSet.from_pixels(np.array(px, dtype=np.float64).reshape(-1, 2), frame.width, frame.height).points
        if padded:
            pts = np.vstack([pts, np.full((self.count - len(chosen), 2), 0.5)])
        return KeypointSet(pts, padded=padded)


class SidecarKeypoints:
    """Keypoints read from a text file; see ``docs/format.md`` for the grammar."""

    def __init__(self, records: dict[int, KeypointSet]):
        self.records = dict(records)

    @classmethod
    def load(cls, path: str | os.PathLike, count: int | None = None) -> "SidecarKeypoints":
        return cls(read_keypoint_file(path, count))

    def __call__(self, frame: Frame, index: int | None = None) -> KeypointSet:
        if index is None:
            raise InvalidArgument("sidecar keypoints need a frame index")
        try:
            return self.records[index]
        except KeyError:
            raise InvalidArgument(f"no keypoints recorded for frame {index}") from None


KeypointProvider = Callable[..., KeypointSet]


def extract_keypoints(frame: Frame, provider: KeypointProvider | None = None, index: int | None = None) -> KeypointSet:
    if provider is None:
        provider = CornerDetector()
    return provider(frame, index)


def read_keypoint_file(path: str | os.PathLike, count: int | None = None) -> dict[int, KeypointSet]:
    records = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            index = int(fields[0])
            values = [float(v) for v in fields[1:]]
        except ValueError:
            raise MalformedHeader(f"keypoint file line {lineno}: non-numeric field") from None
        if not values or len(values) % 2:
            raise MalformedHeader(f"keypoint file line {lineno}: expected x y pairs")
        if count is not None and len(values) != 2 * count:
            raise MalformedHeader(f"keypoint file line {lineno}: expected {count} points")
        if index in records:
            raise MalformedHeader(f"keypoint file line {lineno}: duplicate frame {index}")
        try:
            records[index] = KeypointSet(np.array(values).reshape(-1, 2))
        except InvalidArgument as exc:
            raise MalformedHeader(f"keypoint file line {lineno}: {exc}") from None
    return records


def write_keypoint_file(path: str | os.PathLike, records: dict[int, KeypointSet]) -> None:
    lines = []
    for index in sorted(records):
        coords = " ".join(f"{v:.6f}" for v in records[index].points.ravel())
        lines.append(f"{index} {coords}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


# --- quantization ---------------------------------------------------------

def _check_precision(p: int) -> None:
    if not 4 <= p <= 16:
        raise InvalidArgument(f"precision must be in [4, 16], got {p}")


def quantize_keypoints(kps: KeypointSet, precision: int = DEFAULT_PRECISION) -> QuantizedKeypoints:
    _check_precision(precision)
    scale = (1 << precision) - 1
    x = np.clip(kps.points, 0.0, 1.0) * scale
    return QuantizedKeypoints(np.floor(x + 0.5).astype(np.int64), precision)


def dequantize_keypoints(q: QuantizedKeypoints) -> KeypointSet:
    return KeypointSet(q.indices / ((1 << q.precision) - 1))


# --- stream coding --------------------------------------------------------

_STREAM_HEADER = struct.Struct("<BB")
_CTX_X, _CTX_Y = 0, 1


def _delta_models(precision: int) -> list[rc.SymbolModel]:
    return [rc.SymbolModel(precision + 1, increment=4)] * 2


@njit(cache=True)
def _bitlen(v):
    s = 0
    while v > 0:
        v >>= 1
        s += 1
    return s


@njit(cache=True)
def _encode_kp(idx, precision, freq, total, alph, inc, limit):
    n_frames, k = idx.shape[0], idx.shape[1]
    st, buf = rc.enc_new(n_frames * k * 2 * 4 + 16)
    mod = np.int64(1) << precision
    half = mod >> 1
    for f in range(n_frames):
        for j in range(k):
            for a in range(2):
                v = idx[f, j, a]
                if f == 0:
                    rc.enc_bits(st, buf, v, precision)
                    continue
                d = (v - idx[f - 1, j, a]) % mod
                if d >= half:
                    d -= mod
                mag = abs(d)
                s = _bitlen(mag)
                rc.enc_symbol(st, buf, freq, total, alph, inc, limit, a, s)
                if s > 0:
                    sign = 1 if d < 0 else 0
                    rc.enc_bits(st, buf, (sign << (s - 1)) | (mag - (np.int64(1) << (s - 1))), s)
    return rc.enc_finish(st, buf).copy()


@njit(cache=True)
def _decode_kp(data, n_frames, k, precision, freq, total, alph, inc, limit):
    idx = np.zeros((n_frames, k, 2), dtype=np.int64)
    st = rc.dec_new(data)
    mod = np.int64(1) << precision
    for f in range(n_frames):
        for j in range(k):
            for a in range(2):
                if f == 0:
                    idx[f, j, a] = rc.dec_bits(st, data, precision)
                    continue
                s = rc.dec_symbol(st, data, freq, total, alph, inc, limit, a)
                d = 0
                if s > 0:
                    payload = rc.dec_bits(st, data, s)
                    mag = (payload & ((np.int64(1) << (s - 1)) - 1)) + (np.int64(1) << (s - 1))
                    d = -mag if payload >> (s - 1) else mag
                idx[f, j, a] = (idx[f - 1, j, a] + d) % mod
    return idx, st


def encode_keypoint_stream(sets: Sequence[QuantizedKeypoints]) -> bytes:
    """Code a run of keypoint sets: the first raw, the rest as wrapped deltas.

    Deltas are taken modulo ``2**precision`` and mapped to the signed range
    ``[-2**(p-1), 2**(p-1))``, so the coded alphabet never grows beyond p bits.
    """
    sets = list(sets)
    if not sets:
        return b""
    k, p = sets[0].count, sets[0].precision
    if any(s.count != k or s.precision != p for s in sets):
        raise InvalidArgument("all keypoint sets must share count and precision")
    if not 1 <= k <= 255:
        raise InvalidArgument("keypoint count must be in [1, 255]")
    idx = np.ascontiguousarray(np.stack([s.indices for s in sets]))
    ms = rc.ModelSet(_delta_models(p))
    return _STREAM_HEADER.pack(k, p) + _encode_kp(idx, p, *ms.arrays()).tobytes()


def decode_keypoint_stream(data: bytes, frame_count: int) -> list[QuantizedKeypoints]:
    if frame_count == 0:
        if data:
            raise DecodeError("keypoint stream present for zero frames")
        return []
    if len(data) < _STREAM_HEADER.size:
        raise TruncatedData("keypoint stream shorter than its header")
    k, p = _STREAM_HEADER.unpack_from(data)
    if k < 1 or not 4 <= p <= 16:
        raise DecodeError("invalid keypoint stream header")
    buf = np.frombuffer(data, dtype=np.uint8, offset=_STREAM_HEADER.size)
    ms = rc.ModelSet(_delta_models(p))
    idx, st = _decode_kp(buf, frame_count, k, p, *ms.arrays())
    rc.check_decoder_state(st, buf)
    return [QuantizedKeypoints(idx[f], p) for f in range(frame_count)]
