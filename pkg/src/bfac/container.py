"""The ``.bfac`` container: header, per-GOP records and bit accounting.

Layout (all integers little-endian, no padding) is specified in
``docs/format.md``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import BadMagic, InvalidArgument, LengthOverrun, MalformedHeader, TruncatedData, VersionMismatch
from .frame import gop_count
from .motion import MotionConfig

MAGIC = b"BFAC"
VERSION = 1
SELECTION_MODES = ("adaptive", "forced-past")

_FIXED = struct.Struct("<4sBHHBIHBBBBBIIIdddd")
_U32 = struct.Struct("<I")
CATEGORIES = ("keyframes", "aux_stream", "keypoints", "headers")


@dataclass(frozen=True)
class ContainerHeader:
    width: int
    height: int
    n_planes: int
    frame_count: int
    gop_size: int
    qp_key: int
    qp_aux: int
    kp_count: int = 10
    kp_precision: int = 8
    selection: str = "adaptive"
    fps_num: int = 25
    fps_den: int = 1
    sigma: float = 0.1
    w0: float = 0.01
    saturation: float = 0.01
    snap: float = 1.5
    enhancer: str = "guided"
    version: int = VERSION

    def __post_init__(self):
        if self.frame_count < 2:
            raise InvalidArgument("a container holds at least 2 frames")
        if self.selection not in SELECTION_MODES:
            raise InvalidArgument(f"unknown selection mode {self.selection!r}")
        if self.n_planes not in (1, 3):
            raise InvalidArgument("plane count must be 1 or 3")
        if not (1 <= len(self.enhancer.encode("ascii")) <= 255):
            raise InvalidArgument("enhancer id must be 1-255 ASCII characters")
        gop_count(self.frame_count, self.gop_size)

    @property
    def fps(self) -> float:
        return self.fps_num / self.fps_den

    @property
    def gop_count(self) -> int:
        return gop_count(self.frame_count, self.gop_size)

    def pack(self) -> bytes:
        name = self.enhancer.encode("ascii")
        try:
            fixed = _FIXED.pack(
                MAGIC, self.version, self.width, self.height, self.n_planes, self.frame_count,
                self.gop_size, self.qp_key, self.qp_aux, self.kp_count, self.kp_precision,
                SELECTION_MODES.index(self.selection), self.fps_num, self.fps_den, self.gop_count,
                self.sigma, self.w0, self.saturation, self.snap,
            )
        except struct.error as exc:
            raise InvalidArgument(f"header field out of range: {exc}") from None
        return fixed + bytes([len(name)]) + name


@dataclass(frozen=True)
class GopRecord:
    keyframes: tuple[bytes, ...]
    aux: bytes = b""
    keypoints: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "keyframes", tuple(bytes(k) for k in self.keyframes))


@dataclass
class RateReport:
    categories: dict[str, int] = field(default_factory=lambda: dict.fromkeys(CATEGORIES, 0))
    per_gop: list[dict[str, int]] = field(default_factory=list)

    @property
    def total_bits(self) -> int:
        return sum(self.categories.values())

    def add(self, category: str, nbytes: int, gop: int | None = None) -> None:
        self.categories[category] += 8 * nbytes
        if gop is not None:
            while len(self.per_gop) <= gop:
                self.per_gop.append(dict.fromkeys(CATEGORIES, 0))
            self.per_gop[gop][category] += 8 * nbytes

    def lines(self) -> list[str]:
        out = [f"bits_{c}={self.categories[c]}" for c in CATEGORIES]
        out.append(f"bits_total={self.total_bits}")
        return out


def _check_records(header: ContainerHeader, records: list[GopRecord]) -> None:
    if len(records) != header.gop_count:
        raise InvalidArgument(f"expected {header.gop_count} GOP records, got {len(records)}")
    for i, r in enumerate(records):
        want = 2 if i == 0 else 1
        if len(r.keyframes) != want:
            raise InvalidArgument(f"GOP record {i} must carry {want} keyframe payload(s)")


def mux(header: ContainerHeader, records: list[GopRecord]) -> bytes:
    _check_records(header, records)
    parts = [header.pack()]
    for r in records:
        parts.append(bytes([len(r.keyframes)]))
        for blob in (*r.keyframes, r.aux, r.keypoints):
            parts.append(_U32.pack(len(blob)))
            parts.append(blob)
    return b"".join(parts)


def rate_report(header: ContainerHeader, records: list[GopRecord]) -> RateReport:
    """Bits per category; the category sum equals 8x the muxed byte length."""
    rep = RateReport()
    rep.add("headers", len(header.pack()))
    for g, r in enumerate(records):
        rep.add("headers", 1 + _U32.size * (len(r.keyframes) + 2), g)
        for k in r.keyframes:
            rep.add("keyframes", len(k), g)
        rep.add("aux_stream", len(r.aux), g)
        rep.add("keypoints", len(r.keypoints), g)
    return rep


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedData(f"stream truncated while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def blob(self, what: str) -> bytes:
        (n,) = _U32.unpack(self.take(_U32.size, f"{what} length"))
        if self.pos + n > len(self.data):
            raise LengthOverrun(f"{what} length {n} overruns the stream")
        return self.take(n, what)


def parse_header(data: bytes) -> tuple[ContainerHeader, int]:
    rd = _Reader(data)
    magic = rd.take(4, "magic")
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    version = rd.take(1, "version")[0]
    if version != VERSION:
        raise VersionMismatch(f"unsupported container version {version}")
    rd.pos = 0
    fields = _FIXED.unpack(rd.take(_FIXED.size, "header"))
    (_, version, width, height, planes, frames, gop, qk, qa, kc, kp, sel, fnum, fden, gop_count,
     sigma, w0, sat, snap) = fields
    name_len = rd.take(1, "enhancer id length")[0]
    raw_name = rd.take(name_len, "enhancer id")
    try:
        name = raw_name.decode("ascii")
        if sel >= len(SELECTION_MODES) or fden == 0 or fnum == 0:
            raise ValueError("selection mode or frame rate")
        header = ContainerHeader(
            width, height, planes, frames, gop, qk, qa, kc, kp, SELECTION_MODES[sel],
            fnum, fden, sigma, w0, sat, snap, name, version,
        )
        MotionConfig(sigma, w0, sat, snap)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedHeader(f"invalid container header: {exc}") from None
    if width < 1 or height < 1:
        raise MalformedHeader("invalid dimensions")
    if header.gop_count != gop_count:
        raise MalformedHeader("GOP count inconsistent with frame count and GOP size")
    return header, rd.pos


def demux(data: bytes) -> tuple[ContainerHeader, list[GopRecord]]:
    header, pos = parse_header(data)
    rd = _Reader(data)
    rd.pos = pos
    records = []
    for g in range(header.gop_count):
        nkeys = rd.take(1, "keyframe count")[0]
        if nkeys != (2 if g == 0 else 1):
            raise MalformedHeader(f"GOP record {g} has {nkeys} keyframe payloads")
        keys = tuple(rd.blob("keyframe payload") for _ in range(nkeys))
        aux = rd.blob("aux payload")
        kps = rd.blob("keypoint stream")
        records.append(GopRecord(keys, aux, kps))
    if rd.pos != len(data):
        raise LengthOverrun(f"{len(data) - rd.pos} trailing bytes after last GOP record")
    return header, records
