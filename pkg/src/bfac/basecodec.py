"""QP-controlled block-transform codec standing in for a conventional encoder.

Intra coding: 8x8 orthonormal DCT-II per plane, uniform quantizer with step
``2 ** ((qp - 4) / 6)``, zigzag scan, differential DC, JPEG-style
(run, size) AC symbols, all range coded. Inter-sequence coding predicts each
frame from the previous reconstruction (no motion) and codes the residual
with the same block machinery. Payload layout is in ``docs/format.md``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from . import rangecoder as rc
from .errors import BadMagic, DecodeError, InvalidArgument, LengthOverrun, TruncatedData
from .frame import Frame, round_half_away

MAGIC = b"BFBC"
KIND_INTRA = 0
KIND_INTER = 1
KIND_NAMES = {KIND_INTRA: "intra", KIND_INTER: "inter-sequence"}
QP_MIN, QP_MAX = 0, 51
BLOCK = 8
MAX_SIZE_CLASS = 15

_HEADER = struct.Struct("<4sBBHHB")

# contexts: DC size class, AC (run,size) for zigzag positions 1..5, AC beyond
CTX_DC, CTX_AC_LOW, CTX_AC_HIGH = 0, 1, 2
AC_LOW_END = 6
EOB = 0x00
ZRL = 0xF0
BLOCK_MODELS = [
    rc.SymbolModel(MAX_SIZE_CLASS + 1, increment=32),
    rc.SymbolModel(256, increment=32),
    rc.SymbolModel(256, increment=32),
]


def _dct_matrix(n: int = BLOCK) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    c[0] /= np.sqrt(2.0)
    return c


def _zigzag(n: int = BLOCK) -> np.ndarray:
    order = sorted(
        ((r, c) for r in range(n) for c in range(n)),
        key=lambda rc_: (rc_[0] + rc_[1], rc_[0] if (rc_[0] + rc_[1]) % 2 else rc_[1]),
    )
    return np.array([r * n + c for r, c in order], dtype=np.int64)


DCT = _dct_matrix()
ZIGZAG = _zigzag()
UNZIGZAG = np.argsort(ZIGZAG)


def qp_step(qp: int) -> float:
    return 2.0 ** ((qp - 4) / 6.0)


def _check_qp(qp: int) -> int:
    if not isinstance(qp, (int, np.integer)) or not QP_MIN <= qp <= QP_MAX:
        raise InvalidArgument(f"qp must be an integer in [{QP_MIN}, {QP_MAX}], got {qp!r}")
    return int(qp)


def padded_dims(width: int, height: int) -> tuple[int, int]:
    return -(-width // BLOCK) * BLOCK, -(-height // BLOCK) * BLOCK


def pad_planes(planes: np.ndarray) -> np.ndarray:
    """Edge-replicate ``(C, H, W)`` planes up to multiples of 8."""
    c, h, w = planes.shape
    pw, ph = padded_dims(w, h)
    if (pw, ph) == (w, h):
        return planes
    return np.pad(planes, ((0, 0), (0, ph - h), (0, pw - w)), mode="edge")


def to_blocks(planes: np.ndarray) -> np.ndarray:
    c, h, w = planes.shape
    b = planes.reshape(c, h // BLOCK, BLOCK, w // BLOCK, BLOCK).transpose(0, 1, 3, 2, 4)
    return b.reshape(c, -1, BLOCK, BLOCK)


def from_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    c = blocks.shape[0]
    b = blocks.reshape(c, h // BLOCK, w // BLOCK, BLOCK, BLOCK).transpose(0, 1, 3, 2, 4)
    return b.reshape(c, h, w)


def forward_quantize(blocks: np.ndarray, step: float) -> np.ndarray:
    """DCT + quantize; returns zigzag-ordered int64 levels of shape (C, N, 64)."""
    coef = DCT @ blocks @ DCT.T
    levels = round_half_away(coef / step).astype(np.int64)
    c, n = levels.shape[:2]
    return levels.reshape(c, n, 64)[:, :, ZIGZAG]


def dequantize_inverse(levels: np.ndarray, step: float) -> np.ndarray:
    c, n = levels.shape[:2]
    coef = (levels[:, :, UNZIGZAG] * step).reshape(c, n, BLOCK, BLOCK)
    return DCT.T @ coef @ DCT


# --- block symbol kernels -------------------------------------------------

@njit(cache=True)
def _size_class(v):
    a = abs(v)
    s = 0
    while a > 0:
        a >>= 1
        s += 1
    return s


@njit(cache=True)
def _enc_value(st, buf, v, size):
    # sign bit then the (size-1) low bits of |v|
    if size > 0:
        a = abs(v)
        sign = 1 if v < 0 else 0
        payload = (sign << (size - 1)) | (a - (1 << (size - 1)))
        rc.enc_bits(st, buf, payload, size)


@njit(cache=True)
def _dec_value(st, data, size):
    if size == 0:
        return 0
    payload = rc.dec_bits(st, data, size)
    sign = payload >> (size - 1)
    a = (payload & ((1 << (size - 1)) - 1)) + (1 << (size - 1))
    return -a if sign else a


@njit(cache=True)
def _encode_levels(levels, freq, total, alph, inc, limit):
    """levels: (C, N, 64) zigzag order. Returns coded bytes or an empty array
    with status -1 when a value exceeds the size-class range."""
    c_count, n_blocks = levels.shape[0], levels.shape[1]
    st, buf = rc.enc_new(c_count * n_blocks * 400 + 16)
    for c in range(c_count):
        pred = 0
        for b in range(n_blocks):
            dc = levels[c, b, 0]
            diff = dc - pred
            pred = dc
            s = _size_class(diff)
            if s > MAX_SIZE_CLASS:
                return buf[:0].copy(), -1
            rc.enc_symbol(st, buf, freq, total, alph, inc, limit, CTX_DC, s)
            _enc_value(st, buf, diff, s)
            last = 0
            for k in range(63, 0, -1):
                if levels[c, b, k] != 0:
                    last = k
                    break
            run = 0
            for k in range(1, last + 1):
                v = levels[c, b, k]
                if v == 0:
                    run += 1
                    continue
                ctx = CTX_AC_LOW if k - run < AC_LOW_END else CTX_AC_HIGH
                while run >= 16:
                    rc.enc_symbol(st, buf, freq, total, alph, inc, limit, ctx, ZRL)
                    run -= 16
                    ctx = CTX_AC_LOW if k - run < AC_LOW_END else CTX_AC_HIGH
                s = _size_class(v)
                if s > MAX_SIZE_CLASS:
                    return buf[:0].copy(), -1
                rc.enc_symbol(st, buf, freq, total, alph, inc, limit, ctx, run * 16 + s)
                _enc_value(st, buf, v, s)
                run = 0
            if last < 63:
                ctx = CTX_AC_LOW if last + 1 < AC_LOW_END else CTX_AC_HIGH
                rc.enc_symbol(st, buf, freq, total, alph, inc, limit, ctx, EOB)
    return rc.enc_finish(st, buf).copy(), 0


@njit(cache=True)
def _decode_levels(data, c_count, n_blocks, freq, total, alph, inc, limit):
    levels = np.zeros((c_count, n_blocks, 64), dtype=np.int64)
    st = rc.dec_new(data)
    status = 0
    for c in range(c_count):
        pred = 0
        for b in range(n_blocks):
            s = rc.dec_symbol(st, data, freq, total, alph, inc, limit, CTX_DC)
            pred += _dec_value(st, data, s)
            levels[c, b, 0] = pred
            k = 1
            while k < 64:
                ctx = CTX_AC_LOW if k < AC_LOW_END else CTX_AC_HIGH
                sym = rc.dec_symbol(st, data, freq, total, alph, inc, limit, ctx)
                if sym == EOB:
                    break
                if sym == ZRL:
                    k += 16
                    continue
                run = sym >> 4
                s = sym & 15
                if s == 0:
                    return levels, st, 1
                k += run
                if k >= 64:
                    return levels, st, 1
                levels[c, b, k] = _dec_value(st, data, s)
                k += 1
            if k > 64:
                return levels, st, 1
            if st[3] != 0:
                return levels, st, 0
    return levels, st, status


def _encode_block_levels(levels: np.ndarray) -> bytes:
    ms = rc.ModelSet(BLOCK_MODELS)
    data, status = _encode_levels(np.ascontiguousarray(levels), *ms.arrays())
    if status != 0:
        raise InvalidArgument("coefficient magnitude exceeds the coder's size classes")
    return data.tobytes()


def _decode_block_levels(data: bytes, c_count: int, n_blocks: int) -> np.ndarray:
    buf = np.frombuffer(data, dtype=np.uint8)
    ms = rc.ModelSet(BLOCK_MODELS)
    levels, st, status = _decode_levels(buf, c_count, n_blocks, *ms.arrays())
    rc.check_decoder_state(st, buf)
    if status:
        raise DecodeError("invalid block symbol")
    return levels


# --- frame-level coding ---------------------------------------------------

def _code_planes(planes: np.ndarray, pred: np.ndarray | None, step: float) -> tuple[bytes, np.ndarray]:
    """Code padded float planes against a prediction (None = intra, level
    shift 128). Returns (chunk, padded reconstruction as float)."""
    c, h, w = planes.shape
    base = np.full_like(planes, 128.0) if pred is None else pred
    levels = forward_quantize(to_blocks(planes - base), step)
    chunk = _encode_block_levels(levels)
    recon = _reconstruct(levels, base, step, h, w)
    return chunk, recon


def _reconstruct(levels: np.ndarray, base: np.ndarray, step: float, h: int, w: int) -> np.ndarray:
    residual = from_blocks(dequantize_inverse(levels, step), h, w)
    return np.clip(round_half_away(base + residual), 0, 255)


def _decode_planes(chunk: bytes, pred: np.ndarray | None, step: float, c: int, h: int, w: int) -> np.ndarray:
    base = np.full((c, h, w), 128.0) if pred is None else pred
    levels = _decode_block_levels(chunk, c, (h // BLOCK) * (w // BLOCK))
    return _reconstruct(levels, base, step, h, w)


@dataclass(frozen=True)
class CodecPayload:
    data: bytes
    qp: int
    kind: str

    def __len__(self) -> int:
        return len(self.data)

    @property
    def bits(self) -> int:
        return 8 * len(self.data)


@dataclass(frozen=True)
class PayloadHeader:
    kind: int
    qp: int
    width: int
    height: int
    n_planes: int


def _pack_header(kind: int, qp: int, frame: Frame) -> bytes:
    return _HEADER.pack(MAGIC, kind, qp, frame.width, frame.height, frame.n_planes)


def parse_payload_header(data: bytes) -> PayloadHeader:
    if len(data) < _HEADER.size:
        raise TruncatedData("payload shorter than its header")
    magic, kind, qp, w, h, c = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad payload magic {magic!r}")
    if kind not in KIND_NAMES or qp > QP_MAX or w < 1 or h < 1 or c not in (1, 3):
        raise DecodeError("invalid payload header")
    return PayloadHeader(kind, qp, w, h, c)


def _crop(recon: np.ndarray, w: int, h: int) -> Frame:
    return Frame(recon[:, :h, :w].astype(np.uint8))


def encode_intra_with_recon(frame: Frame, qp: int) -> tuple[CodecPayload, Frame]:
    qp = _check_qp(qp)
    chunk, recon = _code_planes(pad_planes(frame.float_planes()), None, qp_step(qp))
    payload = CodecPayload(_pack_header(KIND_INTRA, qp, frame) + chunk, qp, "intra")
    return payload, _crop(recon, frame.width, frame.height)


def encode_intra(frame: Frame, qp: int) -> CodecPayload:
    return encode_intra_with_recon(frame, qp)[0]


def decode_intra(payload: CodecPayload | bytes) -> Frame:
    data = payload.data if isinstance(payload, CodecPayload) else bytes(payload)
    hdr = parse_payload_header(data)
    if hdr.kind != KIND_INTRA:
        raise DecodeError("payload is not intra coded")
    pw, ph = padded_dims(hdr.width, hdr.height)
    recon = _decode_planes(data[_HEADER.size :], None, qp_step(hdr.qp), hdr.n_planes, ph, pw)
    return _crop(recon, hdr.width, hdr.height)


def encode_inter_sequence_with_recon(frames: Sequence[Frame], qp: int) -> tuple[CodecPayload, list[Frame]]:
    qp = _check_qp(qp)
    frames = list(frames)
    if not frames:
        raise InvalidArgument("inter-sequence coding needs at least one frame")
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise InvalidArgument("all frames must share dimensions")
    step = qp_step(qp)
    parts = [_pack_header(KIND_INTER, qp, frames[0]), struct.pack("<I", len(frames))]
    recons = []
    pred = None
    for f in frames:
        chunk, pred = _code_planes(pad_planes(f.float_planes()), pred, step)
        parts.append(struct.pack("<I", len(chunk)))
        parts.append(chunk)
        recons.append(_crop(pred, f.width, f.height))
    return CodecPayload(b"".join(parts), qp, "inter-sequence"), recons


def encode_inter_sequence(frames: Sequence[Frame], qp: int) -> CodecPayload:
    return encode_inter_sequence_with_recon(frames, qp)[0]


def split_inter_chunks(data: bytes) -> tuple[PayloadHeader, list[bytes]]:
    hdr = parse_payload_header(data)
    if hdr.kind != KIND_INTER:
        raise DecodeError("payload is not an inter sequence")
    pos = _HEADER.size
    if len(data) < pos + 4:
        raise TruncatedData("inter payload lacks frame count")
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    chunks = []
    for _ in range(count):
        if len(data) < pos + 4:
            raise TruncatedData("inter payload truncated at chunk length")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + n > len(data):
            raise LengthOverrun("inter chunk length exceeds payload")
        chunks.append(data[pos : pos + n])
        pos += n
    if pos != len(data):
        raise DecodeError("trailing bytes after inter payload")
    return hdr, chunks


def inter_frame_bits(payload: CodecPayload | bytes) -> list[int]:
    """Bits spent on each frame of an inter-sequence payload (length field included)."""
    data = payload.data if isinstance(payload, CodecPayload) else bytes(payload)
    _, chunks = split_inter_chunks(data)
    return [8 * (4 + len(c)) for c in chunks]


def decode_inter_sequence(payload: CodecPayload | bytes) -> list[Frame]:
    data = payload.data if isinstance(payload, CodecPayload) else bytes(payload)
    hdr, chunks = split_inter_chunks(data)
    pw, ph = padded_dims(hdr.width, hdr.height)
    step = qp_step(hdr.qp)
    out = []
    pred = None
    for chunk in chunks:
        pred = _decode_planes(chunk, pred, step, hdr.n_planes, ph, pw)
        out.append(_crop(pred, hdr.width, hdr.height))
    return out
