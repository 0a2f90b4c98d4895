"""GOP-level encoder and decoder.

Encoder, per GOP: keyframes are intra coded at ``qp_key`` (a boundary shared
with the previous GOP is sent once), intermediates are halved and coded as
one inter sequence at ``qp_aux``, and their keypoints are quantized and
delta coded. The decoder upsamples the auxiliary frames, picks the past or
future keyframe per intermediate, enhances the auxiliary frame with it,
animates it toward the transmitted keypoints and fuses the two.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import basecodec
from .config import Config
from .container import ContainerHeader, GopRecord, RateReport, demux, mux, rate_report
from .enhance import (
    EnhanceConfig,
    ReferenceChoice,
    downsample2,
    enhance,
    select_reference,
    upsample2_bicubic,
)
from .errors import DecodeError, InvalidArgument
from .frame import Frame, Video, fps_fraction, gop_bounds, round_half_away
from .keypoints import (
    CornerDetector,
    KeypointProvider,
    KeypointSet,
    decode_keypoint_stream,
    dequantize_keypoints,
    encode_keypoint_stream,
    quantize_keypoints,
)
from .motion import MotionConfig, MotionField, animate

def fuse(animation: Frame, enh_aux: Frame, field: MotionField) -> Frame:
    """Confidence-weighted blend: ``c * animation + (1 - c) * enh_aux``."""
    if animation.shape != enh_aux.shape:
        raise InvalidArgument("fuse needs frames of equal shape")
    if (field.height, field.width) != (animation.height, animation.width):
        raise InvalidArgument("motion field and frame dimensions differ")
    c = field.confidence[None]
    out = c * animation.float_planes() + (1.0 - c) * enh_aux.float_planes()
    return Frame(np.clip(round_half_away(out), 0, 255).astype(np.uint8))


def reconstruct_intermediate(
    key_past: Frame,
    key_future: Frame,
    key_kps_past: KeypointSet,
    key_kps_future: KeypointSet,
    inter_kp: KeypointSet,
    enh_aux: Frame,
    choice: ReferenceChoice,
    motion: MotionConfig | None = None,
) -> Frame:
    if choice.selected == "past":
        animation, field = animate(key_past, key_kps_past, inter_kp, motion)
    else:
        animation, field = animate(key_future, key_kps_future, inter_kp, motion)
    return fuse(animation, enh_aux, field)


@dataclass
class IntermediateResult:
    frame: Frame
    choice: ReferenceChoice
    aux_up: Frame
    enh_aux: Frame


def decode_intermediate(
    aux_up: Frame,
    key_past: Frame,
    key_future: Frame,
    key_kps_past: KeypointSet,
    key_kps_future: KeypointSet,
    inter_kp: KeypointSet,
    selection: str = "adaptive",
    enhancer: str = "guided",
    motion: MotionConfig | None = None,
    enhance_config: EnhanceConfig | None = None,
) -> IntermediateResult:
    """One iteration of the adaptive enhancement and reconstruction loop."""
    choice = select_reference(key_past, key_future, aux_up)
    if selection == "forced-past":
        choice = ReferenceChoice("past", choice.psnr_past, choice.psnr_future)
    reference = key_past if choice.selected == "past" else key_future
    enh_aux = enhance(aux_up, reference, enhancer, enhance_config)
    frame = reconstruct_intermediate(
        key_past, key_future, key_kps_past, key_kps_future, inter_kp, enh_aux, choice, motion
    )
    return IntermediateResult(frame, choice, aux_up, enh_aux)


# --- encoder ------------------------------------------------------------------

def pad_even(frame: Frame) -> Frame:
    h, w = frame.height, frame.width
    if h % 2 == 0 and w % 2 == 0:
        return frame
    return Frame(np.pad(frame.planes, ((0, 0), (0, h % 2), (0, w % 2)), mode="edge"))


@dataclass
class EncodeResult:
    bitstream: bytes
    header: ContainerHeader
    records: list[GopRecord]
    report: RateReport


def encode_video(
    video: Video,
    config: Config | None = None,
    provider: KeypointProvider | None = None,
) -> EncodeResult:
    config = config or Config()
    if len(video) < 2:
        raise InvalidArgument("encoding needs a video of at least 2 frames")
    provider = provider or CornerDetector(count=config.kp_count)
    frames = video.frames
    fps_num, fps_den = fps_fraction(video.fps)
    header = ContainerHeader(
        video.width, video.height, video.n_planes, len(frames), config.gop_size,
        config.qp_key, config.qp_aux, config.kp_count, config.kp_precision, config.selection,
        fps_num, fps_den, config.sigma, config.w0, config.motion.saturation, config.snap, config.enhancer,
    )

    records = []
    for g, (start, end) in enumerate(gop_bounds(len(frames), config.gop_size)):
        key_idx = (start, end) if g == 0 else (end,)
        keys = tuple(basecodec.encode_intra(frames[i], config.qp_key).data for i in key_idx)
        inter = frames[start + 1 : end]
        aux = b""
        kps = b""
        if inter:
            small = [downsample2(pad_even(f)) for f in inter]
            aux = basecodec.encode_inter_sequence(small, config.qp_aux).data
            sets = []
            for i, f in zip(range(start + 1, end), inter):
                kp = provider(f, i)
                if kp.count != config.kp_count:
                    raise InvalidArgument(f"frame {i}: provider returned {kp.count} keypoints")
                sets.append(quantize_keypoints(kp, config.kp_precision))
            kps = encode_keypoint_stream(sets)
        records.append(GopRecord(keys, aux, kps))

    data = mux(header, records)
    report = rate_report(header, records)
    assert report.total_bits == 8 * len(data)
    return EncodeResult(data, header, records, report)


# --- decoder ------------------------------------------------------------------

@dataclass
class DecodeResult:
    video: Video
    header: ContainerHeader
    report: RateReport
    selections: list[tuple[int, ReferenceChoice]] = field(default_factory=list)
    keyframe_indices: list[int] = field(default_factory=list)


@dataclass
class GopDecodeState:
    """Decoder state carried across GOPs: the last keyframe and its keypoints."""

    cached_future_key: Frame | None = None
    cached_keypoints: KeypointSet | None = None
    selections: list[tuple[int, ReferenceChoice]] = field(default_factory=list)


def decode_video(
    bitstream: bytes,
    selection: str | None = None,
    workers: int = 1,
) -> DecodeResult:
    """Decode a ``.bfac`` stream; ``selection`` overrides the header's mode."""
    header, records = demux(bitstream)
    mode = selection or header.selection
    if mode not in ("adaptive", "forced-past"):
        raise InvalidArgument(f"unknown selection mode {mode!r}")
    detector = CornerDetector(count=header.kp_count)
    motion = MotionConfig(header.sigma, header.w0, header.saturation, header.snap)
    state = GopDecodeState()
    out: list[Frame] = []
    key_indices: list[int] = []
    aux_w, aux_h = (header.width + 1) // 2, (header.height + 1) // 2

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for g, ((start, end), rec) in enumerate(zip(gop_bounds(header.frame_count, header.gop_size), records)):
            for k in rec.keyframes:
                kh = basecodec.parse_payload_header(k)
                if (kh.width, kh.height, kh.n_planes) != (header.width, header.height, header.n_planes):
                    raise DecodeError("keyframe dimensions disagree with container header")
            keys = [basecodec.decode_intra(k) for k in rec.keyframes]
            if g == 0:
                state.cached_future_key = keys[0]
                state.cached_keypoints = detector(keys[0])
                out.append(keys[0])
                key_indices.append(start)
            key_past, kps_past = state.cached_future_key, state.cached_keypoints
            key_future = keys[-1]
            kps_future = detector(key_future)

            n_inter = end - start - 1
            if n_inter:
                ah, chunks = basecodec.split_inter_chunks(rec.aux)
                if len(chunks) != n_inter:
                    raise DecodeError(f"GOP {g}: expected {n_inter} auxiliary frames")
                if (ah.width, ah.height, ah.n_planes) != (aux_w, aux_h, header.n_planes):
                    raise DecodeError(f"GOP {g}: auxiliary frame dimensions disagree with container header")
                aux_frames = basecodec.decode_inter_sequence(rec.aux)
                quant = decode_keypoint_stream(rec.keypoints, n_inter)
                if quant[0].count != header.kp_count:
                    raise DecodeError(f"GOP {g}: keypoint count disagrees with header")

                def work(j):
                    aux_up = upsample2_bicubic(aux_frames[j])
                    aux_up = Frame(aux_up.planes[:, : header.height, : header.width])
                    return decode_intermediate(
                        aux_up, key_past, key_future, kps_past, kps_future,
                        dequantize_keypoints(quant[j]), mode, header.enhancer, motion,
                    )

                results = list(pool.map(work, range(n_inter)) if pool else map(work, range(n_inter)))
                for j, r in enumerate(results):
                    out.append(r.frame)
                    state.selections.append((start + 1 + j, r.choice))
            out.append(key_future)
            key_indices.append(end)
            # keep the future keyframe for the next GOP
            state.cached_future_key, state.cached_keypoints = key_future, kps_future
    finally:
        if pool:
            pool.shutdown()

    if len(out) != header.frame_count:
        raise DecodeError("decoded frame count disagrees with header")
    video = Video(tuple(out), fps=header.fps)
    return DecodeResult(video, header, rate_report(header, records), state.selections, key_indices)
