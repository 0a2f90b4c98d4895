"""Quality evaluation, GOP sweeps and RD/trace CSV emission.

CSV schemas are described in ``docs/eval.md``. Numbers are written with a
fixed precision and a ``.`` decimal point regardless of locale.
"""

from __future__ import annotations

import csv
import io
import math
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import basecodec
from .config import Config
from .errors import InvalidArgument, MalformedHeader
from .frame import Frame, Video, gop_bounds
from .metrics import RdCurve, RdPoint, bd_metrics, get_metric
from .enhance import downsample2
from .reconstruct import decode_video, encode_video, pad_even

DEFAULT_GOP_SIZES = (5, 10, 15, 20)
RD_COLUMNS = ("gop", "kbps", "metric", "value", "bits_keyframes", "bits_aux", "bits_keypoints")
TRACE_COLUMNS = ("gop", "mode", "frame", "keyframe", "selected", "psnr")
FRAME_COLUMNS = ("frame", "metric", "value")


def fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.6f}"


def kbps(total_bits: int, frame_count: int, fps: float) -> float:
    return total_bits * fps / frame_count / 1000.0


def frame_metrics(original: Video, decoded: Video, metrics: Sequence[str] = ("psnr",)) -> dict[str, list[float]]:
    if len(original) != len(decoded):
        raise InvalidArgument(f"frame counts differ: {len(original)} vs {len(decoded)}")
    return {m: [get_metric(m)(a, b) for a, b in zip(original, decoded)] for m in metrics}


def mean_quality(values: Sequence[float], cap: float = 100.0) -> float:
    """Mean with infinite PSNR values capped (identical frames)."""
    return float(np.mean([min(v, cap) if math.isinf(v) else v for v in values]))


def frame_metrics_csv(per_frame: dict[str, list[float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FRAME_COLUMNS)
    for m, vals in per_frame.items():
        for i, v in enumerate(vals):
            w.writerow([i, m, fmt(v)])
        w.writerow(["mean", m, fmt(mean_quality(vals))])
    return buf.getvalue()


@dataclass
class QpCheck:
    """Payload size and PSNR of one stream over a QP ladder."""

    kind: str
    qps: list[int]
    bits: list[int]
    psnr: list[float]

    @property
    def monotone(self) -> bool:
        non_increasing = lambda xs: all(b <= a for a, b in zip(xs, xs[1:]))
        return non_increasing(self.bits) and non_increasing(self.psnr)


def qp_ladder(frames: Sequence[Frame], qps: Sequence[int], kind: str = "intra") -> QpCheck:
    """Code ``frames`` at each QP (intra per frame, or one inter sequence)."""
    qps = sorted(qps)
    bits, quality = [], []
    for qp in qps:
        if kind == "intra":
            payloads = [basecodec.encode_intra(f, qp) for f in frames]
            recon = [basecodec.decode_intra(p) for p in payloads]
            bits.append(sum(p.bits for p in payloads))
        else:
            payload = basecodec.encode_inter_sequence(frames, qp)
            recon = basecodec.decode_inter_sequence(payload)
            bits.append(payload.bits)
        mse = np.mean([np.mean((a.float_planes() - b.float_planes()) ** 2) for a, b in zip(frames, recon)])
        quality.append(math.inf if mse == 0 else 10 * math.log10(255**2 / mse))
    return QpCheck(kind, list(qps), bits, quality)


@dataclass
class SweepPoint:
    gop: int
    kbps: float
    bits: dict[str, int]
    quality: dict[str, float]
    traces: dict[str, list[float]]
    selections: dict[str, list[str]]
    keyframes: list[int]
    qp_checks: list[QpCheck] = field(default_factory=list)

    def tail_half_mean(self, mode: str) -> float:
        """Mean PSNR over intermediates in the second half of each GOP."""
        trace = self.traces[mode]
        vals = []
        for s, e in zip(self.keyframes, self.keyframes[1:]):
            mid = (s + e) / 2
            vals.extend(trace[i] for i in range(s + 1, e) if i > mid)
        return mean_quality(vals) if vals else math.nan


@dataclass
class SweepResult:
    points: list[SweepPoint]
    metrics: tuple[str, ...]

    def curve(self, metric: str) -> RdCurve:
        return RdCurve(tuple(RdPoint(p.kbps, p.quality[metric], metric) for p in self.points))

    def rd_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RD_COLUMNS)
        for p in self.points:
            for m in self.metrics:
                w.writerow([p.gop, fmt(p.kbps), m, fmt(p.quality[m]),
                            p.bits["keyframes"], p.bits["aux_stream"], p.bits["keypoints"]])
        return buf.getvalue()

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for p in self.points:
            keys = set(p.keyframes)
            for mode, trace in p.traces.items():
                sel = p.selections[mode]
                for i, v in enumerate(trace):
                    w.writerow([p.gop, mode, i, int(i in keys), sel[i], fmt(v)])
        return buf.getvalue()


def run_point(
    video: Video,
    config: Config,
    metrics: Sequence[str] = ("psnr",),
    modes: Sequence[str] = ("adaptive", "forced-past"),
    qp_check: bool = False,
) -> SweepPoint:
    """Encode once, decode under each selection mode, score against ``video``.

    The selection mode only acts at the decoder, so all modes share one
    bitstream and one bitrate. Quality values come from the first mode.
    """
    enc = encode_video(video, config)
    traces, selections, quality = {}, {}, {}
    keyframes: list[int] = []
    for i, mode in enumerate(modes):
        dec = decode_video(enc.bitstream, selection=mode, workers=1)
        names = list(dict.fromkeys(["psnr", *metrics])) if i == 0 else ["psnr"]
        per_frame = frame_metrics(video, dec.video, names)
        if i == 0:
            quality = {m: mean_quality(per_frame[m]) for m in metrics}
        traces[mode] = per_frame["psnr"]
        sel = ["key"] * len(video)
        for idx, choice in dec.selections:
            sel[idx] = choice.selected
        selections[mode] = sel
        keyframes = dec.keyframe_indices
    point = SweepPoint(
        gop=config.gop_size,
        kbps=kbps(enc.report.total_bits, len(video), video.fps),
        bits=dict(enc.report.categories),
        quality=quality,
        traces=traces,
        selections=selections,
        keyframes=keyframes,
    )
    if qp_check:
        point.qp_checks = _qp_checks(video, config)
    return point


def _qp_checks(video: Video, config: Config) -> list[QpCheck]:
    bounds = gop_bounds(len(video), config.gop_size)
    key_idx = sorted({i for b in bounds for i in b})
    keys = [video[i] for i in key_idx]
    ladder = lambda qp: sorted({max(qp - 10, 0), qp, min(qp + 6, 51)})
    checks = [qp_ladder(keys, ladder(config.qp_key), "intra")]
    s, e = bounds[0]
    if e - s > 1:
        small = [downsample2(pad_even(f)) for f in video.frames[s + 1 : e]]
        checks.append(qp_ladder(small, ladder(config.qp_aux), "inter"))
    return checks


def gop_sweep(
    video: Video,
    gop_sizes: Sequence[int] = DEFAULT_GOP_SIZES,
    qp_key: int = 30,
    qp_aux: int = 45,
    metrics: Sequence[str] = ("psnr",),
    config: Config | None = None,
    workers: int = 1,
    qp_check: bool = False,
) -> SweepResult:
    """One RD point per GOP size, each with adaptive and forced-past traces."""
    if not gop_sizes:
        raise InvalidArgument("need at least one GOP size")
    if len(video) < max(gop_sizes):
        raise InvalidArgument(f"video has {len(video)} frames, shorter than GOP size {max(gop_sizes)}")
    for m in metrics:
        get_metric(m)
    base = (config or Config()).with_overrides(qp_key=qp_key, qp_aux=qp_aux)
    configs = [base.with_overrides(gop_size=g) for g in sorted(set(gop_sizes))]
    job = lambda c: run_point(video, c, metrics, qp_check=qp_check)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(job, configs))
    else:
        points = [job(c) for c in configs]
    return SweepResult(points, tuple(metrics))


# --- CSV import ---------------------------------------------------------------

def _read_csv(path: str | os.PathLike, required: Iterable[str]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
        cols = set(rows[0].keys()) if rows else set()
    missing = set(required) - cols
    if rows and missing:
        raise MalformedHeader(f"{path}: missing columns {sorted(missing)}")
    return rows


def load_rd_csv(path: str | os.PathLike) -> dict[str, RdCurve]:
    """RD-point CSV (as written by :meth:`SweepResult.rd_csv`) to one curve per metric."""
    groups: dict[str, list[RdPoint]] = defaultdict(list)
    try:
        for row in _read_csv(path, ("kbps", "metric", "value")):
            groups[row["metric"]].append(RdPoint(float(row["kbps"]), float(row["value"]), row["metric"]))
    except ValueError as exc:
        if isinstance(exc, MalformedHeader):
            raise
        raise MalformedHeader(f"{path}: non-numeric RD value") from None
    return {m: RdCurve(tuple(pts)) for m, pts in groups.items()}


def load_external_metrics(path: str | os.PathLike) -> dict[tuple[int, str], list[float]]:
    """Per-frame third-party scores: columns ``gop, frame, metric, value``.

    Returns values keyed by (gop size, metric) in frame order.
    """
    out: dict[tuple[int, str], list[tuple[int, float]]] = defaultdict(list)
    try:
        for row in _read_csv(path, ("gop", "frame", "metric", "value")):
            out[(int(row["gop"]), row["metric"])].append((int(row["frame"]), float(row["value"])))
    except ValueError as exc:
        if isinstance(exc, MalformedHeader):
            raise
        raise MalformedHeader(f"{path}: non-numeric field") from None
    return {k: [v for _, v in sorted(rows)] for k, rows in out.items()}


def merge_external(result: SweepResult, external: dict[tuple[int, str], list[float]]) -> SweepResult:
    """Add externally computed metrics to each sweep point as GOP means."""
    names = sorted({m for _, m in external})
    for p in result.points:
        for m in names:
            if (p.gop, m) not in external:
                raise InvalidArgument(f"external metric {m!r} lacks GOP size {p.gop}")
            p.quality[m] = float(np.mean(external[(p.gop, m)]))
    result.metrics = tuple(result.metrics) + tuple(n for n in names if n not in result.metrics)
    return result


def bd_csv(anchor: dict[str, RdCurve], test: dict[str, RdCurve]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("metric", "bd_rate_percent", "bd_quality"))
    for m in sorted(set(anchor) & set(test)):
        rate, quality = bd_metrics(anchor[m], test[m])
        w.writerow([m, fmt(rate), fmt(quality)])
    return buf.getvalue()


def write_text(path: str | os.PathLike, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="")
