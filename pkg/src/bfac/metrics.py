"""Distortion metrics and Bjontegaard deltas."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgument

PSNR_INF = math.inf
SSIM_WINDOW = 8
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _planes(x) -> np.ndarray:
    arr = x.planes if hasattr(x, "planes") else x
    return np.asarray(arr, dtype=np.float64)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    pa, pb = _planes(a), _planes(b)
    if pa.shape != pb.shape:
        raise InvalidArgument(f"dimension mismatch: {pa.shape} vs {pb.shape}")
    return pa, pb


def psnr_array(a: np.ndarray, b: np.ndarray, peak: float = 255.0) -> float:
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / mse)


def psnr(a, b) -> float:
    """PSNR in dB over all planes; identical inputs give ``math.inf``."""
    pa, pb = _pair(a, b)
    return psnr_array(pa, pb)


def _window_sums(x: np.ndarray, n: int) -> np.ndarray:
    # sums over every n x n window (valid positions) of the last two axes
    c = np.cumsum(np.cumsum(x, axis=-1), axis=-2)
    c = np.pad(c, [(0, 0)] * (x.ndim - 2) + [(1, 0), (1, 0)])
    return c[..., n:, n:] - c[..., :-n, n:] - c[..., n:, :-n] + c[..., :-n, :-n]


def ssim(a, b, window: int = SSIM_WINDOW, data_range: float = 255.0) -> float:
    """Mean SSIM over all valid ``window`` x ``window`` positions of every plane.

    Uniform windows, population statistics, ``C1 = (0.01 L)^2`` and
    ``C2 = (0.03 L)^2``. Frames smaller than the window use one window
    covering the whole plane.
    """
    pa, pb = _pair(a, b)
    if pa.ndim == 2:
        pa, pb = pa[None], pb[None]
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    if min(pa.shape[-2:]) < window:
        ax = (-2, -1)
        mu_a, mu_b = pa.mean(axis=ax), pb.mean(axis=ax)
        va, vb = pa.var(axis=ax), pb.var(axis=ax)
        cov = ((pa - mu_a[..., None, None]) * (pb - mu_b[..., None, None])).mean(axis=ax)
    else:
        area = float(window * window)
        mu_a = _window_sums(pa, window) / area
        mu_b = _window_sums(pb, window) / area
        va = _window_sums(pa * pa, window) / area - mu_a**2
        vb = _window_sums(pb * pb, window) / area - mu_b**2
        cov = _window_sums(pa * pb, window) / area - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
    return float(np.mean(s))


def charbonnier(a, b, eps: float = 1e-3) -> float:
    """Mean of ``sqrt(d^2 + eps)`` with ``d`` the sample difference scaled to [0, 1]."""
    if eps < 0:
        raise InvalidArgument("eps must be non-negative")
    pa, pb = _pair(a, b)
    d = (pa - pb) / 255.0
    return float(np.mean(np.sqrt(d * d + eps)))


METRICS = {"psnr": psnr, "ssim": ssim, "charbonnier": charbonnier}


def get_metric(name: str):
    try:
        return METRICS[name]
    except KeyError:
        raise InvalidArgument(f"unknown metric {name!r}; known: {sorted(METRICS)}") from None


# --- RD curves and Bjontegaard deltas ---------------------------------------

@dataclass(frozen=True)
class RdPoint:
    bitrate: float
    quality: float
    metric: str = "psnr"


@dataclass(frozen=True)
class RdCurve:
    points: tuple[RdPoint, ...]

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: p.bitrate))
        if len({p.metric for p in pts}) > 1:
            raise InvalidArgument("an RD curve holds a single metric")
        rates = [p.bitrate for p in pts]
        if any(r <= 0 for r in rates):
            raise InvalidArgument("bitrates must be positive")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise InvalidArgument("bitrates within a curve must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_arrays(cls, bitrates: Sequence[float], qualities: Sequence[float], metric: str = "psnr") -> "RdCurve":
        if len(bitrates) != len(qualities):
            raise InvalidArgument("bitrate and quality lists differ in length")
        return cls(tuple(RdPoint(float(r), float(q), metric) for r, q in zip(bitrates, qualities)))

    @property
    def metric(self) -> str:
        return self.points[0].metric if self.points else ""

    @property
    def bitrates(self) -> np.ndarray:
        return np.array([p.bitrate for p in self.points])

    @property
    def qualities(self) -> np.ndarray:
        return np.array([p.quality for p in self.points])


def _mean_gap(x_a, y_a, x_b, y_b, lo, hi) -> float:
    """Mean of (fit_b - fit_a) over [lo, hi], each fit a cubic of y on x."""
    pa = np.polyint(np.polyfit(x_a, y_a, 3))
    pb = np.polyint(np.polyfit(x_b, y_b, 3))
    area_a = np.polyval(pa, hi) - np.polyval(pa, lo)
    area_b = np.polyval(pb, hi) - np.polyval(pb, lo)
    return float((area_b - area_a) / (hi - lo))


def bd_metrics(anchor: RdCurve, test: RdCurve) -> tuple[float, float]:
    """Return ``(bd_rate_percent, bd_quality)`` of ``test`` against ``anchor``.

    Cubic fits of log10 bitrate against quality (rate) and of quality
    against log10 bitrate (quality), integrated over the overlap of the two
    curves' ranges. ``bd_quality`` is NaN when the bitrate ranges are disjoint.
    """
    if len(anchor.points) < 4 or len(test.points) < 4:
        raise InvalidArgument("BD metrics need at least 4 points per curve")
    if anchor.metric != test.metric:
        raise InvalidArgument("curves measure different metrics")
    ra, qa = np.log10(anchor.bitrates), anchor.qualities
    rt, qt = np.log10(test.bitrates), test.qualities
    if not (np.all(np.isfinite(qa)) and np.all(np.isfinite(qt))):
        raise InvalidArgument("qualities must be finite")

    q_lo, q_hi = max(qa.min(), qt.min()), min(qa.max(), qt.max())
    if not q_hi > q_lo:
        raise InvalidArgument("RD curves do not overlap in quality")
    log_rate_gap = _mean_gap(qa, ra, qt, rt, q_lo, q_hi)
    bd_rate = (10.0**log_rate_gap - 1.0) * 100.0
    r_lo, r_hi = max(ra.min(), rt.min()), min(ra.max(), rt.max())
    bd_quality = _mean_gap(ra, qa, rt, qt, r_lo, r_hi) if r_hi > r_lo else math.nan
    return bd_rate, bd_quality
