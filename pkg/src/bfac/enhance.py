"""Auxiliary stream resampling, reference selection and reference-guided enhancement."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument
from .frame import Frame, to_uint8
from .metrics import psnr_array


@dataclass(frozen=True)
class EnhanceConfig:
    radius: int = 4
    eps: float = 1e-3
    ncc_window: int = 9
    ncc_threshold: float = 0.6

    def __post_init__(self):
        if self.radius < 1 or self.ncc_window < 1:
            raise InvalidArgument("radius and NCC window must be positive")
        if not self.eps > 0:
            raise InvalidArgument("eps must be positive")
        if not -1 <= self.ncc_threshold < 1:
            raise InvalidArgument("NCC threshold must be in [-1, 1)")


@dataclass(frozen=True)
class ReferenceChoice:
    selected: str
    psnr_past: float
    psnr_future: float

    def __post_init__(self):
        if self.selected not in ("past", "future"):
            raise InvalidArgument(f"selected must be 'past' or 'future', got {self.selected!r}")


# --- resampling -----------------------------------------------------------

def downsample2(frame: Frame) -> Frame:
    """2x2 box average, ties rounded up (all sums are non-negative)."""
    if frame.width % 2 or frame.height % 2:
        raise InvalidArgument(f"downsample2 needs even dimensions, got {frame.width}x{frame.height}")
    p = frame.planes.astype(np.int64)
    s = p[:, 0::2, 0::2] + p[:, 1::2, 0::2] + p[:, 0::2, 1::2] + p[:, 1::2, 1::2]
    return Frame(((s + 2) // 4).astype(np.uint8))


def cubic_weights(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic kernel weights for taps at offsets -1, 0, 1, 2 from floor(x)."""
    t = np.asarray(t, dtype=np.float64)

    def k(d):
        d = np.abs(d)
        return np.where(
            d <= 1,
            (a + 2) * d**3 - (a + 3) * d**2 + 1,
            np.where(d < 2, a * d**3 - 5 * a * d**2 + 8 * a * d - 4 * a, 0.0),
        )

    return np.stack([k(t + 1), k(t), k(1 - t), k(2 - t)], axis=-1)


def _upsample_axis(x: np.ndarray, axis: int) -> np.ndarray:
    n = x.shape[axis]
    # output sample i sits at source coordinate (i + 0.5) / 2 - 0.5
    pos = (np.arange(2 * n) + 0.5) / 2 - 0.5
    base = np.floor(pos).astype(np.intp)
    w = cubic_weights(pos - base)
    out = 0.0
    for tap in range(4):
        idx = np.clip(base + tap - 1, 0, n - 1)
        shape = [1] * x.ndim
        shape[axis] = 2 * n
        out = out + np.take(x, idx, axis=axis) * w[:, tap].reshape(shape)
    return out


def upsample2_array(planes: np.ndarray) -> np.ndarray:
    up = _upsample_axis(np.asarray(planes, dtype=np.float64), 2)
    return _upsample_axis(up, 1)


def upsample2_bicubic(frame: Frame) -> Frame:
    """Double both dimensions with the Catmull-Rom kernel (a = -0.5), border clamp."""
    return Frame(to_uint8(upsample2_array(frame.planes)))


# --- selection ------------------------------------------------------------

def select_reference(key_past: Frame, key_future: Frame, aux: Frame) -> ReferenceChoice:
    """Pick the keyframe closer to ``aux`` by luma PSNR; ties go to the future keyframe."""
    if not (key_past.shape[1:] == key_future.shape[1:] == aux.shape[1:]):
        raise InvalidArgument("select_reference needs frames of equal dimensions")
    y = aux.luma()
    p_past = psnr_array(key_past.luma(), y)
    p_future = psnr_array(key_future.luma(), y)
    return ReferenceChoice("past" if p_past > p_future else "future", p_past, p_future)


# --- enhancement ----------------------------------------------------------

def _box(x: np.ndarray, r: int) -> np.ndarray:
    return ndimage.uniform_filter(x, size=2 * r + 1, mode="nearest")


def guided_filter(guide: np.ndarray, src: np.ndarray, radius: int, eps: float) -> np.ndarray:
    mean_i = _box(guide, radius)
    mean_p = _box(src, radius)
    cov_ip = _box(guide * src, radius) - mean_i * mean_p
    var_i = _box(guide * guide, radius) - mean_i * mean_i
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    return _box(a, radius) * guide + _box(b, radius)


def local_ncc(a: np.ndarray, b: np.ndarray, window: int, floor: float = 1e-6) -> np.ndarray:
    """Windowed normalized cross-correlation; 0 where either window is flat."""
    f = lambda x: ndimage.uniform_filter(x, size=window, mode="nearest")
    ma, mb = f(a), f(b)
    va = np.maximum(f(a * a) - ma * ma, 0.0)
    vb = np.maximum(f(b * b) - mb * mb, 0.0)
    cov = f(a * b) - ma * mb
    denom = np.sqrt(va * vb)
    ok = (va > floor) & (vb > floor)
    return np.where(ok, cov / np.where(ok, denom, 1.0), 0.0).clip(-1.0, 1.0)


def transfer_weight(aux_up: Frame, reference: Frame, config: EnhanceConfig) -> np.ndarray:
    ncc = local_ncc(aux_up.luma() / 255.0, reference.luma() / 255.0, config.ncc_window)
    return np.clip((ncc - config.ncc_threshold) / (1.0 - config.ncc_threshold), 0.0, 1.0)


def guided_detail_transfer(aux_up: Frame, reference: Frame, config: EnhanceConfig | None = None) -> Frame:
    """Replace the detail band of ``aux_up`` by the reference's where the two correlate.

    Each plane is split into a self-guided base and a detail residual; the
    reference is split the same way. Where local NCC exceeds the threshold,
    the reference detail is blended in with weight rising linearly to 1.
    """
    config = config or EnhanceConfig()
    aux = aux_up.float_planes() / 255.0
    ref = reference.float_planes() / 255.0
    weight = transfer_weight(aux_up, reference, config)
    out = np.empty_like(aux)
    for c in range(aux.shape[0]):
        base = guided_filter(aux[c], aux[c], config.radius, config.eps)
        detail = aux[c] - base
        ref_detail = ref[c] - guided_filter(ref[c], ref[c], config.radius, config.eps)
        out[c] = base + (1.0 - weight) * detail + weight * ref_detail
    return Frame(to_uint8(out * 255.0))


def identity_enhancer(aux_up: Frame, reference: Frame, config: EnhanceConfig | None = None) -> Frame:
    return aux_up


Enhancer = Callable[[Frame, Frame, "EnhanceConfig | None"], Frame]

ENHANCERS: dict[str, Enhancer] = {
    "guided": guided_detail_transfer,
    "identity": identity_enhancer,
}


def register_enhancer(name: str, fn: Enhancer) -> None:
    if not name or len(name.encode("ascii")) > 255:
        raise InvalidArgument("enhancer name must be 1-255 ASCII characters")
    ENHANCERS[name] = fn


def get_enhancer(name: str) -> Enhancer:
    try:
        return ENHANCERS[name]
    except KeyError:
        raise InvalidArgument(f"unknown enhancer {name!r}; known: {sorted(ENHANCERS)}") from None


def enhance(
    aux_up: Frame,
    reference: Frame,
    enhancer: str | Enhancer = "guided",
    config: EnhanceConfig | None = None,
) -> Frame:
    if aux_up.shape != reference.shape:
        raise InvalidArgument("enhance needs frames of equal shape")
    fn = get_enhancer(enhancer) if isinstance(enhancer, str) else enhancer
    return fn(aux_up, reference, config)
