"""Keypoint-driven dense motion, backward warping and keyframe animation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidArgument
from .frame import Frame, to_uint8
from .keypoints import KeypointSet


@dataclass(frozen=True)
class MotionConfig:
    """``sigma`` is the keypoint influence radius in normalized units,
    ``w0`` the constant weight of the identity (background) motion.
    Confidence saturates to 1 where the background share of the total weight
    is at most ``saturation``. Key/target keypoint pairs within ``snap``
    pixels (Chebyshev) after matching are treated as not having moved."""

    sigma: float = 0.1
    w0: float = 0.01
    saturation: float = 0.01
    snap: float = 1.5

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgument("sigma must be positive")
        if not self.w0 > 0:
            raise InvalidArgument("w0 must be positive")
        if not 0 <= self.saturation < 1:
            raise InvalidArgument("saturation must be in [0, 1)")
        if not self.snap >= 0:
            raise InvalidArgument("snap must be non-negative")


@dataclass(frozen=True, eq=False)
class MotionField:
    """Backward map: output pixel (x, y) samples the source at ``flow[:, y, x]``
    = (sx, sy) in pixel units."""

    flow: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        flow = np.asarray(self.flow, dtype=np.float64)
        conf = np.asarray(self.confidence, dtype=np.float64)
        if flow.ndim != 3 or flow.shape[0] != 2 or conf.shape != flow.shape[1:]:
            raise InvalidArgument("flow must be (2, H, W) with matching (H, W) confidence")
        if conf.size and (conf.min() < 0 or conf.max() > 1):
            raise InvalidArgument("confidence must lie in [0, 1]")
        object.__setattr__(self, "flow", flow)
        object.__setattr__(self, "confidence", conf)

    @property
    def width(self) -> int:
        return self.flow.shape[2]

    @property
    def height(self) -> int:
        return self.flow.shape[1]

    @classmethod
    def identity(cls, width: int, height: int) -> "MotionField":
        ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
        return cls(np.stack([xs, ys]), np.ones((height, width)))

    def is_identity(self) -> bool:
        ident = MotionField.identity(self.width, self.height)
        return bool(np.array_equal(self.flow, ident.flow))


def build_dense_motion(
    key_kps: KeypointSet,
    target_kps: KeypointSet,
    width: int,
    height: int,
    sigma: float = 0.1,
    w0: float = 0.01,
    saturation: float = 0.01,
) -> MotionField:
    """Blend per-keypoint first-order motions into a dense backward flow.

    Around target keypoint k a target position z maps to
    ``key_k + J_k (z - target_k)`` with ``J_k = J_key_k inv(J_target_k)``.
    Gaussian weights centred on the target keypoints mix these motions with
    an identity motion of constant weight ``w0``. Confidence is one minus
    the background share of the weight, saturating to 1 where that share is
    at most ``saturation``. Identical keypoint sets give the exact identity
    field with confidence 1 everywhere.
    """
    MotionConfig(sigma, w0, saturation)
    if key_kps.count != target_kps.count:
        raise InvalidArgument(f"keypoint count mismatch: {key_kps.count} vs {target_kps.count}")
    if key_kps == target_kps:
        return MotionField.identity(width, height)

    sx_scale, sy_scale = max(width - 1, 1), max(height - 1, 1)
    zx = np.arange(width, dtype=np.float64) / sx_scale
    zy = np.arange(height, dtype=np.float64) / sy_scale
    jac = key_kps.jacobian_array() @ np.linalg.inv(target_kps.jacobian_array())

    num_x = np.zeros((height, width))
    num_y = np.zeros((height, width))
    wsum = np.zeros((height, width))
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    for k in range(key_kps.count):
        tx, ty = target_kps.points[k]
        kx, ky = key_kps.points[k]
        dx = (zx - tx)[None, :]
        dy = (zy - ty)[:, None]
        w = np.exp(-(dx * dx) * inv2s2) * np.exp(-(dy * dy) * inv2s2)
        j = jac[k]
        num_x += w * (kx + j[0, 0] * dx + j[0, 1] * dy)
        num_y += w * (ky + j[1, 0] * dx + j[1, 1] * dy)
        wsum += w

    den = wsum + w0
    fx = (num_x + w0 * zx[None, :]) / den
    fy = (num_y + w0 * zy[:, None]) / den
    background = w0 / den
    conf = np.where(background <= saturation, 1.0, 1.0 - background)
    return MotionField(np.stack([fx * sx_scale, fy * sy_scale]), conf)


def match_keypoints(
    key_kps: KeypointSet,
    target_kps: KeypointSet,
    width: int,
    height: int,
    snap: float = 1.5,
) -> KeypointSet:
    """Reorder ``key_kps`` so that entry k corresponds to ``target_kps[k]``.

    A detector lists corners in raster order, which coding noise or motion
    can permute. Pairs are found by a minimum-cost assignment after removing
    the centroid offset between the sets (the centroid does not depend on
    order). Matched key points within ``snap`` pixels of their target are
    moved onto it, so detector jitter does not turn into motion.
    """
    if key_kps.count != target_kps.count:
        raise InvalidArgument(f"keypoint count mismatch: {key_kps.count} vs {target_kps.count}")
    scale = np.array([max(width - 1, 1), max(height - 1, 1)], dtype=np.float64)
    key_px = key_kps.points * scale
    tgt_px = target_kps.points * scale
    shifted = key_px + (tgt_px.mean(axis=0) - key_px.mean(axis=0))
    cost = ((tgt_px[:, None, :] - shifted[None, :, :]) ** 2).sum(axis=-1)
    _, order = linear_sum_assignment(cost)
    pts = key_kps.points[order].copy()
    jac = None if key_kps.jacobians is None else key_kps.jacobians[order]
    if snap > 0:
        near = np.abs(tgt_px - key_px[order]).max(axis=1) <= snap
        pts[near] = target_kps.points[near]
        if jac is not None:
            tj = target_kps.jacobian_array()
            jac = np.where(near[:, None, None], tj, jac)
    return KeypointSet(pts, jac, key_kps.padded)


def warp_array(planes: np.ndarray, field: MotionField) -> np.ndarray:
    """Bilinear backward sampling of ``(C, H, W)`` planes; coordinates are
    clamped to the image, so out-of-range samples repeat the border."""
    planes = np.asarray(planes, dtype=np.float64)
    c, h, w = planes.shape
    if (field.height, field.width) != (h, w):
        raise InvalidArgument("motion field and frame dimensions differ")
    sx = np.clip(field.flow[0], 0, w - 1)
    sy = np.clip(field.flow[1], 0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = sx - x0
    fy = sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = planes[:, y0, x0] * (1 - fx) + planes[:, y0, x1] * fx
    bottom = planes[:, y1, x0] * (1 - fx) + planes[:, y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def warp(frame: Frame, field: MotionField) -> Frame:
    return Frame(to_uint8(warp_array(frame.planes, field)))


def animate(
    keyframe: Frame,
    key_kps: KeypointSet,
    target_kps: KeypointSet,
    config: MotionConfig | None = None,
) -> tuple[Frame, MotionField]:
    config = config or MotionConfig()
    key_kps = match_keypoints(key_kps, target_kps, keyframe.width, keyframe.height, config.snap)
    field = build_dense_motion(
        key_kps, target_kps, keyframe.width, keyframe.height, config.sigma, config.w0, config.saturation
    )
    if field.is_identity():
        return keyframe, field
    return warp(keyframe, field), field
