"""Synthetic talking-head style test sequences.

Every scene is a soft ellipse "face" with ten small Gaussian dots as facial
landmarks over a smooth background. Dots sit on distinct rows at least ten
pixels apart (at 256x256) so that a detector's row-major ordering stays
stable under the moderate motions generated here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .frame import Frame, Video, to_uint8

KINDS = ("morph", "translate", "static", "talking-blob")

# landmark offsets from the face centre in pixels at 256x256, (x, y)
LANDMARKS = np.array(
    [
        [-30, -48], [32, -38], [-22, -28], [24, -18], [0, -8],
        [-14, 2], [16, 12], [-26, 22], [28, 32], [2, 42],
    ],
    dtype=np.float64,
)
MOUTH = slice(7, 10)


@dataclass(frozen=True)
class Palette:
    background: tuple[float, float, float]
    skin: tuple[float, float, float]
    texture_phase: float


PALETTE_A = Palette((60.0, 90.0, 140.0), (205.0, 165.0, 135.0), 0.0)
PALETTE_B = Palette((150.0, 110.0, 60.0), (150.0, 115.0, 95.0), np.pi)


def _blend(a: Palette, b: Palette, t: float) -> Palette:
    lerp = lambda u, v: tuple((1 - t) * x + t * y for x, y in zip(u, v))
    return Palette(lerp(a.background, b.background), lerp(a.skin, b.skin), (1 - t) * a.texture_phase + t * b.texture_phase)


def render_face(
    size: int,
    center: tuple[float, float],
    landmarks: np.ndarray | None = None,
    palette: Palette = PALETTE_A,
    dot_sigma: float = 2.5,
    dot_depth: float = 110.0,
    texture: float = 0.0,
) -> Frame:
    """Render one RGB frame. ``landmarks`` are pixel offsets at 256x256 scale."""
    s = size / 256.0
    lm = LANDMARKS if landmarks is None else np.asarray(landmarks, dtype=np.float64)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    cx, cy = center

    bg = np.array(palette.background)[:, None, None] * (0.85 + 0.3 * ys / max(size - 1, 1))[None]
    if texture:
        wave = np.sin(2 * np.pi * xs / (40 * s) + palette.texture_phase) * np.sin(2 * np.pi * ys / (56 * s))
        bg = bg + texture * wave[None]

    r = np.sqrt(((xs - cx) / (78 * s)) ** 2 + ((ys - cy) / (96 * s)) ** 2)
    face_mask = np.clip((1.0 - r) * 12.0, 0.0, 1.0)
    shade = 1.0 - 0.15 * r**2
    face = np.array(palette.skin)[:, None, None] * shade[None]
    img = face_mask[None] * face + (1 - face_mask[None]) * bg

    sig = dot_sigma * s
    dots = np.zeros((size, size))
    for ox, oy in lm:
        px, py = cx + ox * s, cy + oy * s
        dots += np.exp(-((xs - px) ** 2 + (ys - py) ** 2) / (2 * sig * sig))
    img = img - dot_depth * np.minimum(dots, 1.0)[None] * face_mask[None]
    return Frame(to_uint8(img))


def _check(frames: int, size: int) -> None:
    if frames < 1:
        raise InvalidArgument("frame count must be positive")
    if size < 16:
        raise InvalidArgument("size must be at least 16")


def talking_blob(frames: int = 120, size: int = 256, seed: int = 0, fps: float = 25.0) -> Video:
    """Head sway plus a periodically opening mouth."""
    _check(frames, size)
    rng = np.random.default_rng(seed)
    s = size / 256.0
    amp_x, amp_y = rng.uniform(6, 10), rng.uniform(3, 5)
    per_x, per_y, per_m = rng.uniform(40, 60), rng.uniform(25, 35), rng.uniform(8, 14)
    phase = rng.uniform(0, 2 * np.pi, 3)
    out = []
    for t in range(frames):
        cx = size / 2 + s * amp_x * np.sin(2 * np.pi * t / per_x + phase[0])
        cy = size / 2 + s * amp_y * np.sin(2 * np.pi * t / per_y + phase[1])
        lm = LANDMARKS.copy()
        lm[MOUTH, 1] += 3.0 * np.sin(2 * np.pi * t / per_m + phase[2]) * np.array([-1.0, 0.0, 1.0])
        out.append(render_face(size, (cx, cy), lm))
    return Video(tuple(out), fps=fps)


def static(frames: int = 120, size: int = 256, seed: int = 0, fps: float = 25.0) -> Video:
    _check(frames, size)
    first = talking_blob(1, size, seed).frames[0]
    return Video((first,) * frames, fps=fps)


def translate(frames: int = 30, size: int = 256, seed: int = 0, fps: float = 25.0, step: int = 1) -> Video:
    """The face translates ``step`` pixels right per frame (integer motion)."""
    _check(frames, size)
    rng = np.random.default_rng(seed)
    y0 = size / 2 + rng.integers(-4, 5)
    x0 = size / 2 - step * (frames - 1) / 2
    return Video(tuple(render_face(size, (round(x0) + step * t, y0)) for t in range(frames)), fps=fps)


def morph(frames: int = 60, size: int = 256, seed: int = 0, fps: float = 25.0) -> Video:
    """Monotone transition from pose/appearance A to B.

    The face moves along a straight line, the mouth opens, and palette and
    background texture cross-fade, all linearly in time. Frame ``t`` is
    equally far from both ends at ``t = (frames - 1) / 2``.
    """
    _check(frames, size)
    rng = np.random.default_rng(seed)
    s = size / 256.0
    start = np.array([size / 2 - 18 * s, size / 2 - 10 * s]) + rng.uniform(-2, 2, 2) * s
    stop = np.array([size / 2 + 18 * s, size / 2 + 10 * s]) + rng.uniform(-2, 2, 2) * s
    out = []
    for t in range(frames):
        a = t / (frames - 1) if frames > 1 else 0.0
        lm = LANDMARKS.copy()
        lm[MOUTH, 1] += 4.0 * a * np.array([-1.0, 0.0, 1.0])
        pal = _blend(PALETTE_A, PALETTE_B, a)
        cx, cy = (1 - a) * start + a * stop
        out.append(render_face(size, (cx, cy), lm, pal, texture=25.0))
    return Video(tuple(out), fps=fps)


def synthesize(kind: str, frames: int, size: int = 256, seed: int = 0, fps: float = 25.0) -> Video:
    gen = {"morph": morph, "translate": translate, "static": static, "talking-blob": talking_blob}
    try:
        return gen[kind](frames, size, seed, fps)
    except KeyError:
        raise InvalidArgument(f"unknown corpus kind {kind!r}; known: {KINDS}") from None
