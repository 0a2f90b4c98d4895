"""Codec configuration shared by the library entry points and the CLI."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .basecodec import QP_MAX, QP_MIN
from .container import SELECTION_MODES
from .enhance import ENHANCERS
from .errors import InvalidArgument
from .motion import MotionConfig


@dataclass(frozen=True)
class Config:
    gop_size: int = 10
    qp_key: int = 30
    qp_aux: int = 45
    kp_count: int = 10
    kp_precision: int = 8
    sigma: float = 0.1
    w0: float = 0.01
    snap: float = 1.5
    enhancer: str = "guided"
    selection: str = "adaptive"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.gop_size < 2:
            raise InvalidArgument(f"gop_size must be >= 2, got {self.gop_size}")
        for name in ("qp_key", "qp_aux"):
            v = getattr(self, name)
            if not QP_MIN <= v <= QP_MAX:
                raise InvalidArgument(f"{name} must be in [{QP_MIN}, {QP_MAX}], got {v}")
        if not 1 <= self.kp_count <= 255:
            raise InvalidArgument("kp_count must be in [1, 255]")
        if not 4 <= self.kp_precision <= 16:
            raise InvalidArgument("kp_precision must be in [4, 16]")
        self.motion
        if self.enhancer not in ENHANCERS:
            raise InvalidArgument(f"unknown enhancer {self.enhancer!r}")
        if self.selection not in SELECTION_MODES:
            raise InvalidArgument(f"selection must be one of {SELECTION_MODES}")
        if self.workers < 1:
            raise InvalidArgument("workers must be >= 1")

    @property
    def motion(self) -> MotionConfig:
        return MotionConfig(self.sigma, self.w0, snap=self.snap)

    def with_overrides(self, **overrides) -> "Config":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_file(cls, path: str | os.PathLike, base: "Config | None" = None) -> "Config":
        """Read ``key=value`` lines (``#`` comments allowed) over ``base``."""
        types = {f.name: f.type for f in fields(cls)}
        casts = {"int": int, "float": float, "str": str}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidArgument(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise InvalidArgument(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = casts[types[key]](value)
            except ValueError:
                raise InvalidArgument(f"{path}:{lineno}: bad value for {key}") from None
        return (base or cls()).with_overrides(**values)
