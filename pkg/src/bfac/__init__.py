"""Bidirectional keyframe-animation codec for low-bitrate talking-head video."""

__version__ = "0.1.0"

from .config import Config
from .errors import BfacError, DecodeError, FormatError, InvalidArgument
from .frame import Frame, Video, load_video, save_video
from .reconstruct import decode_video, encode_video

__all__ = [
    "BfacError",
    "Config",
    "DecodeError",
    "FormatError",
    "Frame",
    "InvalidArgument",
    "Video",
    "decode_video",
    "encode_video",
    "load_video",
    "save_video",
]
