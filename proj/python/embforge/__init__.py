"""Build 3D embodied instruction-tuning datasets from robot episodes."""

from ._embforge import (
    EpisodeLoadError,
    ParseError,
    align_depth_scales,
    annotate,
    canonicalize,
    decode_actions,
    decode_box,
    dequantize,
    encode_actions,
    encode_box,
    iou3d,
    load_episode,
    make_fixture,
    quantize,
    stats,
    unproject,
    validate,
    vocab_json,
    vocab_size,
)

__all__ = [
    "EpisodeLoadError",
    "ParseError",
    "align_depth_scales",
    "annotate",
    "canonicalize",
    "decode_actions",
    "decode_box",
    "dequantize",
    "encode_actions",
    "encode_box",
    "iou3d",
    "load_episode",
    "make_fixture",
    "quantize",
    "stats",
    "unproject",
    "validate",
    "vocab_json",
    "vocab_size",
]
__version__ = "0.1.0"
