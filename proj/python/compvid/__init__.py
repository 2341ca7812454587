"""Entity-factorized stochastic video prediction (C++ core)."""

import torch  # noqa: F401  loads libtorch before the extension

from ._core import (
    ArgumentError,
    Checkpoint,
    FormatError,
    IncompatibleEntityCount,
    IoError,
    NumericalError,
    ValidationError,
    VideoSequence,
    compose,
    frame_error,
    generate_sequence,
    kl_to_standard,
    load_checkpoint,
    load_sequence,
    location_error,
    run_cli,
    warp_to_frame,
    write_sequence,
)

__all__ = [
    "ArgumentError",
    "Checkpoint",
    "FormatError",
    "IncompatibleEntityCount",
    "IoError",
    "NumericalError",
    "ValidationError",
    "VideoSequence",
    "compose",
    "frame_error",
    "generate_sequence",
    "kl_to_standard",
    "load_checkpoint",
    "load_sequence",
    "location_error",
    "run_cli",
    "warp_to_frame",
    "write_sequence",
]
