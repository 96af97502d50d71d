"""Python bindings for the robunmt C++ core."""

from ._core import (
    RobunmtError,
    bleu,
    evaluate,
    generate_bundle,
    make_delta,
    order_noise,
    run_cli,
    train,
    word_noise,
)

__all__ = [
    "RobunmtError",
    "bleu",
    "evaluate",
    "generate_bundle",
    "make_delta",
    "order_noise",
    "run_cli",
    "train",
    "word_noise",
]
