"""Kernels, host bytecode and C emission."""

from .bytecode import (
    decode_host_bytecode,
    deserialize_kernel,
    generate_host_bytecode,
    serialize_kernel,
)
from .emitc import emit_host_c, parse_host_c
from .kernel import LoopNestKernel
from .loops import lower_dispatch_to_loops
from .vectorize import vectorize

__all__ = [
    "LoopNestKernel",
    "decode_host_bytecode",
    "deserialize_kernel",
    "emit_host_c",
    "generate_host_bytecode",
    "lower_dispatch_to_loops",
    "parse_host_c",
    "serialize_kernel",
    "vectorize",
]
