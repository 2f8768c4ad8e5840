"""Module-level optimizations and the host/device split."""

from .conv import is_pointwise_conv, rewrite_conv1x1_to_matmul
from .cse import cse
from .dce import dce
from .dispatch import DispatchRegion, TileSpec, form_dispatch_regions
from .fusion import fuse_elementwise
from .host import HostProgram, verify_host_program

__all__ = [
    "DispatchRegion",
    "HostProgram",
    "TileSpec",
    "cse",
    "dce",
    "form_dispatch_regions",
    "fuse_elementwise",
    "is_pointwise_conv",
    "rewrite_conv1x1_to_matmul",
    "verify_host_program",
]
