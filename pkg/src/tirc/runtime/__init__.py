from .hal import Allocator, Buffer, BufferFlags, CpuDevice, Device, Origin
from .interp import Instrumentation, PreparedKernel, execute_kernel
from .loader import load_kernel_library
from .pool import TransientPool
from .scheduler import TaskGraph, WorkerState, dispatch_async, dispatch_sync
from .tensor_io import read_tensor, write_tensor
from .vm import Program, RunResult, RunStats, vm_run

__all__ = [
    "Allocator",
    "Buffer",
    "BufferFlags",
    "CpuDevice",
    "Device",
    "Instrumentation",
    "Origin",
    "PreparedKernel",
    "Program",
    "RunResult",
    "RunStats",
    "TaskGraph",
    "TransientPool",
    "WorkerState",
    "dispatch_async",
    "dispatch_sync",
    "execute_kernel",
    "load_kernel_library",
    "read_tensor",
    "vm_run",
    "write_tensor",
]
