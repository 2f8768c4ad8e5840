"""Buffers, the byte allocator and the device abstraction.

Every buffer carries permission flags. Host reads and writes go through
``Buffer.host_read`` / ``Buffer.host_write``; kernels reach buffer memory only
through ``Buffer.device_view``. Each path checks the flags and raises
``PermissionDenied`` before touching any byte.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field

import numpy as np

from ..errors import OutOfMemory, PermissionDenied

ALIGNMENT = 16
DEFAULT_CAPACITY = 64 * 1024 * 1024


class BufferFlags(enum.IntFlag):
    HOST_VISIBLE = 1
    DEVICE_VISIBLE = 2
    READABLE = 4
    WRITABLE = 8


#: Flag sets for each kind of buffer the runtime creates.
INPUT_FLAGS = BufferFlags.HOST_VISIBLE | BufferFlags.DEVICE_VISIBLE | BufferFlags.READABLE
CONSTANT_FLAGS = BufferFlags.HOST_VISIBLE | BufferFlags.DEVICE_VISIBLE | BufferFlags.READABLE
RESULT_FLAGS = BufferFlags.HOST_VISIBLE | BufferFlags.DEVICE_VISIBLE | BufferFlags.READABLE | BufferFlags.WRITABLE
TRANSIENT_FLAGS = BufferFlags.DEVICE_VISIBLE | BufferFlags.READABLE | BufferFlags.WRITABLE


class Origin(enum.Enum):
    INPUT = "input"
    CONSTANT = "constant"
    RESULT = "result"
    POOLED_TRANSIENT = "pooled_transient"


def aligned_bytes(nbytes: int) -> np.ndarray:
    """Zero-filled uint8 array whose data pointer is 16-byte aligned."""
    raw = np.zeros(nbytes + ALIGNMENT, dtype=np.uint8)
    skip = (-raw.ctypes.data) % ALIGNMENT
    return raw[skip : skip + nbytes]


@dataclass(eq=False)
class Buffer:
    length: int
    flags: BufferFlags
    origin: Origin
    storage: np.ndarray = field(repr=False)
    label: str = ""

    @property
    def host_visible(self) -> bool:
        return bool(self.flags & BufferFlags.HOST_VISIBLE)

    @property
    def device_visible(self) -> bool:
        return bool(self.flags & BufferFlags.DEVICE_VISIBLE)

    @property
    def readable(self) -> bool:
        return bool(self.flags & BufferFlags.READABLE)

    @property
    def writable(self) -> bool:
        return bool(self.flags & BufferFlags.WRITABLE)

    def _deny(self, what: str) -> None:
        raise PermissionDenied(f"{what} {self.origin.value} buffer {self.label or hex(id(self))} (flags {self.flags!r})")

    def host_read(self, dtype, shape) -> np.ndarray:
        """Copy the contents out as an array of ``shape``."""
        if not (self.host_visible and self.readable):
            self._deny("host read of")
        dtype = np.dtype(dtype)
        n = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if n > self.length:
            raise PermissionDenied(f"host read of {n} bytes from a {self.length}-byte buffer")
        return self.storage[:n].view(dtype).reshape(shape).copy()

    def host_write(self, data: np.ndarray) -> None:
        if not (self.host_visible and self.writable):
            self._deny("host write to")
        raw = np.ascontiguousarray(data).view(np.uint8).reshape(-1)
        if raw.size > self.length:
            raise PermissionDenied(f"host write of {raw.size} bytes into a {self.length}-byte buffer")
        self.storage[: raw.size] = raw

    def device_view(self, dtype, read: bool, write: bool) -> np.ndarray:
        """Flat typed view for a kernel binding with the given access."""
        if not self.device_visible:
            self._deny("device access to")
        if read and not self.readable:
            self._deny("device read of")
        if write and not self.writable:
            self._deny("device write to")
        dtype = np.dtype(dtype)
        usable = self.length - self.length % dtype.itemsize
        view = self.storage[:usable].view(dtype)
        if not write:
            view = view.view()
            view.setflags(write=False)
        return view

    def snapshot(self) -> bytes:
        """Raw contents, bypassing permissions (tests and diagnostics only)."""
        return self.storage.tobytes()


class Allocator:
    """Byte allocator with a hard capacity. Thread safe."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        self.capacity = capacity
        self.live_bytes = 0
        self.peak_bytes = 0
        self.live_count = 0
        self._lock = threading.Lock()

    def allocate(self, length: int, flags: BufferFlags, origin: Origin, initial=None, label: str = "") -> Buffer:
        if length < 0:
            raise ValueError(f"negative allocation size {length}")
        with self._lock:
            if self.live_bytes + length > self.capacity:
                raise OutOfMemory(
                    f"allocating {length} bytes with {self.live_bytes} of {self.capacity} in use"
                )
            self.live_bytes += length
            self.live_count += 1
            self.peak_bytes = max(self.peak_bytes, self.live_bytes)
        storage = aligned_bytes(length)
        if initial is not None:
            # Initialization by the runtime itself, before any flags apply.
            raw = np.ascontiguousarray(initial).view(np.uint8).reshape(-1)
            storage[: raw.size] = raw
        return Buffer(length, BufferFlags(flags), origin, storage, label)

    def free(self, buffer: Buffer) -> None:
        with self._lock:
            self.live_bytes -= buffer.length
            self.live_count -= 1


class Device:
    """Execution target: runs one work item of a kernel at a time."""

    name = "abstract"

    def run_work_item(self, kernel, views, push, work_id, grid, instrument=None) -> None:
        raise NotImplementedError


class CpuDevice(Device):
    """Simulated device backed by the lockstep kernel interpreter."""

    name = "cpu-sim"

    def __init__(self, lane_cap: int | None = None):
        from .interp import DEFAULT_LANE_CAP

        self.lane_cap = lane_cap or DEFAULT_LANE_CAP

    def run_work_item(self, kernel, views, push, work_id, grid, instrument=None) -> None:
        from .interp import execute_kernel

        execute_kernel(kernel, views, push, work_id, grid, instrument=instrument, lane_cap=self.lane_cap)
