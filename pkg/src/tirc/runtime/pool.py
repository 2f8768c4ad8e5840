"""Best-fit pool for transient buffers.

Blocks are never split: a request takes the smallest free block that is
large enough, or a fresh block of exactly the requested size. Acquired
memory is zeroed. ``live_bytes`` counts requested sizes of buffers that are
currently acquired, and ``high_water`` is its maximum since the last reset.
"""

from __future__ import annotations

import threading

from ..errors import DoubleRelease
from .hal import TRANSIENT_FLAGS, Allocator, Buffer, Origin


class TransientPool:
    def __init__(self, allocator: Allocator):
        self.allocator = allocator
        self.free_blocks: list[Buffer] = []
        self.live: dict[int, tuple[Buffer, Buffer]] = {}
        self.live_bytes = 0
        self.high_water = 0
        self.acquires = 0
        self.reuses = 0
        self._lock = threading.Lock()

    @property
    def reserved_bytes(self) -> int:
        """Bytes held from the allocator, free or in use."""
        with self._lock:
            return sum(b.length for b in self.free_blocks) + sum(blk.length for blk, _ in self.live.values())

    def reset_peak(self) -> None:
        with self._lock:
            self.high_water = self.live_bytes

    def acquire(self, nbytes: int, label: str = "") -> Buffer:
        with self._lock:
            best = None
            for i, blk in enumerate(self.free_blocks):
                if blk.length >= nbytes and (best is None or blk.length < self.free_blocks[best].length):
                    best = i
            if best is not None:
                block = self.free_blocks.pop(best)
                self.reuses += 1
            else:
                block = None
            self.acquires += 1
        if block is None:
            block = self.allocator.allocate(nbytes, TRANSIENT_FLAGS, Origin.POOLED_TRANSIENT, label="pool block")
        block.storage[:nbytes] = 0
        view = Buffer(nbytes, TRANSIENT_FLAGS, Origin.POOLED_TRANSIENT, block.storage[:nbytes], label)
        with self._lock:
            self.live[id(view)] = (block, view)
            self.live_bytes += nbytes
            self.high_water = max(self.high_water, self.live_bytes)
        return view

    def release(self, buffer: Buffer) -> None:
        with self._lock:
            entry = self.live.pop(id(buffer), None)
            if entry is None or entry[1] is not buffer:
                raise DoubleRelease(f"buffer {buffer.label or hex(id(buffer))} is not live in this pool")
            block, _ = entry
            self.live_bytes -= buffer.length
            self.free_blocks.append(block)

    def trim(self) -> int:
        """Return every free block to the allocator; returns bytes freed."""
        with self._lock:
            blocks, self.free_blocks = self.free_blocks, []
        for blk in blocks:
            self.allocator.free(blk)
        return sum(b.length for b in blocks)
