"""Kernel interpreter for the simulated device.

Iterations of parallel loops are independent, so the interpreter runs them
in lockstep: entering a ``PLOOP`` (or ``VLOOP``) multiplies the number of
lanes and every register becomes an array with one entry per lane (vector
registers get a trailing axis of 4). Reduction loops run their iterations
one after another, which keeps floating-point accumulation in ascending
order. Registers written inside a parallel loop are private to it and are
restored on exit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..codegen.kernel import (
    ACCESS_READ,
    ACCESS_WRITE,
    LOOPS,
    VECTOR_WIDTH,
    LoopNestKernel,
    Op,
    loop_extent,
)
from ..errors import KernelTrap, PermissionDenied
from ..ir import arith

DEFAULT_LANE_CAP = 1 << 16

_ARITH = {
    Op.ADDF: arith.add, Op.SUBF: arith.sub, Op.MULF: arith.mul, Op.MAXF: arith.maximum,
    Op.ADDI: arith.add, Op.SUBI: arith.sub, Op.MULI: arith.mul, Op.MAXI: arith.maximum,
}
_ARITH.update({Op(op + 8): fn for op, fn in list(_ARITH.items())})
_LANE = np.arange(VECTOR_WIDTH, dtype=np.int64)


@dataclass
class Instrumentation:
    """Optional counters filled in while kernels run.

    ``trips`` maps an instruction index of a loop to the total number of
    iterations executed (summed over lanes). ``write_counts`` holds one
    counter array per binding when ``count_writes`` is set.
    """

    count_writes: bool = False
    trips: dict[int, int] = field(default_factory=dict)
    write_counts: list | None = None
    instructions: int = 0


class PreparedKernel:
    """A kernel with its loop structure resolved once."""

    def __init__(self, kernel: LoopNestKernel):
        self.kernel = kernel
        instrs = kernel.instrs
        self.ops = [int(i.op) for i in instrs]
        self.args = [(i.a, i.b, i.c, i.imm) for i in instrs]
        self.ends = {pc: loop_extent(instrs, pc) for pc, i in enumerate(instrs) if i.op in LOOPS}
        self.consts = [np.array(k.value, dtype=k.element.dtype) for k in kernel.consts]
        self.dtypes = [b.element.dtype for b in kernel.bindings]
        self.access = [b.access for b in kernel.bindings]


def _trap(msg: str):
    raise KernelTrap(msg)


def _uniform(x: np.ndarray) -> int | None:
    if x.size == 0:
        return 0
    v = x[0]
    if x.size > 1 and not (x == v).all():
        return None
    return int(v)


def _match(a: np.ndarray, b: np.ndarray):
    if a.ndim == b.ndim:
        return a, b
    if a.ndim == 1:
        return a[:, None], b
    return a, b[:, None]


class _Machine:
    def __init__(self, pk: PreparedKernel, views, push, work_id, grid, instrument, lane_cap):
        self.pk = pk
        self.views = views
        self.push = push
        self.work_id = work_id
        self.grid = grid
        self.ins = instrument
        self.lane_cap = lane_cap
        self.regs: list = [None] * pk.kernel.num_regs

    # ------------------------------------------------------------------
    def read(self, r: int) -> np.ndarray:
        v = self.regs[r]
        if v is None:
            _trap(f"read of uninitialized register r{r}")
        return v

    def check_addr(self, binding: int, idx: np.ndarray) -> None:
        n = self.views[binding].shape[0]
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            bad = idx[(idx < 0) | (idx >= n)].ravel()[0]
            _trap(f"address {int(bad)} out of bounds for binding b{binding} of {n} elements")

    # ------------------------------------------------------------------
    def run(self, start: int, end: int, lanes: int) -> None:
        pk = self.pk
        ops, args, regs = pk.ops, pk.args, self.regs
        ins = self.ins
        pc = start
        while pc < end:
            op = ops[pc]
            a, b, c, imm = args[pc]
            if ins is not None:
                ins.instructions += 1
            if op == Op.PUSH:
                regs[a] = np.full(lanes, self.push[b], dtype=np.int64)
            elif op == Op.IMM:
                regs[a] = np.full(lanes, imm, dtype=np.int64)
            elif op == Op.WID:
                regs[a] = np.full(lanes, self.work_id[b], dtype=np.int64)
            elif op == Op.WCNT:
                regs[a] = np.full(lanes, self.grid[b], dtype=np.int64)
            elif op == Op.IADD:
                regs[a] = self.read(b) + self.read(c)
            elif op == Op.ISUB:
                regs[a] = self.read(b) - self.read(c)
            elif op == Op.IMUL:
                regs[a] = self.read(b) * self.read(c)
            elif op == Op.IMIN:
                regs[a] = np.minimum(self.read(b), self.read(c))
            elif op == Op.IDIV:
                den = self.read(c)
                if (den == 0).any():
                    _trap("integer division by zero")
                regs[a] = self.read(b) // den
            elif op == Op.KCONST:
                regs[a] = np.full(lanes, pk.consts[b])
            elif op == Op.MOV:
                regs[a] = self.read(b)
            elif op == Op.LOAD or op == Op.VLOAD:
                idx = self.read(c)
                if op == Op.VLOAD:
                    idx = idx[:, None] + _LANE
                self.check_addr(b, idx)
                regs[a] = self.views[b][idx]
            elif op == Op.STORE or op == Op.VSTORE:
                self.store(a, self.read(b), self.read(c), op == Op.VSTORE, lanes)
            elif op in _ARITH:
                x, y = _match(self.read(b), self.read(c))
                regs[a] = _ARITH[op](x, y)
            elif op == Op.PLOOP or op == Op.VLOOP:
                self.parallel_loop(pc, lanes, op == Op.VLOOP)
                pc = pk.ends[pc]
            elif op == Op.RLOOP:
                self.reduction_loop(pc, lanes)
                pc = pk.ends[pc]
            elif op == Op.END:
                _trap(f"unmatched end at {pc}")
            else:
                _trap(f"unknown opcode {op} at {pc}")
            pc += 1

    def store(self, binding: int, addr: np.ndarray, value: np.ndarray, vector: bool, lanes: int) -> None:
        if not self.pk.access[binding] & ACCESS_WRITE:
            raise PermissionDenied(f"kernel stores to binding b{binding}, which it declares read-only")
        idx = addr[:, None] + _LANE if vector else addr
        self.check_addr(binding, idx)
        if vector and value.ndim == 1:
            value = np.broadcast_to(value[:, None], idx.shape)
        view = self.views[binding]
        view[idx] = value
        if self.ins is not None and self.ins.write_counts is not None:
            np.add.at(self.ins.write_counts[binding], idx.ravel(), 1)

    # ------------------------------------------------------------------
    def _bounds(self, pc: int):
        _, lo_r, hi_r, _ = self.pk.args[pc]
        lo = self.read(lo_r)
        hi = self.read(hi_r)
        return lo, hi, _uniform(lo), _uniform(hi)

    def _per_group(self, pc: int, lanes: int, lo: np.ndarray, hi: np.ndarray, body) -> None:
        """Run a loop whose bounds differ between lanes, one bound pair at a time."""
        pairs = np.stack([lo, hi], axis=1)
        keys, inverse = np.unique(pairs, axis=0, return_inverse=True)
        outer = self.regs
        full = list(outer)
        for k in range(len(keys)):
            mask = inverse.reshape(-1) == k
            sub = [None if r is None else r[mask] for r in full]
            self.regs = sub
            body(int(mask.sum()))
            merged = list(full)
            for i, (old, new) in enumerate(zip(full, sub)):
                if new is None:
                    continue
                if old is None or old.dtype != new.dtype or old.shape[1:] != new.shape[1:]:
                    base = np.zeros((lanes,) + new.shape[1:], dtype=new.dtype)
                else:
                    base = old.copy()
                base[mask] = new
                merged[i] = base
            full = merged
        # Callers hold on to the list object, so update it in place.
        outer[:] = full
        self.regs = outer

    def parallel_loop(self, pc: int, lanes: int, vector: bool) -> None:
        lo, hi, ulo, uhi = self._bounds(pc)
        if ulo is None or uhi is None:
            saved = list(self.regs)
            self._per_group(pc, lanes, lo, hi, lambda n: self.parallel_loop(pc, n, vector))
            self.regs[:] = saved
            return
        step = VECTOR_WIDTH if vector else 1
        if uhi <= ulo or lanes == 0:
            return
        iv_reg = self.pk.args[pc][0]
        end = self.pk.ends[pc]
        points = np.arange(ulo, uhi, step, dtype=np.int64)
        if self.ins is not None:
            self.ins.trips[pc] = self.ins.trips.get(pc, 0) + lanes * len(points)
        chunk = max(1, self.lane_cap // max(lanes, 1))
        saved = self.regs
        for s in range(0, len(points), chunk):
            part = points[s : s + chunk]
            n = len(part)
            self.regs = [None if r is None else np.repeat(r, n, axis=0) for r in saved]
            self.regs[iv_reg] = np.tile(part, lanes)
            self.run(pc + 1, end, lanes * n)
        self.regs = saved

    def reduction_loop(self, pc: int, lanes: int) -> None:
        lo, hi, ulo, uhi = self._bounds(pc)
        if ulo is None or uhi is None:
            self._per_group(pc, lanes, lo, hi, lambda n: self.reduction_loop(pc, n))
            return
        iv_reg = self.pk.args[pc][0]
        end = self.pk.ends[pc]
        if self.ins is not None and uhi > ulo:
            self.ins.trips[pc] = self.ins.trips.get(pc, 0) + lanes * (uhi - ulo)
        for t in range(ulo, uhi):
            self.regs[iv_reg] = np.full(lanes, t, dtype=np.int64)
            self.run(pc + 1, end, lanes)


def execute_kernel(
    kernel,
    views,
    push,
    work_id=(0, 0, 0),
    grid=(1, 1, 1),
    instrument: Instrumentation | None = None,
    lane_cap: int = DEFAULT_LANE_CAP,
) -> None:
    """Run one work item. ``views`` holds one flat typed array per binding;
    read-only bindings may be passed as non-writable arrays."""
    pk = kernel if isinstance(kernel, PreparedKernel) else PreparedKernel(kernel)
    if len(views) != len(pk.dtypes):
        raise KernelTrap(f"kernel expects {len(pk.dtypes)} bindings, got {len(views)}")
    if len(push) != pk.kernel.num_push:
        raise KernelTrap(f"kernel expects {pk.kernel.num_push} push constants, got {len(push)}")
    for i, (v, dt) in enumerate(zip(views, pk.dtypes)):
        if v.dtype != dt:
            raise KernelTrap(f"binding b{i} is {v.dtype}, kernel expects {dt}")
    if instrument is not None and instrument.count_writes and instrument.write_counts is None:
        instrument.write_counts = [np.zeros(v.shape[0], dtype=np.int64) for v in views]
    _Machine(pk, views, push, work_id, grid, instrument, lane_cap).run(0, len(pk.ops), 1)


def run_kernel_sequential(kernel: LoopNestKernel, views, push, work_id=(0, 0, 0), grid=(1, 1, 1)) -> None:
    """Reference execution with one lane: every loop iteration is visited in
    program order. Used to cross-check the lockstep engine."""
    execute_kernel(kernel, views, push, work_id, grid, lane_cap=1)


__all__ = [
    "ACCESS_READ",
    "DEFAULT_LANE_CAP",
    "Instrumentation",
    "PreparedKernel",
    "execute_kernel",
    "run_kernel_sequential",
]
