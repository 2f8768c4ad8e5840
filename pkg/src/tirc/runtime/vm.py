"""Host-program execution.

A loaded ``Program`` owns the kernel library, the constant buffers and a
transient pool. Each ``run`` binds inputs, executes the host program and
copies the results out. The host program executes in one of two modes:

* ``interpret``: host bytecode is decoded op by op on every run;
* ``direct``: the host program (from bytecode or emitted C) is translated
  once into a Python function whose body is a straight sequence of runtime
  API calls, so nothing is decoded while it runs.

Both modes drive the same ``HostExecutor``, which implements the eight
runtime API entry points.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, fields

import numpy as np

from ..codegen.bytecode import decode_host_bytecode, host_op_words
from ..codegen.emitc import parse_host_c
from ..codegen.kernel import ACCESS_WRITE
from ..errors import RuntimeFault, ShapeMismatch, SignatureMismatch
from ..module_format import ModuleFile, Signature, read_module
from ..transforms import host as H
from .hal import (
    CONSTANT_FLAGS,
    INPUT_FLAGS,
    RESULT_FLAGS,
    Allocator,
    Buffer,
    CpuDevice,
    Device,
    Origin,
)
from .interp import Instrumentation
from .loader import check_links, load_kernel_library
from .pool import TransientPool
from .scheduler import TaskGraph, WorkerState, dispatch_async, dispatch_sync, overlapping

I64_MIN, I64_MAX = -(1 << 63), (1 << 63) - 1

SCHEDULERS = ("sync", "async")
HOST_MODES = ("auto", "interpret", "direct")


@dataclass
class RunStats:
    scheduler: str = "sync"
    host_mode: str = "interpret"
    host_ops: int = 0
    decoded_ops: int = 0
    dispatches: int = 0
    work_items: int = 0
    pool_high_water: int = 0
    pool_acquires: int = 0
    pool_reuses: int = 0
    peak_device_bytes: int = 0
    live_bytes_after: int = 0
    overlapping_dispatches: int = 0

    def lines(self) -> list[str]:
        return [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]


@dataclass
class RunResult:
    outputs: list[np.ndarray]
    stats: RunStats
    graph: TaskGraph | None = None
    instrument: Instrumentation | None = None


def release_points(program: H.HostProgram) -> dict[int, list[int]]:
    """Map op index -> pooled buffer registers whose last use is that op."""
    last_use: dict[int, int] = {}
    out: dict[int, list[int]] = defaultdict(list)
    for idx, op in enumerate(program.ops):
        _, _, b_reads, b_writes = H.register_effects(op)
        for b in b_reads:
            if b in last_use:
                last_use[b] = idx
        for b in b_writes:
            if b in last_use:
                out[last_use.pop(b)].append(b)
            if isinstance(op, H.AllocTransient) and op.lifetime == H.LIFETIME_TRANSIENT:
                last_use[b] = idx
    for b, idx in last_use.items():
        out[idx].append(b)
    return dict(out)


def check_inputs(sig: Signature, inputs) -> None:
    if len(inputs) != len(sig.args):
        raise SignatureMismatch(f"expected {len(sig.args)} inputs, got {len(inputs)}")
    for i, (t, x) in enumerate(zip(sig.args, inputs)):
        if x.dtype != t.element.dtype:
            raise SignatureMismatch(f"input {i}: expected {t.element}, got {x.dtype}")
        if x.ndim != t.rank:
            raise SignatureMismatch(f"input {i}: expected rank {t.rank}, got shape {x.shape}")
        if not t.accepts(x.shape):
            raise SignatureMismatch(f"input {i}: shape {x.shape} does not match {t}")
    for group, static in sig.constraints:
        extents = {inputs[a].shape[k] for a, k in group}
        if static >= 0:
            extents.add(static)
        if len(extents) > 1:
            where = ", ".join(f"input {a} axis {k}" for a, k in group)
            raise SignatureMismatch(f"extents of {where} must agree, got {sorted(extents)}")


# ---------------------------------------------------------------------------
# direct-call linking
# ---------------------------------------------------------------------------


def _tuple(items) -> str:
    items = list(items)
    return "(" + "".join(f"{x}, " for x in items) + ")"


def direct_source(program: H.HostProgram, name: str = "host") -> str:
    """Python source calling the runtime API once per host op."""
    lines = [f"def {name}(api):", f"    r = [0] * {max(program.num_regs, 1)}"]
    for op in program.ops:
        if isinstance(op, H.ConstI64):
            lines.append(f"    r[{op.dst}] = api.const_i64({op.value})")
        elif isinstance(op, H.Dim):
            lines.append(f"    r[{op.dst}] = api.dim({op.arg}, {op.axis})")
        elif isinstance(op, H.Mul):
            lines.append(f"    r[{op.dst}] = api.mul(r[{op.lhs}], r[{op.rhs}])")
        elif isinstance(op, H.CeilDiv):
            lines.append(f"    r[{op.dst}] = api.ceildiv(r[{op.lhs}], r[{op.rhs}])")
        elif isinstance(op, H.AllocTransient):
            lines.append(f"    api.alloc_transient({op.dst}, r[{op.size}], {op.lifetime})")
        elif isinstance(op, H.BindConst):
            lines.append(f"    api.bind_constant({op.dst}, {op.index})")
        elif isinstance(op, H.Dispatch):
            grid = _tuple(f"r[{g}]" for g in op.grid)
            push = _tuple(f"r[{p}]" for p in op.push)
            lines.append(f"    api.dispatch({op.region}, {grid}, {_tuple(op.bindings)}, {push})")
        elif isinstance(op, H.Return):
            values = _tuple(f"({rv.buffer}, {_tuple(f'r[{d}]' for d in rv.dims)})" for rv in op.values)
            lines.append(f"    return api.ret({values})")
    return "\n".join(lines) + "\n"


def link_direct(program: H.HostProgram, name: str = "host"):
    src = direct_source(program, name)
    namespace: dict = {}
    exec(compile(src, f"<direct host program {name}>", "exec"), namespace)
    return namespace[name]


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


class _Slot:
    """One buffer register. In async mode the buffer appears when the
    allocation node runs; ``writer``/``readers`` track graph dependencies."""

    __slots__ = ("buffer", "writer", "readers", "pending")

    def __init__(self, buffer: Buffer | None = None, writer: int | None = None):
        self.buffer = buffer
        self.writer = writer
        self.readers: list[int] = []
        # (size, label) of an allocation whose graph node is not yet placed
        self.pending: tuple[int, str] | None = None


class HostExecutor:
    """Implements the runtime API for one run of a program."""

    def __init__(self, prog: Program, inputs, scheduler: str, workers: int, instrument, stats: RunStats):
        self.prog = prog
        self.scheduler = scheduler
        self.workers = workers
        self.instrument = instrument
        self.stats = stats
        self.ordinal = 0
        self.shapes = [x.shape for x in inputs]
        self.slots: list[_Slot | None] = [None] * max(prog.program.num_buffers, 1)
        self.inputs: list[Buffer] = []
        self.results: list[Buffer] = []
        self.pooled: dict[int, Buffer] = {}
        self.graph = TaskGraph() if scheduler == "async" else None
        self.ancestors: dict[int, frozenset[int]] = {}
        self.deallocs: list[tuple[int, frozenset[int]]] = []
        for i, x in enumerate(inputs):
            buf = prog.allocator.allocate(x.nbytes, INPUT_FLAGS, Origin.INPUT, initial=x, label=f"arg{i}")
            self.inputs.append(buf)
            self.slots[i] = _Slot(buf)

    # bookkeeping -----------------------------------------------------------
    def _advance(self) -> None:
        for reg in self.prog.releases.get(self.ordinal, ()):
            self._release(self.slots[reg])
        self.ordinal += 1
        self.stats.host_ops += 1

    def _acquire(self, slot: _Slot, size: int, label: str) -> None:
        buf = self.prog.pool.acquire(size, label)
        self.pooled[id(buf)] = buf
        slot.buffer = buf

    def _release_now(self, slot: _Slot) -> None:
        buf = slot.buffer
        self.prog.pool.release(buf)
        self.pooled.pop(id(buf), None)

    def _release(self, slot: _Slot) -> None:
        if self.graph is None:
            self._release_now(slot)
            return
        if slot.pending is not None:
            self._place_alloc(slot, set())
        deps = set(slot.readers)
        if slot.writer is not None:
            deps.add(slot.writer)
        node = self._add_node("dealloc", "dealloc", lambda s=slot: self._release_now(s), deps)
        self.deallocs.append((node, frozenset(deps)))

    def _add_node(self, name: str, kind: str, fn, deps) -> int:
        node = self.graph.add(name, kind, fn, after=deps)
        anc = set(deps)
        for d in deps:
            anc |= self.ancestors[d]
        self.ancestors[node] = frozenset(anc)
        return node

    def _place_alloc(self, slot: _Slot, deps: set[int]) -> None:
        """Add the allocation node for ``slot`` just ahead of its first use.

        It waits for the first user's other dependencies and for every
        release that is already guaranteed to precede that user, so the
        pool only holds buffers of work that can run concurrently.
        """
        done = set(deps)
        for d in deps:
            done |= self.ancestors[d]
        after = set(deps)
        for node, needs in self.deallocs:
            if needs <= done:
                after.add(node)
        size, label = slot.pending
        slot.pending = None
        slot.writer = self._add_node(f"alloc {label}", "alloc", lambda: self._acquire(slot, size, label), after)

    def cleanup(self) -> None:
        for buf in list(self.pooled.values()):
            self.prog.pool.release(buf)
        self.pooled.clear()
        for buf in self.inputs + self.results:
            self.prog.allocator.free(buf)
        self.inputs, self.results = [], []
        self.prog.pool.trim()

    # runtime API -------------------------------------------------------------
    def const_i64(self, value: int) -> int:
        self._advance()
        return value

    def dim(self, arg: int, axis: int) -> int:
        if arg >= len(self.shapes) or axis >= len(self.shapes[arg]):
            raise SignatureMismatch(f"argument {arg} has no axis {axis}")
        self._advance()
        return int(self.shapes[arg][axis])

    def mul(self, a: int, b: int) -> int:
        out = a * b
        if not I64_MIN <= out <= I64_MAX:
            raise RuntimeFault(f"i64 overflow in {a} * {b}")
        self._advance()
        return out

    def ceildiv(self, a: int, b: int) -> int:
        if b <= 0:
            raise RuntimeFault(f"ceildiv by non-positive {b}")
        self._advance()
        return -(-a // b)

    def alloc_transient(self, dst: int, size: int, lifetime: int) -> None:
        if size < 0:
            raise RuntimeFault(f"negative allocation size {size}")
        if lifetime == H.LIFETIME_RESULT:
            buf = self.prog.allocator.allocate(size, RESULT_FLAGS, Origin.RESULT, label=f"%b{dst}")
            self.results.append(buf)
            self.slots[dst] = _Slot(buf)
        elif self.graph is None:
            slot = _Slot()
            self._acquire(slot, size, f"%b{dst}")
            self.slots[dst] = slot
        else:
            slot = _Slot()
            slot.pending = (size, f"%b{dst}")
            self.slots[dst] = slot
        self._advance()

    def bind_constant(self, dst: int, index: int) -> None:
        self.slots[dst] = _Slot(self.prog.constants[index])
        self._advance()

    def dispatch(self, region: int, grid, bindings, push) -> None:
        pk = self.prog.kernels[region]
        grid = tuple(int(g) for g in grid)
        if any(g < 0 for g in grid):
            raise RuntimeFault(f"negative grid {grid}")
        slots = [self.slots[b] for b in bindings]
        push = tuple(int(p) for p in push)
        self.stats.dispatches += 1
        self.stats.work_items += grid[0] * grid[1] * grid[2]
        device, instrument = self.prog.device, self.instrument

        def run():
            worker = WorkerState(grid, [s.buffer for s in slots], push)
            dispatch_sync(device, pk, worker, instrument=instrument)

        if self.graph is None:
            run()
        else:
            writes = [bool(a & ACCESS_WRITE) for a in pk.access]
            # A fresh transient is allocated once the dispatch's other
            # dependencies are known.
            base = set()
            for slot, w in zip(slots, writes):
                if slot.pending is None:
                    if slot.writer is not None:
                        base.add(slot.writer)
                    if w:
                        base.update(slot.readers)
            for slot in slots:
                if slot.pending is not None:
                    self._place_alloc(slot, base)
            deps = set()
            for slot, w in zip(slots, writes):
                if slot.writer is not None:
                    deps.add(slot.writer)
                if w:
                    deps.update(slot.readers)
            node = self._add_node(f"dispatch {region}", "dispatch", run, deps)
            for slot, w in zip(slots, writes):
                if w:
                    slot.writer, slot.readers = node, []
                else:
                    slot.readers.append(node)
        self._advance()

    def ret(self, values) -> list[np.ndarray]:
        if self.graph is not None:
            dispatch_async(self.graph, self.workers)
            self.stats.overlapping_dispatches = len(overlapping(self.graph))
        outputs = []
        for i, ((buf, dims), t) in enumerate(zip(values, self.prog.signature.results)):
            shape = tuple(int(d) for d in dims)
            buffer = self.slots[buf].buffer
            # Extents derived by division (expand) are only consistent when
            # the input divides evenly; the buffer size exposes a mismatch.
            nbytes = int(np.prod(shape, dtype=np.int64)) * t.element.width
            if nbytes != buffer.length:
                raise ShapeMismatch(
                    f"result {i}: extents {shape} need {nbytes} bytes but {buffer.length} were produced; "
                    "the input extents violate the program's shape rules"
                )
            outputs.append(buffer.host_read(t.element.dtype, shape))
        self._advance()
        return outputs


class Program:
    """A module loaded onto a device."""

    def __init__(self, module, allocator: Allocator | None = None, device: Device | None = None):
        if isinstance(module, (bytes, bytearray, memoryview)):
            module = read_module(bytes(module))
        self.module: ModuleFile = module
        self.signature = module.signature
        self.allocator = allocator or Allocator()
        self.device = device or CpuDevice()
        self.pool = TransientPool(self.allocator)
        self.kernels = load_kernel_library(module)
        if module.host_bytecode is not None:
            self.name = "module"
            self.program = decode_host_bytecode(module.host_bytecode)
        else:
            self.name, self.program = parse_host_c(module.host_c)
        check_links(self.program, self.kernels, len(module.constants), len(self.signature.results))
        self.releases = release_points(self.program)
        self._direct = None
        self.constants: list[Buffer] = []
        for i, c in enumerate(module.constants):
            self.constants.append(
                self.allocator.allocate(c.array.nbytes, CONSTANT_FLAGS, Origin.CONSTANT, initial=c.array, label=f"const{i}")
            )

    @property
    def constant_bytes(self) -> int:
        return sum(b.length for b in self.constants)

    def direct_entry(self):
        if self._direct is None:
            self._direct = link_direct(self.program, f"{self.name}_run")
        return self._direct

    def close(self) -> None:
        for buf in self.constants:
            self.allocator.free(buf)
        self.constants = []
        self.pool.trim()

    def __enter__(self) -> Program:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _interpret(self, api: HostExecutor, stats: RunStats) -> list[np.ndarray]:
        regs = [0] * max(self.program.num_regs, 1)
        for _, op in host_op_words(self.module.host_bytecode):
            stats.decoded_ops += 1
            if isinstance(op, H.ConstI64):
                regs[op.dst] = api.const_i64(op.value)
            elif isinstance(op, H.Dim):
                regs[op.dst] = api.dim(op.arg, op.axis)
            elif isinstance(op, H.Mul):
                regs[op.dst] = api.mul(regs[op.lhs], regs[op.rhs])
            elif isinstance(op, H.CeilDiv):
                regs[op.dst] = api.ceildiv(regs[op.lhs], regs[op.rhs])
            elif isinstance(op, H.AllocTransient):
                api.alloc_transient(op.dst, regs[op.size], op.lifetime)
            elif isinstance(op, H.BindConst):
                api.bind_constant(op.dst, op.index)
            elif isinstance(op, H.Dispatch):
                api.dispatch(
                    op.region, [regs[g] for g in op.grid], op.bindings, [regs[p] for p in op.push]
                )
            elif isinstance(op, H.Return):
                return api.ret([(rv.buffer, [regs[d] for d in rv.dims]) for rv in op.values])
        raise RuntimeFault("host program ended without a return")

    def run(
        self,
        inputs,
        scheduler: str = "sync",
        workers: int = 2,
        host: str = "auto",
        instrument: Instrumentation | None = None,
    ) -> RunResult:
        if scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {scheduler!r}")
        if host not in HOST_MODES:
            raise ValueError(f"unknown host mode {host!r}")
        if host == "auto":
            host = "interpret" if self.module.host_bytecode is not None else "direct"
        if host == "interpret" and self.module.host_bytecode is None:
            raise ValueError("this module carries C source; only direct mode can run it")
        inputs = [np.ascontiguousarray(x) for x in inputs]
        check_inputs(self.signature, inputs)
        stats = RunStats(scheduler=scheduler, host_mode=host)
        self.pool.reset_peak()
        self.pool.acquires = self.pool.reuses = 0
        self.allocator.peak_bytes = self.allocator.live_bytes
        api = HostExecutor(self, inputs, scheduler, workers, instrument, stats)
        try:
            if host == "interpret":
                outputs = self._interpret(api, stats)
            else:
                outputs = self.direct_entry()(api)
        finally:
            api.cleanup()
        stats.pool_high_water = self.pool.high_water
        stats.pool_acquires = self.pool.acquires
        stats.pool_reuses = self.pool.reuses
        stats.peak_device_bytes = self.allocator.peak_bytes
        stats.live_bytes_after = self.allocator.live_bytes
        return RunResult(outputs, stats, api.graph, instrument)


def vm_run(module, inputs, **options) -> list[np.ndarray]:
    """Load ``module`` (bytes or ModuleFile), run it once and unload it."""
    with Program(module) as prog:
        return prog.run(inputs, **options).outputs
