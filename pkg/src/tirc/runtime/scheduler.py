"""Dispatch execution: synchronous grid walks and an asynchronous task graph."""

from __future__ import annotations

import graphlib
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable

from ..codegen.kernel import ACCESS_READ, ACCESS_WRITE
from ..errors import CycleDetected, KernelTrap
from .hal import Buffer, Device
from .interp import Instrumentation, PreparedKernel


@dataclass
class WorkerState:
    """Everything a kernel may observe besides its own work-item id."""

    grid: tuple[int, int, int]
    bindings: list[Buffer]
    push: tuple[int, ...]


def binding_views(kernel: PreparedKernel, buffers: list[Buffer]) -> list:
    """Check each binding against its buffer's flags and build typed views.
    Raises PermissionDenied before the kernel runs."""
    if len(buffers) != len(kernel.dtypes):
        raise KernelTrap(f"kernel expects {len(kernel.dtypes)} bindings, dispatch passes {len(buffers)}")
    views = []
    for buf, dtype, access in zip(buffers, kernel.dtypes, kernel.access):
        views.append(buf.device_view(dtype, read=bool(access & ACCESS_READ), write=bool(access & ACCESS_WRITE)))
    return views


def dispatch_sync(
    device: Device,
    kernel: PreparedKernel,
    worker: WorkerState,
    trace: list | None = None,
    instrument: Instrumentation | None = None,
) -> int:
    """Run every work item in z, y, x order; returns the number run."""
    views = binding_views(kernel, worker.bindings)
    gx, gy, gz = worker.grid
    count = 0
    for z in range(gz):
        for y in range(gy):
            for x in range(gx):
                if trace is not None:
                    trace.append((x, y, z))
                device.run_work_item(kernel, views, worker.push, (x, y, z), worker.grid, instrument)
                count += 1
    return count


@dataclass
class TaskNode:
    name: str
    kind: str  # "alloc", "dispatch", "dealloc" or "host"
    fn: Callable[[], object]
    start: float = 0.0
    end: float = 0.0
    thread: str = ""


@dataclass
class TaskGraph:
    nodes: list[TaskNode] = field(default_factory=list)
    deps: dict[int, set[int]] = field(default_factory=dict)

    def add(self, name: str, kind: str, fn, after=()) -> int:
        nid = len(self.nodes)
        self.nodes.append(TaskNode(name, kind, fn))
        self.deps[nid] = set(after)
        return nid

    def add_edge(self, before: int, after: int) -> None:
        self.deps[after].add(before)

    def sorter(self) -> graphlib.TopologicalSorter:
        ts = graphlib.TopologicalSorter(self.deps)
        try:
            ts.prepare()
        except graphlib.CycleError as exc:
            raise CycleDetected(f"task graph has a cycle through nodes {exc.args[1]}") from None
        return ts

    def topological_order(self) -> list[int]:
        ts = self.sorter()
        order = []
        while ts.is_active():
            ready = sorted(ts.get_ready())
            order.extend(ready)
            ts.done(*ready)
        return order

    def run_serial(self) -> None:
        for nid in self.topological_order():
            self._execute(nid)

    def _execute(self, nid: int) -> None:
        node = self.nodes[nid]
        node.thread = threading.current_thread().name
        node.start = time.perf_counter()
        try:
            node.fn()
        finally:
            node.end = time.perf_counter()


def dispatch_async(graph: TaskGraph, workers: int = 2) -> TaskGraph:
    """Execute ``graph`` on a thread pool, starting each node as soon as its
    predecessors finish. The first failure stops new work and is re-raised
    once running nodes complete."""
    ts = graph.sorter()
    if workers <= 1:
        graph.run_serial()
        return graph
    failure: BaseException | None = None
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="tirc-worker") as pool:
        running = {}
        while ts.is_active() and failure is None:
            for nid in sorted(ts.get_ready()):
                running[pool.submit(graph._execute, nid)] = nid
            if not running:
                break
            done, _ = wait(running, return_when=FIRST_COMPLETED)
            for fut in done:
                nid = running.pop(fut)
                exc = fut.exception()
                if exc is not None and failure is None:
                    failure = exc
                ts.done(nid)
        for fut in running:
            exc = fut.exception()
            if exc is not None and failure is None:
                failure = exc
    if failure is not None:
        raise failure
    return graph


def overlapping(graph: TaskGraph, kind: str = "dispatch") -> list[tuple[int, int]]:
    """Pairs of nodes of ``kind`` whose execution intervals overlap."""
    ids = [i for i, n in enumerate(graph.nodes) if n.kind == kind]
    pairs = []
    for i in ids:
        for j in ids:
            a, b = graph.nodes[i], graph.nodes[j]
            if i < j and a.start < b.end and b.start < a.end:
                pairs.append((i, j))
    return pairs
