"""Dispatch region -> loop-nest kernel."""

from __future__ import annotations

from ..errors import NotSupported
from ..ir.affine import AffineMap, IteratorKind
from ..ir.core import ScalarBody
from ..transforms.dispatch import DispatchRegion, OperandRef, Stage
from .kernel import (
    ACCESS_CODES,
    BODY_OPCODE,
    MAX_KERNEL_REGISTERS,
    Instr,
    KernelBinding,
    KernelConst,
    LoopNestKernel,
    Op,
)


class _Emitter:
    def __init__(self, region: DispatchRegion):
        self.region = region
        self.instrs: list[Instr] = []
        self.next_reg = 0
        self.max_reg = 0
        self.consts: list[KernelConst] = []
        self.ivs: dict[int, int] = {}

    def reg(self) -> int:
        r = self.next_reg
        if r >= MAX_KERNEL_REGISTERS:
            raise NotSupported(f"region {self.region.id} needs more than {MAX_KERNEL_REGISTERS} registers")
        self.next_reg += 1
        self.max_reg = max(self.max_reg, self.next_reg)
        return r

    def emit(self, op: Op, a=0, b=0, c=0, imm=None) -> Instr:
        ins = Instr(op, a, b, c, imm)
        self.instrs.append(ins)
        return ins

    def new(self, op: Op, b=0, c=0, imm=None) -> int:
        r = self.reg()
        self.emit(op, r, b, c, imm)
        return r

    def imm(self, value: int) -> int:
        return self.new(Op.IMM, imm=value)

    def const(self, element, value) -> int:
        k = KernelConst(element, value)
        if k not in self.consts:
            self.consts.append(k)
        return self.new(Op.KCONST, self.consts.index(k))

    # loops: registers allocated inside a loop are released at its END
    def open_loop(self, kind: Op, dim: int, lo: int, hi: int):
        iv = self.reg()
        self.emit(kind, iv, lo, hi)
        self.ivs[dim] = iv
        return self.next_reg - 1

    def close_loop(self, mark: int, dim: int) -> None:
        self.emit(Op.END)
        self.next_reg = mark
        del self.ivs[dim]

    def address(self, amap: AffineMap, sizes) -> int:
        """Row-major linear offset of the element ``amap`` selects (Horner form,
        so the innermost data dim has coefficient 1)."""
        if not amap.results:
            return self.imm(0)
        addr = self.ivs[amap.results[0]]
        for d in amap.results[1:]:
            scaled = self.new(Op.IMUL, addr, sizes[d])
            addr = self.new(Op.IADD, scaled, self.ivs[d])
        return addr

    def read(self, ref: OperandRef, element, sizes, values) -> int:
        if ref.kind == "zero":
            return self.const(element, 0.0 if element.is_float else 0)
        if ref.kind == "value":
            return values[ref.index]
        addr = self.address(ref.amap, sizes)
        return self.new(Op.LOAD, ref.index, addr)

    def body(self, body: ScalarBody, args: list[int]) -> list[int]:
        vals = list(args)
        for sop in body.ops:
            if sop.opcode == "const":
                vals.append(self.const(sop.type, sop.value))
            else:
                a, b = (vals[o] for o in sop.operands)
                vals.append(self.new(BODY_OPCODE[sop.opcode], a, b))
        return [vals[y] for y in body.yields]


def _stage_elements(stage: Stage) -> list:
    return list(stage.body.arg_types)


def lower_dispatch_to_loops(region: DispatchRegion, interchange=None) -> LoopNestKernel:
    """Build the kernel computing one tile of ``region`` per work item.

    Tiled dims run over ``[wid*tile, min(wid*tile + tile, size))``; untiled
    and reduction dims run over their full extent. Parallel loops follow the
    declared iterator order unless ``interchange`` (a permutation of the
    parallel dims) says otherwise; reductions stay in declared order.
    """
    e = _Emitter(region)
    n = region.num_dims
    spec = region.tile_spec
    iters = region.iterator_types
    parallel = [d for d in range(n) if iters[d] is IteratorKind.PARALLEL]
    reductions = [d for d in range(n) if iters[d] is IteratorKind.REDUCTION]

    sizes = [e.new(Op.PUSH, d) for d in range(n)]
    zero = e.imm(0)
    lo, hi = {}, {}
    axis_of = {d: a for a, d in enumerate(spec.grid_mapping)}
    for d in range(n):
        if spec.tile_sizes[d]:
            tile = e.new(Op.PUSH, n + d)
            wid = e.new(Op.WID, axis_of[d])
            start = e.new(Op.IMUL, wid, tile)
            end = e.new(Op.IADD, start, tile)
            lo[d], hi[d] = start, e.new(Op.IMIN, end, sizes[d])
        else:
            lo[d], hi[d] = zero, sizes[d]

    if interchange is not None:
        if sorted(interchange) != parallel:
            raise NotSupported(f"interchange {list(interchange)} is not a permutation of {parallel}")
        if region.memory_accumulate:
            raise NotSupported("interchange needs reductions innermost")
        parallel = list(interchange)

    root = region.stages[0]
    root_elems = _stage_elements(root)
    n_outs = len(root.operands) - root.num_ins
    # Binding slots of root results (memory accumulation reads them back).
    store_of = {s.value: s for s in region.stores}

    if region.memory_accumulate:
        _memory_accumulate(e, region, root, root_elems, sizes, lo, hi, n_outs, store_of)
    else:
        marks = []
        for d in parallel:
            marks.append((e.open_loop(Op.PLOOP, d, lo[d], hi[d]), d))
        values: dict[int, int] = {}
        inits = [
            e.read(root.operands[root.num_ins + k], root_elems[root.num_ins + k], sizes, values)
            for k in range(n_outs)
        ]
        if reductions:
            accs = []
            for k, init in enumerate(inits):
                acc = e.reg()
                e.emit(Op.MOV, acc, init)
                accs.append(acc)
            rmarks = []
            for d in reductions:
                rmarks.append((e.open_loop(Op.RLOOP, d, zero, sizes[d]), d))
            args = [
                e.read(ref, root_elems[i], sizes, values)
                for i, ref in enumerate(root.operands[: root.num_ins])
            ]
            ys = e.body(root.body, args + accs)
            for acc, y in zip(accs, ys):
                e.emit(Op.MOV, acc, y)
            for mark, d in reversed(rmarks):
                e.close_loop(mark, d)
            results = accs
        else:
            args = [
                e.read(ref, root_elems[i], sizes, values)
                for i, ref in enumerate(root.operands[: root.num_ins])
            ]
            results = e.body(root.body, args + inits)
        for vid, r in zip(root.results, results):
            values[vid] = r
        for stage in region.stages[1:]:
            elems = _stage_elements(stage)
            args = [e.read(ref, elems[i], sizes, values) for i, ref in enumerate(stage.operands)]
            for vid, r in zip(stage.results, e.body(stage.body, args)):
                values[vid] = r
        for st in region.stores:
            addr = e.address(st.amap, sizes)
            e.emit(Op.STORE, st.binding, addr, values[st.value])
        for mark, d in reversed(marks):
            e.close_loop(mark, d)

    return LoopNestKernel(
        bindings=tuple(KernelBinding(b.element, ACCESS_CODES[b.access]) for b in region.bindings),
        num_push=region.num_push,
        consts=tuple(e.consts),
        instrs=tuple(e.instrs),
        num_regs=e.max_reg,
        name=f"region{region.id}",
    )


def _memory_accumulate(e, region, root, root_elems, sizes, lo, hi, n_outs, store_of):
    """Reductions interleaved with parallel dims: accumulate in the result
    buffer, after an init pass that writes the initial values."""
    n = region.num_dims
    iters = region.iterator_types
    outs = [store_of[vid] for vid in root.results]

    parallel = [d for d in range(n) if iters[d] is IteratorKind.PARALLEL]
    marks = [(e.open_loop(Op.PLOOP, d, lo[d], hi[d]), d) for d in parallel]
    for k, st in enumerate(outs):
        init = e.read(root.operands[root.num_ins + k], root_elems[root.num_ins + k], sizes, {})
        e.emit(Op.STORE, st.binding, e.address(st.amap, sizes), init)
    for mark, d in reversed(marks):
        e.close_loop(mark, d)

    marks = []
    for d in range(n):
        if iters[d] is IteratorKind.PARALLEL:
            marks.append((e.open_loop(Op.PLOOP, d, lo[d], hi[d]), d))
        else:
            zero = e.imm(0)
            marks.append((e.open_loop(Op.RLOOP, d, zero, sizes[d]), d))
    args = [e.read(ref, root_elems[i], sizes, {}) for i, ref in enumerate(root.operands[: root.num_ins])]
    addrs = [e.address(st.amap, sizes) for st in outs]
    accs = [e.new(Op.LOAD, st.binding, a) for st, a in zip(outs, addrs)]
    ys = e.body(root.body, args + accs)
    for st, a, y in zip(outs, addrs, ys):
        e.emit(Op.STORE, st.binding, a, y)
    for mark, d in reversed(marks):
        e.close_loop(mark, d)
