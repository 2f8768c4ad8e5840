"""Loop-nest kernel IR executed by the device simulator.

A kernel is a flat instruction list with structured loops: ``PLOOP``,
``RLOOP`` and ``VLOOP`` open a loop that runs until the matching ``END``.
All registers live in one file of at most 256 entries; index registers hold
i64 values and element registers hold tensor elements (or 4-wide vectors).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..ir.types import ElementType

MAX_KERNEL_REGISTERS = 256
VECTOR_WIDTH = 4


class Op(enum.IntEnum):
    PUSH = 1  # dst, push index
    WID = 2  # dst, axis
    WCNT = 3  # dst, axis
    IMM = 4  # dst; extension word holds a signed 32-bit value
    IADD = 5
    ISUB = 6
    IMUL = 7
    IMIN = 8
    IDIV = 9
    PLOOP = 10  # iv, lo, hi
    RLOOP = 11
    VLOOP = 12
    END = 13
    KCONST = 14  # dst, constant index
    LOAD = 15  # dst, binding, addr
    STORE = 16  # binding, addr, src
    VLOAD = 17
    VSTORE = 18
    MOV = 19  # dst, src
    ADDF = 20
    SUBF = 21
    MULF = 22
    MAXF = 23
    ADDI = 24
    SUBI = 25
    MULI = 26
    MAXI = 27
    VADDF = 28
    VSUBF = 29
    VMULF = 30
    VMAXF = 31
    VADDI = 32
    VSUBI = 33
    VMULI = 34
    VMAXI = 35


INDEX_BINARY = {Op.IADD, Op.ISUB, Op.IMUL, Op.IMIN, Op.IDIV}
LOOPS = {Op.PLOOP, Op.RLOOP, Op.VLOOP}
SCALAR_ARITH = {
    Op.ADDF: "add", Op.SUBF: "sub", Op.MULF: "mul", Op.MAXF: "max",
    Op.ADDI: "add", Op.SUBI: "sub", Op.MULI: "mul", Op.MAXI: "max",
}
VECTOR_ARITH = {Op(op + 8): kind for op, kind in SCALAR_ARITH.items()}
TO_VECTOR = {Op.LOAD: Op.VLOAD, Op.STORE: Op.VSTORE, **{op: Op(op + 8) for op in SCALAR_ARITH}}
BODY_OPCODE = {
    "addf": Op.ADDF, "subf": Op.SUBF, "mulf": Op.MULF, "maxf": Op.MAXF,
    "addi": Op.ADDI, "subi": Op.SUBI, "muli": Op.MULI, "maxi": Op.MAXI,
}

ACCESS_READ = 1
ACCESS_WRITE = 2
ACCESS_READ_WRITE = 3
ACCESS_CODES = {"read": ACCESS_READ, "write": ACCESS_WRITE, "read-write": ACCESS_READ_WRITE}
ACCESS_NAMES = {v: k for k, v in ACCESS_CODES.items()}


@dataclass(frozen=True)
class Instr:
    op: Op
    a: int = 0
    b: int = 0
    c: int = 0
    imm: int | None = None  # IMM only

    def __str__(self) -> str:
        name = self.op.name.lower()
        if self.op is Op.IMM:
            return f"r{self.a} = imm {self.imm}"
        if self.op is Op.END:
            return "end"
        if self.op in LOOPS:
            return f"{name} r{self.a} in [r{self.b}, r{self.c})"
        if self.op in (Op.STORE, Op.VSTORE):
            return f"{name} b{self.a}[r{self.b}] = r{self.c}"
        if self.op in (Op.LOAD, Op.VLOAD):
            return f"r{self.a} = {name} b{self.b}[r{self.c}]"
        if self.op in (Op.PUSH, Op.WID, Op.WCNT, Op.KCONST):
            return f"r{self.a} = {name} {self.b}"
        if self.op is Op.MOV:
            return f"r{self.a} = mov r{self.b}"
        return f"r{self.a} = {name} r{self.b}, r{self.c}"


@dataclass(frozen=True)
class KernelBinding:
    element: ElementType
    access: int


@dataclass(frozen=True)
class KernelConst:
    element: ElementType
    value: int | float

    def __post_init__(self):
        # Store the value exactly as the element type represents it.
        v = np.array(self.value).astype(self.element.dtype)[()]
        object.__setattr__(self, "value", float(v) if self.element.is_float else int(v))


@dataclass(frozen=True)
class LoopNestKernel:
    bindings: tuple[KernelBinding, ...]
    num_push: int
    consts: tuple[KernelConst, ...]
    instrs: tuple[Instr, ...]
    num_regs: int
    name: str = field(default="kernel", compare=False)

    def listing(self) -> str:
        lines = [f"kernel {self.name} (regs={self.num_regs}, push={self.num_push})"]
        for i, b in enumerate(self.bindings):
            lines.append(f"  binding b{i}: {b.element} {ACCESS_NAMES[b.access]}")
        for i, k in enumerate(self.consts):
            lines.append(f"  const k{i}: {k.element} {k.value}")
        depth = 1
        for ins in self.instrs:
            if ins.op is Op.END:
                depth -= 1
            lines.append("  " * depth + str(ins))
            if ins.op in LOOPS:
                depth += 1
        return "\n".join(lines) + "\n"


def loop_extent(instrs, start: int) -> int:
    """Index of the END matching the loop opened at ``start``."""
    depth = 0
    for idx in range(start, len(instrs)):
        op = instrs[idx].op
        if op in LOOPS:
            depth += 1
        elif op is Op.END:
            depth -= 1
            if depth == 0:
                return idx
    raise ValueError("unterminated loop")


def written_register(ins: Instr) -> int | None:
    if ins.op in (Op.STORE, Op.VSTORE, Op.END):
        return None
    return ins.a


def read_registers(ins: Instr) -> tuple[int, ...]:
    op = ins.op
    if op in (Op.PUSH, Op.WID, Op.WCNT, Op.IMM, Op.KCONST, Op.END):
        return ()
    if op in LOOPS:
        return (ins.b, ins.c)
    if op in (Op.LOAD, Op.VLOAD):
        return (ins.c,)
    if op in (Op.STORE, Op.VSTORE):
        return (ins.b, ins.c)
    if op is Op.MOV:
        return (ins.b,)
    return (ins.b, ins.c)
