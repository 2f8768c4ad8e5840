"""Rewrite innermost stride-1 parallel loops into 4-wide vector form."""

from __future__ import annotations

from dataclasses import replace

from .kernel import (
    INDEX_BINARY,
    LOOPS,
    MAX_KERNEL_REGISTERS,
    TO_VECTOR,
    VECTOR_WIDTH,
    Instr,
    LoopNestKernel,
    Op,
    loop_extent,
    written_register,
)

_UNKNOWN = None


def _stride_one(instrs, start: int, end: int, known_imm: dict[int, int]) -> bool:
    """True when every memory access in ``instrs[start+1:end]`` has address
    coefficient exactly 1 in the loop's induction variable."""
    iv = instrs[start].a
    coef: dict[int, int | None] = {iv: 1}
    imm = dict(known_imm)

    def c(r):
        return coef.get(r, 0)

    saw_memory = False
    for ins in instrs[start + 1 : end]:
        op = ins.op
        if op in LOOPS:
            return False
        if op is Op.IMM:
            coef[ins.a] = 0
            imm[ins.a] = ins.imm
        elif op in (Op.PUSH, Op.WID, Op.WCNT):
            coef[ins.a] = 0
            imm.pop(ins.a, None)
        elif op in INDEX_BINARY:
            ca, cb = c(ins.b), c(ins.c)
            imm.pop(ins.a, None)
            if ca is _UNKNOWN or cb is _UNKNOWN:
                coef[ins.a] = _UNKNOWN
            elif op is Op.IADD:
                coef[ins.a] = ca + cb
            elif op is Op.ISUB:
                coef[ins.a] = ca - cb
            elif op is Op.IMUL:
                if ca == 0 and cb == 0:
                    coef[ins.a] = 0
                elif ca == 0 and ins.b in imm:
                    coef[ins.a] = cb * imm[ins.b]
                elif cb == 0 and ins.c in imm:
                    coef[ins.a] = ca * imm[ins.c]
                else:
                    coef[ins.a] = _UNKNOWN
            else:
                coef[ins.a] = 0 if ca == 0 and cb == 0 else _UNKNOWN
        elif op in (Op.LOAD, Op.STORE):
            saw_memory = True
            addr = ins.c if op is Op.LOAD else ins.b
            if c(addr) != 1:
                return False
            if op is Op.LOAD:
                coef[ins.a] = _UNKNOWN
        elif op in (Op.VLOAD, Op.VSTORE) or op in TO_VECTOR.values():
            return False
        else:
            w = written_register(ins)
            if w is not None:
                coef[w] = _UNKNOWN
                imm.pop(w, None)
    return saw_memory


def _vector_body(body):
    out = []
    for ins in body:
        vop = TO_VECTOR.get(ins.op)
        out.append(replace(ins, op=vop) if vop is not None else ins)
    return out


def vectorize(kernel: LoopNestKernel, width: int = VECTOR_WIDTH) -> LoopNestKernel:
    """Split each innermost stride-1 ``PLOOP`` into a ``VLOOP`` of full
    vectors and a scalar ``PLOOP`` for the remainder.

    Loops containing other loops, and loops with any access whose stride is
    not provably 1, are left alone. Returns the kernel unchanged when nothing
    applies or when the extra registers would not fit.
    """
    if width != VECTOR_WIDTH:
        raise ValueError(f"only width {VECTOR_WIDTH} is supported")
    instrs = list(kernel.instrs)
    imms = {ins.a: ins.imm for ins in instrs if ins.op is Op.IMM}
    # A register is a known immediate only if IMM is its sole writer.
    writers: dict[int, int] = {}
    for ins in instrs:
        w = written_register(ins)
        if w is not None:
            writers[w] = writers.get(w, 0) + 1
    imms = {r: v for r, v in imms.items() if writers[r] == 1}

    out: list[Instr] = []
    next_reg = kernel.num_regs
    changed = False
    idx = 0
    while idx < len(instrs):
        ins = instrs[idx]
        if ins.op is Op.PLOOP:
            end = loop_extent(instrs, idx)
            if _stride_one(instrs, idx, end, imms) and next_reg + 5 <= MAX_KERNEL_REGISTERS:
                body = instrs[idx + 1 : end]
                n, four, q, q4, vend = range(next_reg, next_reg + 5)
                next_reg += 5
                out += [
                    Instr(Op.ISUB, n, ins.c, ins.b),
                    Instr(Op.IMM, four, imm=width),
                    Instr(Op.IDIV, q, n, four),
                    Instr(Op.IMUL, q4, q, four),
                    Instr(Op.IADD, vend, ins.b, q4),
                    Instr(Op.VLOOP, ins.a, ins.b, vend),
                    *_vector_body(body),
                    Instr(Op.END),
                    Instr(Op.PLOOP, ins.a, vend, ins.c),
                    *body,
                    Instr(Op.END),
                ]
                changed = True
                idx = end + 1
                continue
        out.append(ins)
        idx += 1
    if not changed:
        return kernel
    return replace(kernel, instrs=tuple(out), num_regs=next_reg)
