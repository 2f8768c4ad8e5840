"""Word-level encodings for kernels and host programs.

Every word is 32-bit little-endian. Instruction words are
``[opcode, a, b, c]`` (one byte each, opcode in the low byte); some
instructions are followed by extension words.
"""

from __future__ import annotations

import struct

from ..errors import MalformedBytecode
from ..ir.types import ElementType
from ..transforms import host as H
from .kernel import (
    ACCESS_NAMES,
    INDEX_BINARY,
    LOOPS,
    MAX_KERNEL_REGISTERS,
    SCALAR_ARITH,
    VECTOR_ARITH,
    Instr,
    KernelBinding,
    KernelConst,
    LoopNestKernel,
    Op,
)

KERNEL_HEADER_WORDS = 5


def _word(op: int, a: int = 0, b: int = 0, c: int = 0) -> bytes:
    for x in (op, a, b, c):
        if not 0 <= x <= 0xFF:
            raise ValueError(f"operand {x} does not fit in one byte")
    return bytes((op, a, b, c))


def _u32(x: int) -> bytes:
    return struct.pack("<I", x)


def _i32(x: int) -> bytes:
    return struct.pack("<i", x)


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = bytes(data)
        self.pos = 0
        self.what = what
        if len(self.data) % 4:
            raise MalformedBytecode(f"{what}: length {len(self.data)} is not a whole number of words")

    @property
    def remaining_words(self) -> int:
        return (len(self.data) - self.pos) // 4

    def raw(self) -> bytes:
        if self.pos + 4 > len(self.data):
            raise MalformedBytecode(f"{self.what}: truncated at byte {self.pos}")
        w = self.data[self.pos : self.pos + 4]
        self.pos += 4
        return w

    def u32(self) -> int:
        return struct.unpack("<I", self.raw())[0]

    def i32(self) -> int:
        return struct.unpack("<i", self.raw())[0]

    def fields(self) -> tuple[int, int, int, int]:
        return tuple(self.raw())


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def _const_bits(k: KernelConst) -> int:
    if k.element.is_float:
        return struct.unpack("<I", struct.pack("<f", k.value))[0]
    return int(k.value) & 0xFFFFFFFFFFFFFFFF


def _const_value(element: ElementType, bits: int):
    if element.is_float:
        if bits >> 32:
            raise MalformedBytecode("f32 constant with high bits set")
        return struct.unpack("<f", struct.pack("<I", bits))[0]
    if bits >= 1 << 63:
        bits -= 1 << 64
    return bits


def serialize_kernel(kernel: LoopNestKernel) -> bytes:
    """Header, binding words, constant table, then the instruction stream."""
    body = bytearray()
    for ins in kernel.instrs:
        body += _word(int(ins.op), ins.a, ins.b, ins.c)
        if ins.op is Op.IMM:
            body += _i32(ins.imm)
    out = bytearray()
    for x in (kernel.num_regs, len(kernel.bindings), kernel.num_push, len(kernel.consts), len(body) // 4):
        out += _u32(x)
    for b in kernel.bindings:
        out += _word(b.element.code, b.access)
    for k in kernel.consts:
        bits = _const_bits(k)
        out += _word(k.element.code) + _u32(bits & 0xFFFFFFFF) + _u32(bits >> 32)
    out += body
    return bytes(out)


def _element(code: int) -> ElementType:
    try:
        return ElementType.from_code(code)
    except (KeyError, ValueError):
        raise MalformedBytecode(f"unknown element type code {code}") from None


def deserialize_kernel(data: bytes) -> LoopNestKernel:
    r = _Reader(data, "kernel")
    num_regs, num_bindings, num_push, num_consts, num_words = (r.u32() for _ in range(KERNEL_HEADER_WORDS))
    if num_regs > MAX_KERNEL_REGISTERS:
        raise MalformedBytecode(f"kernel declares {num_regs} registers (max {MAX_KERNEL_REGISTERS})")
    if num_bindings > 255 or num_consts > 255 or num_push > 255:
        raise MalformedBytecode("kernel table sizes exceed one byte")
    if r.remaining_words != num_bindings + 3 * num_consts + num_words:
        raise MalformedBytecode(
            f"kernel: expected {num_bindings + 3 * num_consts + num_words} words after header, "
            f"found {r.remaining_words}"
        )
    bindings = []
    for _ in range(num_bindings):
        code, access, z1, z2 = r.fields()
        if access not in ACCESS_NAMES or z1 or z2:
            raise MalformedBytecode(f"bad binding word ({code}, {access}, {z1}, {z2})")
        bindings.append(KernelBinding(_element(code), access))
    consts = []
    for _ in range(num_consts):
        code, z0, z1, z2 = r.fields()
        if z0 or z1 or z2:
            raise MalformedBytecode("bad constant word")
        element = _element(code)
        bits = r.u32() | (r.u32() << 32)
        consts.append(KernelConst(element, _const_value(element, bits)))
    instrs = []
    end = r.pos + 4 * num_words
    depth = 0
    while r.pos < end:
        opcode, a, b, c = r.fields()
        try:
            op = Op(opcode)
        except ValueError:
            raise MalformedBytecode(f"unknown kernel opcode {opcode}") from None
        imm = r.i32() if op is Op.IMM else None
        ins = Instr(op, a, b, c, imm)
        _check_kernel_instr(ins, num_regs, num_bindings, num_push, num_consts)
        if op in LOOPS:
            depth += 1
        elif op is Op.END:
            depth -= 1
            if depth < 0:
                raise MalformedBytecode("END without an open loop")
        instrs.append(ins)
    if r.pos != end:
        raise MalformedBytecode("instruction stream overruns its declared length")
    if depth:
        raise MalformedBytecode("unterminated loop")
    return LoopNestKernel(tuple(bindings), num_push, tuple(consts), tuple(instrs), num_regs)


def _check_kernel_instr(ins: Instr, num_regs, num_bindings, num_push, num_consts) -> None:
    op = ins.op

    def regs(*rs):
        for x in rs:
            if x >= num_regs:
                raise MalformedBytecode(f"{op.name}: register r{x} exceeds register count {num_regs}")

    def zero(*xs):
        if any(xs):
            raise MalformedBytecode(f"{op.name}: unused operand fields must be zero")

    if op is Op.PUSH:
        regs(ins.a)
        zero(ins.c)
        if ins.b >= num_push:
            raise MalformedBytecode(f"PUSH index {ins.b} out of range")
    elif op in (Op.WID, Op.WCNT):
        regs(ins.a)
        zero(ins.c)
        if ins.b > 2:
            raise MalformedBytecode(f"{op.name}: axis {ins.b} out of range")
    elif op is Op.IMM:
        regs(ins.a)
        zero(ins.b, ins.c)
    elif op is Op.END:
        zero(ins.a, ins.b, ins.c)
    elif op is Op.KCONST:
        regs(ins.a)
        zero(ins.c)
        if ins.b >= num_consts:
            raise MalformedBytecode(f"KCONST index {ins.b} out of range")
    elif op in (Op.LOAD, Op.VLOAD):
        regs(ins.a, ins.c)
        if ins.b >= num_bindings:
            raise MalformedBytecode(f"{op.name}: binding {ins.b} out of range")
    elif op in (Op.STORE, Op.VSTORE):
        regs(ins.b, ins.c)
        if ins.a >= num_bindings:
            raise MalformedBytecode(f"{op.name}: binding {ins.a} out of range")
    elif op is Op.MOV:
        regs(ins.a, ins.b)
        zero(ins.c)
    elif op in LOOPS or op in INDEX_BINARY or op in SCALAR_ARITH or op in VECTOR_ARITH:
        regs(ins.a, ins.b, ins.c)


# ---------------------------------------------------------------------------
# host programs
# ---------------------------------------------------------------------------

HOST_CONST_I64 = 1
HOST_DIM = 2
HOST_MUL = 3
HOST_CEILDIV = 4
HOST_ALLOC_TRANSIENT = 5
HOST_BIND_CONST = 6
HOST_DISPATCH = 7
HOST_RETURN = 8

HOST_OPCODE_NAMES = {
    HOST_CONST_I64: "CONST_I64",
    HOST_DIM: "DIM",
    HOST_MUL: "MUL",
    HOST_CEILDIV: "CEILDIV",
    HOST_ALLOC_TRANSIENT: "ALLOC_TRANSIENT",
    HOST_BIND_CONST: "BIND_CONST",
    HOST_DISPATCH: "DISPATCH",
    HOST_RETURN: "RETURN",
}


def _packed(values) -> bytes:
    """Byte-sized values packed four per word, zero padded."""
    values = list(values)
    out = bytearray()
    for i in range(0, len(values), 4):
        chunk = values[i : i + 4] + [0] * (4 - len(values[i : i + 4]))
        out += _word(*chunk)
    return bytes(out)


def _unpack(r: _Reader, count: int) -> list[int]:
    vals: list[int] = []
    while len(vals) < count:
        vals.extend(r.fields())
    tail = vals[count:]
    if any(tail):
        raise MalformedBytecode("nonzero padding in packed operand words")
    return vals[:count]


def encode_host_op(op) -> bytes:
    if isinstance(op, H.ConstI64):
        bits = op.value & 0xFFFFFFFFFFFFFFFF
        return _word(HOST_CONST_I64, op.dst) + _u32(bits & 0xFFFFFFFF) + _u32(bits >> 32)
    if isinstance(op, H.Dim):
        return _word(HOST_DIM, op.dst, op.arg, op.axis)
    if isinstance(op, H.Mul):
        return _word(HOST_MUL, op.dst, op.lhs, op.rhs)
    if isinstance(op, H.CeilDiv):
        return _word(HOST_CEILDIV, op.dst, op.lhs, op.rhs)
    if isinstance(op, H.AllocTransient):
        return _word(HOST_ALLOC_TRANSIENT, op.dst, op.size, op.lifetime)
    if isinstance(op, H.BindConst):
        return _word(HOST_BIND_CONST, op.dst) + _u32(op.index)
    if isinstance(op, H.Dispatch):
        return (
            _word(HOST_DISPATCH, len(op.bindings), len(op.push))
            + _u32(op.region)
            + _word(*op.grid, 0)
            + _packed(op.bindings)
            + _packed(op.push)
        )
    if isinstance(op, H.Return):
        out = _word(HOST_RETURN, len(op.values))
        for rv in op.values:
            out += _word(rv.buffer, len(rv.dims)) + _packed(rv.dims)
        return out
    raise TypeError(f"not a host op: {op!r}")


def generate_host_bytecode(program: H.HostProgram) -> bytes:
    """Two header words (argument count, op count) then the ops."""
    out = bytearray(_u32(program.num_args) + _u32(len(program.ops)))
    for op in program.ops:
        out += encode_host_op(op)
    return bytes(out)


def decode_host_op(r: _Reader):
    opcode, a, b, c = r.fields()
    if opcode == HOST_CONST_I64:
        if b or c:
            raise MalformedBytecode("CONST_I64: unused fields must be zero")
        bits = r.u32() | (r.u32() << 32)
        if bits >= 1 << 63:
            bits -= 1 << 64
        return H.ConstI64(a, bits)
    if opcode == HOST_DIM:
        return H.Dim(a, b, c)
    if opcode == HOST_MUL:
        return H.Mul(a, b, c)
    if opcode == HOST_CEILDIV:
        return H.CeilDiv(a, b, c)
    if opcode == HOST_ALLOC_TRANSIENT:
        if c not in (H.LIFETIME_TRANSIENT, H.LIFETIME_RESULT):
            raise MalformedBytecode(f"ALLOC_TRANSIENT: unknown lifetime {c}")
        return H.AllocTransient(a, b, c)
    if opcode == HOST_BIND_CONST:
        if b or c:
            raise MalformedBytecode("BIND_CONST: unused fields must be zero")
        return H.BindConst(a, r.u32())
    if opcode == HOST_DISPATCH:
        if c:
            raise MalformedBytecode("DISPATCH: unused field must be zero")
        region = r.u32()
        gx, gy, gz, pad = r.fields()
        if pad:
            raise MalformedBytecode("DISPATCH: grid padding must be zero")
        bindings = _unpack(r, a)
        push = _unpack(r, b)
        return H.Dispatch(region, (gx, gy, gz), tuple(bindings), tuple(push))
    if opcode == HOST_RETURN:
        if b or c:
            raise MalformedBytecode("RETURN: unused fields must be zero")
        values = []
        for _ in range(a):
            buf, rank, z1, z2 = r.fields()
            if z1 or z2:
                raise MalformedBytecode("RETURN: unused fields must be zero")
            values.append(H.ReturnValue(buf, tuple(_unpack(r, rank))))
        return H.Return(tuple(values))
    raise MalformedBytecode(f"unknown host opcode {opcode}")


def decode_host_bytecode(data: bytes) -> H.HostProgram:
    r = _Reader(data, "host program")
    num_args = r.u32()
    num_ops = r.u32()
    if num_args > H.MAX_REGISTERS:
        raise MalformedBytecode(f"{num_args} arguments exceed the register file")
    program = H.HostProgram(num_args)
    for _ in range(num_ops):
        program.ops.append(decode_host_op(r))
    if r.remaining_words:
        raise MalformedBytecode(f"{r.remaining_words} trailing words after the last op")
    try:
        H.verify_host_program(program)
    except H.HostProgramError as exc:
        raise MalformedBytecode(str(exc)) from None
    return program


def host_op_words(data: bytes):
    """Yield (word offset, host op) pairs; used by the interpreter and by
    tooling that counts instructions."""
    r = _Reader(data, "host program")
    r.u32()
    num_ops = r.u32()
    for _ in range(num_ops):
        start = r.pos // 4
        yield start, decode_host_op(r)
