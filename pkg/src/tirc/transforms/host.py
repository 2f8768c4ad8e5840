"""Host-side program: straight-line code over scalar and buffer registers.

Scalar registers hold i64 values (``%rN``); buffer registers hold buffers
(``%bN``). Function arguments are preloaded into buffer registers
``0..num_args-1``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import IRSyntaxError, TircError

MAX_REGISTERS = 256

LIFETIME_TRANSIENT = 0
LIFETIME_RESULT = 1


@dataclass(frozen=True)
class ConstI64:
    dst: int
    value: int


@dataclass(frozen=True)
class Dim:
    """Extent of ``axis`` of the argument in buffer register ``arg``."""

    dst: int
    arg: int
    axis: int


@dataclass(frozen=True)
class Mul:
    dst: int
    lhs: int
    rhs: int


@dataclass(frozen=True)
class CeilDiv:
    dst: int
    lhs: int
    rhs: int


@dataclass(frozen=True)
class AllocTransient:
    dst: int
    size: int  # scalar register holding the byte count
    lifetime: int = LIFETIME_TRANSIENT


@dataclass(frozen=True)
class BindConst:
    dst: int
    index: int


@dataclass(frozen=True)
class Dispatch:
    region: int
    grid: tuple[int, int, int]  # scalar registers for x, y, z counts
    bindings: tuple[int, ...]  # buffer registers
    push: tuple[int, ...]  # scalar registers


@dataclass(frozen=True)
class ReturnValue:
    buffer: int
    dims: tuple[int, ...]  # scalar registers


@dataclass(frozen=True)
class Return:
    values: tuple[ReturnValue, ...] = ()


HostOp = ConstI64 | Dim | Mul | CeilDiv | AllocTransient | BindConst | Dispatch | Return


@dataclass
class HostProgram:
    num_args: int
    ops: list = field(default_factory=list)

    @property
    def num_regs(self) -> int:
        return _count(self.ops, scalar=True)

    @property
    def num_buffers(self) -> int:
        return max(self.num_args, _count(self.ops, scalar=False))

    @property
    def dispatches(self) -> list[Dispatch]:
        return [op for op in self.ops if isinstance(op, Dispatch)]


def _count(ops, scalar: bool) -> int:
    top = -1
    for op in ops:
        s_reads, s_writes, b_reads, b_writes = register_effects(op)
        regs = s_reads + s_writes if scalar else b_reads + b_writes
        if regs:
            top = max(top, max(regs))
    return top + 1


def register_effects(op) -> tuple[list[int], list[int], list[int], list[int]]:
    """(scalar reads, scalar writes, buffer reads, buffer writes) of one op."""
    if isinstance(op, ConstI64):
        return [], [op.dst], [], []
    if isinstance(op, Dim):
        return [], [op.dst], [op.arg], []
    if isinstance(op, (Mul, CeilDiv)):
        return [op.lhs, op.rhs], [op.dst], [], []
    if isinstance(op, AllocTransient):
        return [op.size], [], [], [op.dst]
    if isinstance(op, BindConst):
        return [], [], [], [op.dst]
    if isinstance(op, Dispatch):
        return list(op.grid) + list(op.push), [], list(op.bindings), []
    if isinstance(op, Return):
        dims = [d for rv in op.values for d in rv.dims]
        return dims, [], [rv.buffer for rv in op.values], []
    raise TypeError(f"not a host op: {op!r}")


class HostProgramError(TircError):
    pass


def verify_host_program(program: HostProgram, num_regions: int | None = None) -> None:
    """Linear scan: every register is written before it is read, and the
    program ends with its only return."""
    scalars: set[int] = set()
    buffers: set[int] = set(range(program.num_args))
    returns = 0
    for idx, op in enumerate(program.ops):
        s_reads, s_writes, b_reads, b_writes = register_effects(op)
        for r in s_reads:
            if r not in scalars:
                raise HostProgramError(f"op {idx}: %r{r} read before written")
        for b in b_reads:
            if b not in buffers:
                raise HostProgramError(f"op {idx}: %b{b} read before written")
        for r in s_writes + b_writes:
            if not 0 <= r < MAX_REGISTERS:
                raise HostProgramError(f"op {idx}: register {r} out of range")
        if isinstance(op, Dim) and op.arg >= program.num_args:
            raise HostProgramError(f"op {idx}: dim of %b{op.arg}, which is not an argument")
        if isinstance(op, Dispatch) and num_regions is not None and not 0 <= op.region < num_regions:
            raise HostProgramError(f"op {idx}: unknown region {op.region}")
        scalars.update(s_writes)
        buffers.update(b_writes)
        if isinstance(op, Return):
            returns += 1
            if idx != len(program.ops) - 1:
                raise HostProgramError("return must be the last op")
    if returns != 1:
        raise HostProgramError(f"expected exactly one return, found {returns}")


# ---------------------------------------------------------------------------
# text form
# ---------------------------------------------------------------------------


def _regs(prefix: str, regs) -> str:
    return ", ".join(f"%{prefix}{r}" for r in regs)


def format_host_op(op) -> str:
    if isinstance(op, ConstI64):
        return f"%r{op.dst} = vm.const_i64 {op.value}"
    if isinstance(op, Dim):
        return f"%r{op.dst} = vm.dim %b{op.arg}, {op.axis}"
    if isinstance(op, Mul):
        return f"%r{op.dst} = vm.mul %r{op.lhs}, %r{op.rhs}"
    if isinstance(op, CeilDiv):
        return f"%r{op.dst} = vm.ceildiv %r{op.lhs}, %r{op.rhs}"
    if isinstance(op, AllocTransient):
        return f"%b{op.dst} = vm.alloc_transient %r{op.size} {{lifetime = {op.lifetime}}}"
    if isinstance(op, BindConst):
        return f"%b{op.dst} = vm.bind_constant {op.index}"
    if isinstance(op, Dispatch):
        return (
            f"vm.dispatch @region{op.region} grid({_regs('r', op.grid)}) "
            f"bindings({_regs('b', op.bindings)}) push({_regs('r', op.push)})"
        )
    if isinstance(op, Return):
        parts = [f"%b{rv.buffer}[{_regs('r', rv.dims)}]" for rv in op.values]
        return "vm.return " + ", ".join(parts) if parts else "vm.return"
    raise TypeError(f"not a host op: {op!r}")


_HEADER = re.compile(r"vm\.program\(args = (\d+), regs = (\d+)\) \{$")
_PATTERNS = [
    (re.compile(r"%r(\d+) = vm\.const_i64 (-?\d+)$"), lambda m: ConstI64(int(m[1]), int(m[2]))),
    (re.compile(r"%r(\d+) = vm\.dim %b(\d+), (\d+)$"), lambda m: Dim(int(m[1]), int(m[2]), int(m[3]))),
    (re.compile(r"%r(\d+) = vm\.mul %r(\d+), %r(\d+)$"), lambda m: Mul(int(m[1]), int(m[2]), int(m[3]))),
    (
        re.compile(r"%r(\d+) = vm\.ceildiv %r(\d+), %r(\d+)$"),
        lambda m: CeilDiv(int(m[1]), int(m[2]), int(m[3])),
    ),
    (
        re.compile(r"%b(\d+) = vm\.alloc_transient %r(\d+) \{lifetime = (\d+)\}$"),
        lambda m: AllocTransient(int(m[1]), int(m[2]), int(m[3])),
    ),
    (re.compile(r"%b(\d+) = vm\.bind_constant (\d+)$"), lambda m: BindConst(int(m[1]), int(m[2]))),
    (
        re.compile(r"vm\.dispatch @region(\d+) grid\(([^)]*)\) bindings\(([^)]*)\) push\(([^)]*)\)$"),
        lambda m: Dispatch(
            int(m[1]), tuple(_reg_list(m[2], "r")), tuple(_reg_list(m[3], "b")), tuple(_reg_list(m[4], "r"))
        ),
    ),
    (re.compile(r"vm\.return(.*)$"), lambda m: Return(_return_values(m[1]))),
]


def _reg_list(text: str, prefix: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part.startswith("%" + prefix) or not part[2:].isdigit():
            raise ValueError(f"bad register {part!r}")
        out.append(int(part[2:]))
    return out


def _return_values(text: str) -> tuple[ReturnValue, ...]:
    values = []
    for m in re.finditer(r"%b(\d+)\[([^\]]*)\]", text):
        values.append(ReturnValue(int(m[1]), tuple(_reg_list(m[2], "r"))))
    rest = re.sub(r"%b(\d+)\[([^\]]*)\]", "", text).replace(",", "").strip()
    if rest:
        raise ValueError(f"unexpected {rest!r} in return")
    return tuple(values)


def parse_host_text(text: str) -> HostProgram:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [(n, ln) for n, ln in enumerate(lines, 1) if ln]
    if not lines:
        raise IRSyntaxError("empty host program", 1, 1)
    n, first = lines[0]
    m = _HEADER.match(first)
    if m is None:
        raise IRSyntaxError("expected 'vm.program(args = N, regs = N) {'", n, 1)
    program = HostProgram(int(m[1]))
    if lines[-1][1] != "}":
        raise IRSyntaxError("expected '}'", lines[-1][0], 1)
    for n, line in lines[1:-1]:
        for pattern, make in _PATTERNS:
            m = pattern.match(line)
            if m is None:
                continue
            try:
                program.ops.append(make(m))
            except ValueError as exc:
                raise IRSyntaxError(str(exc), n, 1) from None
            break
        else:
            raise IRSyntaxError(f"unknown host op: {line}", n, 1)
    return program
