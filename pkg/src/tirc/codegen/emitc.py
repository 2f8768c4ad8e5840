"""Host program -> C source calling the tiny_vm runtime API, and back."""

from __future__ import annotations

import re

from ..errors import MalformedBytecode
from ..transforms import host as H

API_FUNCTIONS = (
    "tiny_vm_const_i64",
    "tiny_vm_dim",
    "tiny_vm_mul",
    "tiny_vm_ceildiv",
    "tiny_vm_alloc_transient",
    "tiny_vm_bind_constant",
    "tiny_vm_dispatch",
    "tiny_vm_return",
)
API_CALL = re.compile(r"\b(" + "|".join(API_FUNCTIONS) + r")\(")


def _ilist(ctype: str, items) -> str:
    items = list(items)
    if not items:
        return "NULL"
    return f"(const {ctype}[]){{{', '.join(items)}}}"


def _r(regs) -> list[str]:
    return [f"r[{x}]" for x in regs]


def _c_call(op) -> str:
    if isinstance(op, H.ConstI64):
        return f"tiny_vm_const_i64(ctx, &r[{op.dst}], INT64_C({op.value}))"
    if isinstance(op, H.Dim):
        return f"tiny_vm_dim(ctx, &r[{op.dst}], {op.arg}u, {op.axis}u)"
    if isinstance(op, H.Mul):
        return f"tiny_vm_mul(ctx, &r[{op.dst}], r[{op.lhs}], r[{op.rhs}])"
    if isinstance(op, H.CeilDiv):
        return f"tiny_vm_ceildiv(ctx, &r[{op.dst}], r[{op.lhs}], r[{op.rhs}])"
    if isinstance(op, H.AllocTransient):
        return f"tiny_vm_alloc_transient(ctx, {op.dst}u, r[{op.size}], {op.lifetime}u)"
    if isinstance(op, H.BindConst):
        return f"tiny_vm_bind_constant(ctx, {op.dst}u, {op.index}u)"
    if isinstance(op, H.Dispatch):
        grid = _ilist("int64_t", _r(op.grid))
        binds = _ilist("uint32_t", [f"{b}u" for b in op.bindings])
        push = _ilist("int64_t", _r(op.push))
        return (
            f"tiny_vm_dispatch(ctx, {op.region}u, {grid}, "
            f"{len(op.bindings)}u, {binds}, {len(op.push)}u, {push})"
        )
    if isinstance(op, H.Return):
        bufs = _ilist("uint32_t", [f"{rv.buffer}u" for rv in op.values])
        ranks = _ilist("uint32_t", [f"{len(rv.dims)}u" for rv in op.values])
        dims = _ilist("int64_t", _r(d for rv in op.values for d in rv.dims))
        return f"tiny_vm_return(ctx, {len(op.values)}u, {bufs}, {ranks}, {dims})"
    raise TypeError(f"not a host op: {op!r}")


def emit_host_c(program: H.HostProgram, module_name: str) -> str:
    """One C statement per host op; the function returns the status of the
    first failing call, or the result of ``tiny_vm_return``."""
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", module_name):
        raise ValueError(f"{module_name!r} is not a C identifier")
    lines = [
        f"/* host program for module {module_name}; arguments: {program.num_args} */",
        '#include "tiny_vm.h"',
        "",
        f"int {module_name}_run(tiny_vm_ctx* ctx) {{",
    ]
    if program.num_regs:
        lines.append(f"  int64_t r[{program.num_regs}];")
    for op in program.ops:
        if isinstance(op, H.Return):
            if op.values:
                lines.append(f"  return {_c_call(op)};")
            else:
                lines.append("  return 0;")
        else:
            lines.append(f"  TINY_VM_TRY({_c_call(op)});")
    lines.append("}")
    return "\n".join(lines) + "\n"


def count_api_calls(source: str) -> int:
    return len(API_CALL.findall(source))


# ---------------------------------------------------------------------------
# reading emitted C back (the direct-call linker consumes this)
# ---------------------------------------------------------------------------

_HEADER = re.compile(r"/\* host program for module (\w+); arguments: (\d+) \*/")
_STMT = re.compile(r"^\s*(?:TINY_VM_TRY\((.*)\);|return (.*);)\s*$")
_CALL = re.compile(r"^(tiny_vm_\w+)\(ctx, (.*)\)$")


def _split_args(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "({":
            depth += 1
        elif ch in ")}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur).strip())
    return parts


def _scalar(text: str) -> int:
    m = re.fullmatch(r"INT64_C\((-?\d+)\)|(-?\d+)u?", text)
    if m is None:
        raise ValueError(f"expected an integer, got {text!r}")
    return int(m[1] if m[1] is not None else m[2])


def _reg(text: str) -> int:
    m = re.fullmatch(r"&?r\[(\d+)\]", text)
    if m is None:
        raise ValueError(f"expected a register, got {text!r}")
    return int(m[1])


def _list(text: str, item) -> list[int]:
    if text == "NULL":
        return []
    m = re.fullmatch(r"\(const \w+\[\]\)\{(.*)\}", text)
    if m is None:
        raise ValueError(f"expected an array literal, got {text!r}")
    return [item(x) for x in _split_args(m[1])]


def _parse_call(name: str, args: list[str]):
    if name == "tiny_vm_const_i64":
        return H.ConstI64(_reg(args[0]), _scalar(args[1]))
    if name == "tiny_vm_dim":
        return H.Dim(_reg(args[0]), _scalar(args[1]), _scalar(args[2]))
    if name == "tiny_vm_mul":
        return H.Mul(_reg(args[0]), _reg(args[1]), _reg(args[2]))
    if name == "tiny_vm_ceildiv":
        return H.CeilDiv(_reg(args[0]), _reg(args[1]), _reg(args[2]))
    if name == "tiny_vm_alloc_transient":
        return H.AllocTransient(_scalar(args[0]), _reg(args[1]), _scalar(args[2]))
    if name == "tiny_vm_bind_constant":
        return H.BindConst(_scalar(args[0]), _scalar(args[1]))
    if name == "tiny_vm_dispatch":
        grid = _list(args[1], _reg)
        binds = _list(args[3], _scalar)
        push = _list(args[5], _reg)
        if len(grid) != 3 or len(binds) != _scalar(args[2]) or len(push) != _scalar(args[4]):
            raise ValueError("dispatch argument counts disagree")
        return H.Dispatch(_scalar(args[0]), tuple(grid), tuple(binds), tuple(push))
    if name == "tiny_vm_return":
        n = _scalar(args[0])
        bufs = _list(args[1], _scalar)
        ranks = _list(args[2], _scalar)
        dims = _list(args[3], _reg)
        if len(bufs) != n or len(ranks) != n or sum(ranks) != len(dims):
            raise ValueError("return argument counts disagree")
        values, pos = [], 0
        for b, rank in zip(bufs, ranks):
            values.append(H.ReturnValue(b, tuple(dims[pos : pos + rank])))
            pos += rank
        return H.Return(tuple(values))
    raise ValueError(f"unknown API function {name}")


def parse_host_c(source: str) -> tuple[str, H.HostProgram]:
    """Recover (module name, host program) from text made by emit_host_c."""
    m = _HEADER.search(source)
    if m is None:
        raise MalformedBytecode("C source lacks the host program header")
    name, program = m[1], H.HostProgram(int(m[2]))
    for lineno, line in enumerate(source.splitlines(), 1):
        sm = _STMT.match(line)
        if sm is None:
            continue
        text = sm[1] if sm[1] is not None else sm[2]
        if text == "0":
            program.ops.append(H.Return(()))
            continue
        cm = _CALL.match(text)
        try:
            if cm is None:
                raise ValueError(f"unrecognised statement {text!r}")
            program.ops.append(_parse_call(cm[1], _split_args(cm[2])))
        except (ValueError, IndexError) as exc:
            raise MalformedBytecode(f"C source line {lineno}: {exc}") from None
    try:
        H.verify_host_program(program)
    except H.HostProgramError as exc:
        raise MalformedBytecode(str(exc)) from None
    return name, program
