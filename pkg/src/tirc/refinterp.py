"""Reference interpreter for frontend programs.

Runs ``@main`` directly on numpy arrays with no lowering. Sums are formed
by explicit loops in ascending index order using the shared scalar
semantics, so results are bit-identical to compiled code that accumulates
in the same order. Convolutions of any filter size, stride and padding are
evaluated directly.
"""

from __future__ import annotations

import numpy as np

from .errors import NotSupported, ShapeMismatch
from .ir import arith
from .ir.core import Operation, ProgramModule


def _same_shape(op: Operation, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op.opcode}: operand shapes {a.shape} and {b.shape} differ")


def _elementwise(fn):
    def run(op, a, b):
        _same_shape(op, a, b)
        return fn(a, b)

    return run


def _matmul(op, a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: inner extents {a.shape[1]} and {b.shape[0]} differ")
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=a.dtype)
    for k in range(a.shape[1]):
        acc = arith.add(acc, arith.mul(a[:, k : k + 1], b[k : k + 1, :]))
    return acc


def _broadcast(op, x, ref):
    dims = list(op.attributes["dimensions"])
    for src, d in enumerate(dims):
        if x.shape[src] != ref.shape[d]:
            raise ShapeMismatch(
                f"broadcast: input dim {src} has extent {x.shape[src]}, target dim {d} has {ref.shape[d]}"
            )
    placed = [1] * ref.ndim
    for src, d in enumerate(dims):
        placed[d] = x.shape[src]
    return np.broadcast_to(x.reshape(placed), ref.shape).copy()


def _reduce_sum(op, x):
    axis = op.attributes["axis"]
    acc = np.zeros(x.shape[:axis] + x.shape[axis + 1 :], dtype=x.dtype)
    for i in range(x.shape[axis]):
        acc = arith.add(acc, np.take(x, i, axis=axis))
    return acc


def _conv2d(op, x, w):
    sh, sw = op.attributes.get("strides", (1, 1))
    ph, pw = op.attributes.get("padding", (0, 0))
    n, h, wd, c = x.shape
    kh, kw, wc, f = w.shape
    if c != wc:
        raise ShapeMismatch(f"conv2d: input has {c} channels, filter expects {wc}")
    if h + 2 * ph < kh or wd + 2 * pw < kw:
        raise ShapeMismatch("conv2d: filter larger than padded input")
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    xp = np.zeros((n, h + 2 * ph, wd + 2 * pw, c), dtype=x.dtype)
    xp[:, ph : ph + h, pw : pw + wd, :] = x
    acc = np.zeros((n, oh, ow, f), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            window = xp[:, i : i + sh * (oh - 1) + 1 : sh, j : j + sw * (ow - 1) + 1 : sw, :]
            for ch in range(c):
                acc = arith.add(acc, arith.mul(window[..., ch : ch + 1], w[i, j, ch]))
    return acc


def _collapse(op, x):
    shape, pos = [], 0
    for g in op.attributes["groups"]:
        shape.append(int(np.prod(x.shape[pos : pos + g], dtype=np.int64)))
        pos += g
    return x.reshape(shape)


def _expand(op, x, ref):
    groups = op.attributes["groups"]
    ref_dims = op.attributes["ref_dims"]
    shape, pos = [], 0
    for src, g in enumerate(groups):
        sel = ref_dims[pos : pos + g]
        pos += g
        known = 1
        for r in sel:
            if r != -1:
                known *= ref.shape[r]
        for r in sel:
            if r != -1:
                shape.append(ref.shape[r])
            elif known == 0 or x.shape[src] % known:
                raise ShapeMismatch(f"expand: extent {x.shape[src]} is not divisible by {known}")
            else:
                shape.append(x.shape[src] // known)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeMismatch(f"expand: cannot view {x.shape} as {tuple(shape)}")
    return x.reshape(shape)


_HANDLERS = {
    "fe.add": _elementwise(arith.add),
    "fe.sub": _elementwise(arith.sub),
    "fe.mul": _elementwise(arith.mul),
    "fe.max": _elementwise(arith.maximum),
    "fe.matmul": _matmul,
    "fe.broadcast": _broadcast,
    "fe.reduce_sum": _reduce_sum,
    "fe.conv2d": _conv2d,
    "fe.transpose": lambda op, x: np.ascontiguousarray(np.transpose(x, op.attributes["permutation"])),
    "fe.collapse": _collapse,
    "fe.expand": _expand,
    "fe.constant": lambda op: op.attributes["value"].array,
}


def interpret(module: ProgramModule, inputs) -> list[np.ndarray]:
    """Evaluate ``@main`` on ``inputs``. Raises ShapeMismatch when runtime
    extents violate the program's shape rules."""
    func = module.main
    if len(inputs) != len(func.args):
        raise ShapeMismatch(f"expected {len(func.args)} inputs, got {len(inputs)}")
    env = {}
    for i, (arg, x) in enumerate(zip(func.args, inputs)):
        x = np.asarray(x)
        if x.dtype != arg.type.element.dtype:
            raise ShapeMismatch(f"input {i}: expected {arg.type.element}, got {x.dtype}")
        if not arg.type.accepts(x.shape):
            raise ShapeMismatch(f"input {i}: shape {x.shape} does not match {arg.type}")
        env[arg] = x
    for op in func.ops:
        if op.opcode == "return":
            return [np.ascontiguousarray(env[v]).copy() for v in op.operands]
        handler = _HANDLERS.get(op.opcode)
        if handler is None:
            raise NotSupported(f"the reference interpreter does not run {op.opcode}")
        env[op.result] = handler(op, *[env[v] for v in op.operands])
    raise NotSupported("@main has no return")
