from __future__ import annotations

from ..ir.core import FuncOp, Operation, ProgramModule
from ..ir.rewrite import FuncRewriter, map_functions


def is_pointwise_conv(op: Operation) -> bool:
    """1x1 filter, unit stride, no padding."""
    if op.opcode != "fe.conv2d":
        return False
    kh, kw = op.operands[1].type.shape[:2]
    return (
        kh == 1
        and kw == 1
        and tuple(op.attributes.get("strides", (1, 1))) == (1, 1)
        and tuple(op.attributes.get("padding", (0, 0))) == (0, 0)
    )


def _rewrite_func(func: FuncOp) -> FuncOp:
    rw = FuncRewriter(func)
    for op in func.ops:
        if not is_pointwise_conv(op):
            rw.clone(op)
            continue
        x, w = (rw.lookup(v) for v in op.operands)
        loc = op.location
        # NHWC -> (N*H*W) x C and 1x1xCxF -> C x F; both are row-major no-ops.
        rows = rw.emit("fe.collapse", [x], {"groups": (3, 1)}, location=loc).result
        filt = rw.emit("fe.collapse", [w], {"groups": (3, 1)}, location=loc).result
        mm = rw.emit("fe.matmul", [rows, filt], location=loc).result
        out = rw.emit(
            "fe.expand",
            [mm, x],
            {"groups": (3, 1), "ref_dims": (0, 1, 2, -1)},
            location=loc,
        ).result
        rw.bind(op.result, out)
    return rw.new


def rewrite_conv1x1_to_matmul(module: ProgramModule) -> ProgramModule:
    """Replace pointwise convolutions with collapse -> matmul -> expand.

    Convolutions that are not 1x1/stride-1/unpadded are left untouched.
    """
    return map_functions(module, _rewrite_func)
