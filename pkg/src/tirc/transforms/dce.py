from __future__ import annotations

from ..ir.core import FuncOp, ProgramModule
from ..ir.rewrite import FuncRewriter, map_functions


def live_ops(func: FuncOp) -> set[int]:
    """Indices of ops transitively used by the terminator."""
    live_values = set()
    live: set[int] = set()
    for idx in range(len(func.ops) - 1, -1, -1):
        op = func.ops[idx]
        if op.opcode == "return" or any(r in live_values for r in op.results):
            live.add(idx)
            live_values.update(op.operands)
    return live


def _dce_func(func: FuncOp) -> FuncOp:
    live = live_ops(func)
    rw = FuncRewriter(func)
    for idx, op in enumerate(func.ops):
        if idx in live:
            rw.clone(op)
    return rw.new


def dce(module: ProgramModule) -> ProgramModule:
    """Drop every op whose results never reach ``return``."""
    return map_functions(module, _dce_func)
