from __future__ import annotations

from ..ir.core import FuncOp, ProgramModule, op_signature
from ..ir.rewrite import FuncRewriter, map_functions


def _cse_func(func: FuncOp) -> FuncOp:
    rw = FuncRewriter(func)
    ids: dict = {v: i for i, v in enumerate(rw.new.args)}
    seen: dict[tuple, list] = {}
    for op in func.ops:
        if op.opcode == "return":
            rw.clone(op)
            continue
        # Operands are keyed through the replacement mapping, so chains of
        # duplicates collapse in a single forward pass.
        key = op_signature(op, {v: ids[rw.lookup(v)] for v in op.operands})
        hit = seen.get(key)
        if hit is not None:
            for old, new in zip(op.results, hit):
                rw.bind(old, new)
            continue
        new = rw.clone(op)
        for r in new.results:
            ids[r] = len(ids)
        seen[key] = new.results
    return rw.new


def cse(module: ProgramModule) -> ProgramModule:
    """Merge ops with the same opcode, operands, attributes and body."""
    return map_functions(module, _cse_func)
