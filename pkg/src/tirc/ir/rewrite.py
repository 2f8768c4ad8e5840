from __future__ import annotations

from .core import FuncOp, Operation, ProgramModule, Value
from .ops import infer_result_types


class FuncRewriter:
    """Rebuilds a function op by op, tracking the old-to-new value mapping."""

    def __init__(self, func: FuncOp):
        self.old = func
        self.new = FuncOp(func.name, func.arg_types, func.result_types, func.location)
        self.values: dict[Value, Value] = dict(zip(func.args, self.new.args))

    def lookup(self, v: Value) -> Value:
        return self.values[v]

    def bind(self, old: Value, new: Value) -> None:
        self.values[old] = new

    def clone(self, op: Operation) -> Operation:
        new = Operation(
            op.opcode,
            [self.values[v] for v in op.operands],
            op.result_types,
            op.attributes,
            op.regions,
            op.location,
        )
        self.new.append(new)
        for old, fresh in zip(op.results, new.results):
            self.values[old] = fresh
        return new

    def emit(self, opcode: str, operands, attributes=None, regions=(), location=None) -> Operation:
        attributes = dict(attributes or {})
        types = infer_result_types(opcode, [v.type for v in operands], attributes)
        op = Operation(opcode, operands, types, attributes, regions, location)
        self.new.append(op)
        return op

    def append(self, op: Operation) -> Operation:
        return self.new.append(op)


def map_functions(module: ProgramModule, fn) -> ProgramModule:
    return ProgramModule([fn(f) for f in module.functions])


def clone_module(module: ProgramModule) -> ProgramModule:
    def copy(func):
        rw = FuncRewriter(func)
        for op in func.ops:
            rw.clone(op)
        return rw.new

    return map_functions(module, copy)


def users(func: FuncOp) -> dict[Value, list[Operation]]:
    table: dict[Value, list[Operation]] = {}
    for op in func.ops:
        for v in op.operands:
            table.setdefault(v, []).append(op)
    return table
