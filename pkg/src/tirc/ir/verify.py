from __future__ import annotations

from dataclasses import dataclass

from ..errors import IncompatibleShapes
from .core import FuncOp, Operation, ProgramModule, SourceLocation
from .ops import OPS, attr_kind_ok, infer_result_types, verify_generic_structure


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "dominance" | "type-mismatch" | "structure" | "signature"
    message: str
    function: str | None = None
    op_index: int | None = None
    location: SourceLocation | None = None

    def __str__(self) -> str:
        where = []
        if self.location is not None:
            where.append(str(self.location))
        if self.function is not None:
            where.append(f"@{self.function}")
        if self.op_index is not None:
            where.append(f"op {self.op_index}")
        prefix = " ".join(where)
        return f"{prefix}: {self.kind}: {self.message}" if prefix else f"{self.kind}: {self.message}"


def verify_module(module: ProgramModule) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    names = [f.name for f in module.functions]
    mains = names.count("main")
    if mains != 1:
        diags.append(Diagnostic("signature", f"expected exactly one @main, found {mains}"))
    for name in sorted({n for n in names if names.count(n) > 1}):
        if name != "main":
            diags.append(Diagnostic("signature", f"duplicate function @{name}"))
    for func in module.functions:
        diags.extend(_verify_func(func))
    return diags


def _verify_func(func: FuncOp) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def report(kind, message, index=None, op=None):
        diags.append(
            Diagnostic(kind, message, func.name, index, op.location if op is not None else None)
        )

    defined = set(func.args)
    if not func.ops or func.ops[-1].opcode != "return":
        report("structure", "body must end in a return")
    for index, op in enumerate(func.ops):
        for pos, v in enumerate(op.operands):
            if v not in defined:
                report("dominance", f"operand #{pos} of {op.opcode} is used before its definition", index, op)
        if op.opcode == "return":
            if index != len(func.ops) - 1:
                report("structure", "return must be the last op", index, op)
            types = [v.type for v in op.operands]
            if types != func.result_types:
                report(
                    "type-mismatch",
                    "returned types ("
                    + ", ".join(map(str, types))
                    + ") do not match the signature ("
                    + ", ".join(map(str, func.result_types))
                    + ")",
                    index,
                    op,
                )
        else:
            _verify_op(op, index, report)
        defined.update(op.results)
    return diags


def _verify_op(op: Operation, index: int, report) -> None:
    opdef = OPS.get(op.opcode)
    if opdef is None:
        report("structure", f"unknown opcode {op.opcode}", index, op)
        return
    for name, kind in opdef.attrs.items():
        if name not in op.attributes:
            report("structure", f"{op.opcode} requires attribute '{name}'", index, op)
            return
        if not attr_kind_ok(kind, op.attributes[name]):
            report("structure", f"attribute '{name}' must be {kind}", index, op)
            return
    for name, value in op.attributes.items():
        kind = opdef.attrs.get(name) or opdef.optional_attrs.get(name)
        if kind is None:
            report("structure", f"unexpected attribute '{name}' on {op.opcode}", index, op)
            return
        if not attr_kind_ok(kind, value):
            report("structure", f"attribute '{name}' must be {kind}", index, op)
            return
    if opdef.num_operands is not None and len(op.operands) != opdef.num_operands:
        report(
            "structure",
            f"{op.opcode} expects {opdef.num_operands} operands, got {len(op.operands)}",
            index,
            op,
        )
        return
    if op.opcode == "linalg.empty" and not op.operands:
        report("structure", "linalg.empty needs at least one operand", index, op)
        return
    if op.opcode != "linalg.generic" and op.regions:
        report("structure", f"{op.opcode} takes no regions", index, op)
        return
    try:
        expected = infer_result_types(op.opcode, [v.type for v in op.operands], op.attributes)
    except IncompatibleShapes as exc:
        report("type-mismatch", str(exc), index, op)
        return
    actual = tuple(op.result_types)
    if expected != actual:
        report(
            "type-mismatch",
            f"{op.opcode} result types ({', '.join(map(str, actual))}) "
            f"differ from inferred ({', '.join(map(str, expected))})",
            index,
            op,
        )
        return
    if op.opcode == "linalg.generic":
        for message in verify_generic_structure(op):
            report("structure", message, index, op)
