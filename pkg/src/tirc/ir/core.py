"""SSA program representation shared by the frontend and linalg levels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import ElementType, TensorType


@dataclass(frozen=True)
class SourceLocation:
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class Value:
    """An SSA value: a function argument or one result of an operation."""

    __slots__ = ("type", "owner", "index")

    def __init__(self, type: TensorType, owner=None, index: int = 0):
        self.type = type
        self.owner = owner
        self.index = index

    @property
    def defining_op(self) -> Operation | None:
        return self.owner if isinstance(self.owner, Operation) else None

    @property
    def is_argument(self) -> bool:
        return isinstance(self.owner, FuncOp)

    def __repr__(self) -> str:
        where = "arg" if self.is_argument else getattr(self.owner, "opcode", "?")
        return f"<Value {where}#{self.index} {self.type}>"


class DenseElements:
    """Constant payload attribute; compares by dtype, shape and raw bytes."""

    __slots__ = ("array",)

    def __init__(self, array):
        arr = np.ascontiguousarray(array)
        ElementType.from_dtype(arr.dtype)
        arr.setflags(write=False)
        self.array = arr

    @property
    def element(self) -> ElementType:
        return ElementType.from_dtype(self.array.dtype)

    @property
    def type(self) -> TensorType:
        return TensorType(self.array.shape, self.element)

    def _key(self):
        return (self.array.dtype.str, self.array.shape, self.array.tobytes())

    def __eq__(self, other):
        return isinstance(other, DenseElements) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"DenseElements({self.type})"


@dataclass(frozen=True)
class ScalarOp:
    """One op of a generic body. Operands index the body's value list
    (block arguments first, then op results in order)."""

    opcode: str
    operands: tuple[int, ...]
    type: ElementType
    value: int | float | None = None


@dataclass(frozen=True)
class ScalarBody:
    arg_types: tuple[ElementType, ...]
    ops: tuple[ScalarOp, ...]
    yields: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "arg_types", tuple(self.arg_types))
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "yields", tuple(self.yields))

    @property
    def num_values(self) -> int:
        return len(self.arg_types) + len(self.ops)

    def value_type(self, index: int) -> ElementType:
        if index < len(self.arg_types):
            return self.arg_types[index]
        return self.ops[index - len(self.arg_types)].type

    def used_args(self) -> set[int]:
        used = {o for op in self.ops for o in op.operands}
        used.update(self.yields)
        return {i for i in used if i < len(self.arg_types)}


class Operation:
    __slots__ = ("opcode", "operands", "results", "attributes", "regions", "location")

    def __init__(
        self,
        opcode: str,
        operands=(),
        result_types=(),
        attributes=None,
        regions=(),
        location: SourceLocation | None = None,
    ):
        self.opcode = opcode
        self.operands: list[Value] = list(operands)
        self.results: list[Value] = [Value(t, self, i) for i, t in enumerate(result_types)]
        self.attributes: dict = dict(attributes or {})
        self.regions: list[ScalarBody] = list(regions)
        self.location = location

    @property
    def result(self) -> Value:
        if len(self.results) != 1:
            raise ValueError(f"{self.opcode} has {len(self.results)} results")
        return self.results[0]

    @property
    def result_types(self) -> list[TensorType]:
        return [r.type for r in self.results]

    @property
    def dialect(self) -> str:
        return self.opcode.split(".", 1)[0] if "." in self.opcode else ""

    def __repr__(self) -> str:
        return f"<Operation {self.opcode}>"


class FuncOp:
    def __init__(self, name: str, arg_types, result_types, location: SourceLocation | None = None):
        self.name = name
        self.args: list[Value] = [Value(t, self, i) for i, t in enumerate(arg_types)]
        self.result_types: list[TensorType] = list(result_types)
        self.ops: list[Operation] = []
        self.location = location

    @property
    def arg_types(self) -> list[TensorType]:
        return [a.type for a in self.args]

    def append(self, op: Operation) -> Operation:
        self.ops.append(op)
        return op

    def ret(self, *values: Value) -> Operation:
        return self.append(Operation("return", values))

    @property
    def terminator(self) -> Operation | None:
        if self.ops and self.ops[-1].opcode == "return":
            return self.ops[-1]
        return None

    @property
    def returned(self) -> list[Value]:
        term = self.terminator
        return list(term.operands) if term is not None else []

    def value_ids(self) -> dict[Value, int]:
        """Dense per-function numbering: arguments first, then results in order."""
        ids: dict[Value, int] = {}
        for a in self.args:
            ids[a] = len(ids)
        for op in self.ops:
            for r in op.results:
                ids[r] = len(ids)
        return ids

    def __repr__(self) -> str:
        return f"<FuncOp @{self.name}>"


class ProgramModule:
    def __init__(self, functions=()):
        self.functions: list[FuncOp] = list(functions)

    def get(self, name: str) -> FuncOp | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    @property
    def main(self) -> FuncOp:
        f = self.get("main")
        if f is None:
            raise KeyError("module has no @main")
        return f

    def constants(self) -> list[DenseElements]:
        return [
            op.attributes["value"]
            for f in self.functions
            for op in f.ops
            if op.opcode == "fe.constant"
        ]

    def __repr__(self) -> str:
        return f"<ProgramModule {[f.name for f in self.functions]}>"


def _attr_key(value):
    if isinstance(value, (list, tuple)):
        return tuple(_attr_key(v) for v in value)
    return value


def op_signature(op: Operation, ids: dict) -> tuple:
    """Hashable description of an op independent of value identity."""
    return (
        op.opcode,
        tuple(ids[v] for v in op.operands),
        tuple(sorted((k, _attr_key(v)) for k, v in op.attributes.items())),
        tuple(op.regions),
        tuple(op.result_types),
    )


def module_equal(a: ProgramModule, b: ProgramModule) -> bool:
    """Structural equality modulo value numbering."""
    if len(a.functions) != len(b.functions):
        return False
    for fa, fb in zip(a.functions, b.functions):
        if fa.name != fb.name or fa.arg_types != fb.arg_types:
            return False
        if fa.result_types != fb.result_types or len(fa.ops) != len(fb.ops):
            return False
        ia, ib = fa.value_ids(), fb.value_ids()
        for oa, ob in zip(fa.ops, fb.ops):
            try:
                if op_signature(oa, ia) != op_signature(ob, ib):
                    return False
            except KeyError:
                return False
    return True
