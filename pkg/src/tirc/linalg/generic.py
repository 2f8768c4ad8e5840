from __future__ import annotations

from ..ir.affine import AffineMap, IteratorKind
from ..ir.arith import scalar_opcode
from ..ir.core import Operation, ScalarBody, ScalarOp, Value
from ..ir.types import ElementType

PARALLEL = IteratorKind.PARALLEL
REDUCTION = IteratorKind.REDUCTION


class GenericOp:
    """Read-only view of a ``linalg.generic`` operation."""

    __slots__ = ("op",)

    def __init__(self, op: Operation):
        if op.opcode != "linalg.generic":
            raise TypeError(f"{op.opcode} is not linalg.generic")
        self.op = op

    @property
    def num_ins(self) -> int:
        return self.op.attributes["ins"]

    @property
    def iterator_types(self) -> tuple[IteratorKind, ...]:
        return self.op.attributes["iterator_types"]

    @property
    def indexing_maps(self) -> tuple[AffineMap, ...]:
        return self.op.attributes["indexing_maps"]

    @property
    def ins(self) -> list[Value]:
        return self.op.operands[: self.num_ins]

    @property
    def outs(self) -> list[Value]:
        return self.op.operands[self.num_ins :]

    @property
    def input_maps(self) -> tuple[AffineMap, ...]:
        return self.indexing_maps[: self.num_ins]

    @property
    def output_maps(self) -> tuple[AffineMap, ...]:
        return self.indexing_maps[self.num_ins :]

    @property
    def body(self) -> ScalarBody:
        return self.op.regions[0]

    @property
    def num_dims(self) -> int:
        return len(self.iterator_types)

    @property
    def parallel_dims(self) -> list[int]:
        return [d for d, k in enumerate(self.iterator_types) if k is PARALLEL]

    @property
    def reduction_dims(self) -> list[int]:
        return [d for d, k in enumerate(self.iterator_types) if k is REDUCTION]

    @property
    def is_all_parallel(self) -> bool:
        return all(k is PARALLEL for k in self.iterator_types)

    @property
    def reductions_innermost(self) -> bool:
        """True when every reduction dim comes after every parallel dim."""
        seen_reduction = False
        for k in self.iterator_types:
            if k is REDUCTION:
                seen_reduction = True
            elif seen_reduction:
                return False
        return True

    def map_for(self, operand_index: int) -> AffineMap:
        return self.indexing_maps[operand_index]


def make_generic(ins, outs, iterator_types, indexing_maps, body: ScalarBody, location=None) -> Operation:
    ins, outs = list(ins), list(outs)
    return Operation(
        "linalg.generic",
        ins + outs,
        [v.type for v in outs],
        {
            "ins": len(ins),
            "iterator_types": tuple(iterator_types),
            "indexing_maps": tuple(indexing_maps),
        },
        [body],
        location,
    )


class BodyBuilder:
    """Builds a ScalarBody; values are plain indices into the body's value list."""

    def __init__(self, arg_types):
        self.arg_types = tuple(arg_types)
        self.ops: list[ScalarOp] = []

    @property
    def args(self) -> list[int]:
        return list(range(len(self.arg_types)))

    def type_of(self, v: int) -> ElementType:
        n = len(self.arg_types)
        return self.arg_types[v] if v < n else self.ops[v - n].type

    def _push(self, op: ScalarOp) -> int:
        self.ops.append(op)
        return len(self.arg_types) + len(self.ops) - 1

    def binary(self, kind: str, a: int, b: int) -> int:
        elem = self.type_of(a)
        return self._push(ScalarOp(scalar_opcode(kind, elem), (a, b), elem))

    def const(self, element: ElementType, value) -> int:
        value = float(value) if element.is_float else int(value)
        return self._push(ScalarOp("const", (), element, value))

    def build(self, *yields: int) -> ScalarBody:
        return ScalarBody(self.arg_types, tuple(self.ops), tuple(yields))
