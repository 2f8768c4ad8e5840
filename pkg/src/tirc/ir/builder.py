from __future__ import annotations

import numpy as np

from .core import DenseElements, FuncOp, Operation, ProgramModule, Value
from .ops import infer_result_types
from .types import ElementType, TensorType


def tensor(shape, element="f32") -> TensorType:
    """Shorthand: ``tensor((None, 3))`` is ``tensor<?x3xf32>``."""
    if not isinstance(element, ElementType):
        element = ElementType(element)
    return TensorType(tuple(shape), element)


class Builder:
    """Appends frontend ops to a function, inferring result types."""

    def __init__(self, func: FuncOp):
        self.func = func

    @classmethod
    def main(cls, *arg_types: TensorType) -> Builder:
        return cls(FuncOp("main", arg_types, []))

    @property
    def args(self) -> list[Value]:
        return self.func.args

    def op(self, opcode: str, *operands: Value, regions=(), **attributes) -> Value:
        attrs = {k: tuple(v) if isinstance(v, list) else v for k, v in attributes.items()}
        types = infer_result_types(opcode, [v.type for v in operands], attrs)
        op = self.func.append(Operation(opcode, operands, types, attrs, regions))
        return op.results[0] if len(op.results) == 1 else op.results

    def add(self, a, b):
        return self.op("fe.add", a, b)

    def sub(self, a, b):
        return self.op("fe.sub", a, b)

    def mul(self, a, b):
        return self.op("fe.mul", a, b)

    def max(self, a, b):
        return self.op("fe.max", a, b)

    def matmul(self, a, b):
        return self.op("fe.matmul", a, b)

    def broadcast(self, x, ref, dimensions):
        return self.op("fe.broadcast", x, ref, dimensions=tuple(dimensions))

    def conv2d(self, x, w, strides=(1, 1), padding=(0, 0)):
        return self.op("fe.conv2d", x, w, strides=tuple(strides), padding=tuple(padding))

    def constant(self, array, element=None):
        arr = np.asarray(array, dtype=element.dtype if element else None)
        return self.op("fe.constant", value=DenseElements(arr))

    def reduce_sum(self, x, axis: int):
        return self.op("fe.reduce_sum", x, axis=axis)

    def transpose(self, x, permutation):
        return self.op("fe.transpose", x, permutation=tuple(permutation))

    def collapse(self, x, groups):
        return self.op("fe.collapse", x, groups=tuple(groups))

    def expand(self, x, ref, groups, ref_dims):
        return self.op("fe.expand", x, ref, groups=tuple(groups), ref_dims=tuple(ref_dims))

    def ret(self, *values: Value) -> ProgramModule:
        self.func.result_types = [v.type for v in values]
        self.func.ret(*values)
        return ProgramModule([self.func])
