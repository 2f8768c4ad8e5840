"""SSA tensor-program IR: types, operations, verifier and frontend op set."""

from .affine import AffineMap, IteratorKind
from .builder import Builder, tensor
from .core import (
    DenseElements,
    FuncOp,
    Operation,
    ProgramModule,
    ScalarBody,
    ScalarOp,
    SourceLocation,
    Value,
    module_equal,
)
from .ops import OPS, infer_result_types, shape_infer
from .types import DYNAMIC, MAX_RANK, ElementType, TensorType
from .verify import Diagnostic, verify_module

__all__ = [
    "AffineMap",
    "Builder",
    "DYNAMIC",
    "DenseElements",
    "Diagnostic",
    "ElementType",
    "FuncOp",
    "IteratorKind",
    "MAX_RANK",
    "OPS",
    "Operation",
    "ProgramModule",
    "ScalarBody",
    "ScalarOp",
    "SourceLocation",
    "TensorType",
    "Value",
    "infer_result_types",
    "module_equal",
    "shape_infer",
    "tensor",
    "verify_module",
]
