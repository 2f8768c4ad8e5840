"""Mid-level dialect: generic ops over iteration spaces."""

from ..ir.affine import AffineMap, IteratorKind
from .evaluate import (
    IterationSpace,
    evaluate_generic,
    resolve_iteration_space,
    run_linalg_module,
)
from .generic import PARALLEL, REDUCTION, BodyBuilder, GenericOp, make_generic
from .lowering import lower_to_linalg

__all__ = [
    "AffineMap",
    "BodyBuilder",
    "GenericOp",
    "IterationSpace",
    "IteratorKind",
    "PARALLEL",
    "REDUCTION",
    "evaluate_generic",
    "lower_to_linalg",
    "make_generic",
    "resolve_iteration_space",
    "run_linalg_module",
]
