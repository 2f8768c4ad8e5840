"""Scalar arithmetic semantics shared by every executor.

f32 uses IEEE round-to-nearest-even with no contraction; integers wrap.
``max`` propagates a NaN in either operand and otherwise prefers the first
operand on ties, so ``max(-0.0, +0.0)`` is ``-0.0``.
"""

from __future__ import annotations

import numpy as np

from .types import ElementType


def add(a, b):
    with np.errstate(all="ignore"):
        return np.add(a, b)


def sub(a, b):
    with np.errstate(all="ignore"):
        return np.subtract(a, b)


def mul(a, b):
    with np.errstate(all="ignore"):
        return np.multiply(a, b)


def maximum(a, b):
    with np.errstate(all="ignore"):
        keep_a = np.greater_equal(a, b) | np.not_equal(a, a)
        out = np.where(keep_a, a, b)
    if out.ndim == 0:
        return out[()]
    return out


BINARY = {"add": add, "sub": sub, "mul": mul, "max": maximum}

# scalar-body opcode -> (binary kind, operates on floats)
SCALAR_OPCODES = {
    "addf": ("add", True),
    "subf": ("sub", True),
    "mulf": ("mul", True),
    "maxf": ("max", True),
    "addi": ("add", False),
    "subi": ("sub", False),
    "muli": ("mul", False),
    "maxi": ("max", False),
}


def scalar_opcode(kind: str, element: ElementType) -> str:
    """Body opcode for a binary ``kind`` on ``element``, e.g. add/f32 -> addf."""
    return kind + ("f" if element.is_float else "i")


def const(element: ElementType, value):
    return element.dtype.type(value)
