from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

MAX_RANK = 4

#: Marker stored in a shape for an extent unknown at compile time.
DYNAMIC = None


class ElementType(enum.Enum):
    F32 = "f32"
    I32 = "i32"
    I8 = "i8"

    @property
    def width(self) -> int:
        return _WIDTH[self]

    @property
    def dtype(self) -> np.dtype:
        return _DTYPE[self]

    @property
    def is_float(self) -> bool:
        return self is ElementType.F32

    @property
    def code(self) -> int:
        """Stable integer code used by the binary formats."""
        return _CODE[self]

    @classmethod
    def from_code(cls, code: int) -> ElementType:
        return _FROM_CODE[code]

    @classmethod
    def from_dtype(cls, dtype) -> ElementType:
        dtype = np.dtype(dtype)
        for kind, dt in _DTYPE.items():
            if dt == dtype:
                return kind
        raise ValueError(f"unsupported dtype {dtype}")

    def __str__(self) -> str:
        return self.value


_WIDTH = {ElementType.F32: 4, ElementType.I32: 4, ElementType.I8: 1}
_DTYPE = {
    ElementType.F32: np.dtype("<f4"),
    ElementType.I32: np.dtype("<i4"),
    ElementType.I8: np.dtype("i1"),
}
_CODE = {ElementType.F32: 0, ElementType.I32: 1, ElementType.I8: 2}
_FROM_CODE = {v: k for k, v in _CODE.items()}


def format_dim(extent: int | None) -> str:
    return "?" if extent is None else str(extent)


@dataclass(frozen=True)
class TensorType:
    shape: tuple[int | None, ...]
    element: ElementType

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(self.shape))
        if len(self.shape) > MAX_RANK:
            raise ValueError(f"rank {len(self.shape)} exceeds the limit of {MAX_RANK}")
        for d in self.shape:
            if d is not None and (not isinstance(d, int) or d < 0):
                raise ValueError(f"invalid extent {d!r}")

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def is_static(self) -> bool:
        return all(d is not None for d in self.shape)

    @property
    def num_elements(self) -> int:
        if not self.is_static:
            raise ValueError(f"{self} has dynamic dimensions")
        n = 1
        for d in self.shape:
            n *= d
        return n

    @property
    def dynamic_dims(self) -> list[int]:
        return [i for i, d in enumerate(self.shape) if d is None]

    def with_shape(self, shape) -> TensorType:
        return TensorType(tuple(shape), self.element)

    def accepts(self, shape) -> bool:
        """True if a concrete runtime shape conforms to this type."""
        if len(shape) != self.rank:
            return False
        return all(d is None or d == s for d, s in zip(self.shape, shape))

    def __str__(self) -> str:
        dims = "".join(f"{format_dim(d)}x" for d in self.shape)
        return f"tensor<{dims}{self.element.value}>"
