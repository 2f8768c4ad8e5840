from __future__ import annotations

import enum
from dataclasses import dataclass

DIM_NAMES = ("i", "j", "k", "l")


def dim_name(d: int) -> str:
    return DIM_NAMES[d] if d < len(DIM_NAMES) else f"d{d}"


class IteratorKind(enum.Enum):
    PARALLEL = "parallel"
    REDUCTION = "reduction"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class AffineMap:
    """Projected permutation: every result is a single iteration dimension."""

    num_dims: int
    results: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "results", tuple(self.results))
        if self.num_dims < 0:
            raise ValueError("negative dimension count")
        for r in self.results:
            if not 0 <= r < self.num_dims:
                raise ValueError(f"map result d{r} out of range for {self.num_dims} dims")

    @classmethod
    def identity(cls, n: int) -> AffineMap:
        return cls(n, tuple(range(n)))

    @property
    def num_results(self) -> int:
        return len(self.results)

    @property
    def is_permutation(self) -> bool:
        return len(self.results) == self.num_dims and len(set(self.results)) == self.num_dims

    @property
    def is_identity(self) -> bool:
        return self.results == tuple(range(self.num_dims))

    def apply(self, point):
        return tuple(point[r] for r in self.results)

    def inverse(self) -> AffineMap:
        if not self.is_permutation:
            raise ValueError(f"{self} is not invertible")
        inv = [0] * self.num_dims
        for pos, d in enumerate(self.results):
            inv[d] = pos
        return AffineMap(self.num_dims, tuple(inv))

    def remap(self, dim_map, num_dims: int) -> AffineMap:
        """Rename domain dims: dim ``d`` becomes ``dim_map[d]`` in a domain of ``num_dims``."""
        return AffineMap(num_dims, tuple(dim_map[r] for r in self.results))

    def __str__(self) -> str:
        dims = ", ".join(dim_name(d) for d in range(self.num_dims))
        res = ", ".join(dim_name(r) for r in self.results)
        return f"affine_map<({dims}) -> ({res})>"
