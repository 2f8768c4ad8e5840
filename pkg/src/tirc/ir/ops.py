"""Opcode table: arity, attribute schema and result-type inference."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from ..errors import IncompatibleShapes
from .affine import AffineMap, IteratorKind
from .arith import SCALAR_OPCODES
from .core import DenseElements, Operation, ScalarBody
from .types import MAX_RANK, TensorType

INT = "int"
INT_LIST = "int-list"
MAP_LIST = "map-list"
ITER_LIST = "iterator-list"
BLOB = "blob"


@dataclass(frozen=True)
class OpDef:
    opcode: str
    num_operands: int | None  # None = variadic
    num_results: int | None
    infer: Callable
    attrs: dict = field(default_factory=dict)  # name -> kind (required)
    optional_attrs: dict = field(default_factory=dict)


def _dim_conflict(a, b) -> bool:
    return a is not None and b is not None and a != b


def _merge(a, b):
    return a if a is not None else b


def _elementwise(types, attrs):
    a, b = types
    if a != b:
        raise IncompatibleShapes(f"operand types differ: {a} vs {b}")
    return (a,)


def _matmul(types, attrs):
    a, b = types
    if a.rank != 2 or b.rank != 2:
        raise IncompatibleShapes("matmul operands must be 2-D")
    if a.element != b.element:
        raise IncompatibleShapes(f"element types differ: {a.element} vs {b.element}")
    if _dim_conflict(a.shape[1], b.shape[0]):
        raise IncompatibleShapes(f"inner dimensions differ: {a.shape[1]} vs {b.shape[0]}")
    return (TensorType((a.shape[0], b.shape[1]), a.element),)


def _broadcast(types, attrs):
    x, ref = types
    dims = tuple(attrs["dimensions"])
    if len(dims) != x.rank:
        raise IncompatibleShapes("dimensions must list one target dim per input dim")
    if any(not 0 <= d < ref.rank for d in dims) or list(dims) != sorted(set(dims)):
        raise IncompatibleShapes(f"dimensions {list(dims)} must be increasing and < {ref.rank}")
    for src, d in enumerate(dims):
        if _dim_conflict(x.shape[src], ref.shape[d]):
            raise IncompatibleShapes(
                f"input dim {src} ({x.shape[src]}) does not match target dim {d} ({ref.shape[d]})"
            )
    return (TensorType(ref.shape, x.element),)


def _conv2d(types, attrs):
    x, w = types
    if x.rank != 4 or w.rank != 4:
        raise IncompatibleShapes("conv2d expects NHWC input and HWCF filter")
    if x.element != w.element:
        raise IncompatibleShapes("element types differ")
    sh, sw = attrs.get("strides", (1, 1))
    ph, pw = attrs.get("padding", (0, 0))
    if sh <= 0 or sw <= 0 or ph < 0 or pw < 0:
        raise IncompatibleShapes("strides must be positive and padding non-negative")
    if _dim_conflict(x.shape[3], w.shape[2]):
        raise IncompatibleShapes(f"channel mismatch: {x.shape[3]} vs {w.shape[2]}")

    def out(size, k, s, p):
        if size is None or k is None:
            return None
        n = size + 2 * p - k
        if n < 0:
            raise IncompatibleShapes("filter larger than padded input")
        return n // s + 1

    oh = out(x.shape[1], w.shape[0], sh, ph)
    ow = out(x.shape[2], w.shape[1], sw, pw)
    return (TensorType((x.shape[0], oh, ow, w.shape[3]), x.element),)


def _constant(types, attrs):
    value = attrs["value"]
    return (value.type,)


def _reduce_sum(types, attrs):
    (x,) = types
    axis = attrs["axis"]
    if not 0 <= axis < x.rank:
        raise IncompatibleShapes(f"axis {axis} out of range for rank {x.rank}")
    return (TensorType(x.shape[:axis] + x.shape[axis + 1 :], x.element),)


def _transpose(types, attrs):
    (x,) = types
    perm = tuple(attrs["permutation"])
    if sorted(perm) != list(range(x.rank)):
        raise IncompatibleShapes(f"{list(perm)} is not a permutation of rank {x.rank}")
    return (TensorType(tuple(x.shape[p] for p in perm), x.element),)


def _check_groups(groups, rank):
    if any(g <= 0 for g in groups) or sum(groups) != rank:
        raise IncompatibleShapes(f"groups {list(groups)} do not partition rank {rank}")


def _collapse(types, attrs):
    (x,) = types
    groups = tuple(attrs["groups"])
    _check_groups(groups, x.rank)
    shape, pos = [], 0
    for g in groups:
        dims = x.shape[pos : pos + g]
        pos += g
        if any(d is None for d in dims):
            shape.append(None)
        else:
            n = 1
            for d in dims:
                n *= d
            shape.append(n)
    return (TensorType(tuple(shape), x.element),)


def _expand(types, attrs):
    x, ref = types
    groups = tuple(attrs["groups"])
    ref_dims = tuple(attrs["ref_dims"])
    if len(groups) != x.rank:
        raise IncompatibleShapes("expand needs one group per input dim")
    if any(g <= 0 for g in groups) or sum(groups) != len(ref_dims):
        raise IncompatibleShapes("groups do not match ref_dims")
    if sum(groups) > MAX_RANK:
        raise IncompatibleShapes("expanded rank exceeds limit")
    shape, pos = [], 0
    for src, g in enumerate(groups):
        sel = ref_dims[pos : pos + g]
        pos += g
        if sum(1 for r in sel if r == -1) > 1:
            raise IncompatibleShapes("at most one inferred dim per group")
        if any(r < -1 or r >= ref.rank for r in sel):
            raise IncompatibleShapes(f"ref_dims {list(sel)} out of range")
        known = [ref.shape[r] for r in sel if r != -1]
        total = x.shape[src]
        if -1 in sel:
            if total is None or any(k is None for k in known):
                inferred = None
            else:
                prod = 1
                for k in known:
                    prod *= k
                if prod == 0 or total % prod:
                    raise IncompatibleShapes(f"cannot split {total} by {prod}")
                inferred = total // prod
            shape.extend(inferred if r == -1 else ref.shape[r] for r in sel)
        else:
            if total is not None and all(k is not None for k in known):
                prod = 1
                for k in known:
                    prod *= k
                if prod != total:
                    raise IncompatibleShapes(f"group product {prod} != {total}")
            shape.extend(ref.shape[r] for r in sel)
    return (TensorType(tuple(shape), x.element),)


def _generic(types, attrs):
    n_ins = attrs["ins"]
    if not 0 <= n_ins <= len(types) or n_ins == len(types):
        raise IncompatibleShapes("generic needs at least one outs operand")
    return tuple(types[n_ins:])


def _empty(types, attrs):
    dims = tuple(attrs["dims"])
    if len(dims) % 2:
        raise IncompatibleShapes("dims must hold (operand, dim) pairs")
    shape = []
    for i in range(0, len(dims), 2):
        src, axis = dims[i], dims[i + 1]
        if not 0 <= src < len(types) or not 0 <= axis < types[src].rank:
            raise IncompatibleShapes(f"dim source ({src}, {axis}) out of range")
        shape.append(types[src].shape[axis])
    if len(shape) > MAX_RANK:
        raise IncompatibleShapes("rank exceeds limit")
    return (TensorType(tuple(shape), types[0].element),)


OPS: dict[str, OpDef] = {}


def _register(*defs: OpDef):
    for d in defs:
        OPS[d.opcode] = d


_register(
    OpDef("fe.add", 2, 1, _elementwise),
    OpDef("fe.sub", 2, 1, _elementwise),
    OpDef("fe.mul", 2, 1, _elementwise),
    OpDef("fe.max", 2, 1, _elementwise),
    OpDef("fe.broadcast", 2, 1, _broadcast, {"dimensions": INT_LIST}),
    OpDef("fe.matmul", 2, 1, _matmul),
    OpDef("fe.conv2d", 2, 1, _conv2d, {}, {"strides": INT_LIST, "padding": INT_LIST}),
    OpDef("fe.constant", 0, 1, _constant, {"value": BLOB}),
    OpDef("fe.reduce_sum", 1, 1, _reduce_sum, {"axis": INT}),
    OpDef("fe.transpose", 1, 1, _transpose, {"permutation": INT_LIST}),
    OpDef("fe.collapse", 1, 1, _collapse, {"groups": INT_LIST}),
    OpDef("fe.expand", 2, 1, _expand, {"groups": INT_LIST, "ref_dims": INT_LIST}),
    OpDef(
        "linalg.generic",
        None,
        None,
        _generic,
        {"ins": INT, "iterator_types": ITER_LIST, "indexing_maps": MAP_LIST},
    ),
    OpDef("linalg.empty", None, 1, _empty, {"dims": INT_LIST}),
    OpDef("linalg.collapse", 1, 1, _collapse, {"groups": INT_LIST}),
    OpDef("linalg.expand", 2, 1, _expand, {"groups": INT_LIST, "ref_dims": INT_LIST}),
)

FRONTEND_ELEMENTWISE = {"fe.add": "add", "fe.sub": "sub", "fe.mul": "mul", "fe.max": "max"}
RESHAPE_OPS = {"fe.collapse", "fe.expand", "linalg.collapse", "linalg.expand"}


def attr_kind_ok(kind: str, value) -> bool:
    if kind == INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == INT_LIST:
        return isinstance(value, tuple) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        )
    if kind == MAP_LIST:
        return isinstance(value, tuple) and all(isinstance(v, AffineMap) for v in value)
    if kind == ITER_LIST:
        return isinstance(value, tuple) and all(isinstance(v, IteratorKind) for v in value)
    if kind == BLOB:
        return isinstance(value, DenseElements)
    return False


def infer_result_types(opcode: str, operand_types, attributes) -> tuple[TensorType, ...]:
    opdef = OPS.get(opcode)
    if opdef is None:
        raise IncompatibleShapes(f"unknown opcode {opcode}")
    operand_types = tuple(operand_types)
    if opdef.num_operands is not None and len(operand_types) != opdef.num_operands:
        raise IncompatibleShapes(
            f"{opcode} expects {opdef.num_operands} operands, got {len(operand_types)}"
        )
    try:
        return tuple(opdef.infer(operand_types, attributes))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, IncompatibleShapes):
            raise
        raise IncompatibleShapes(f"{opcode}: bad attributes ({exc})") from None


def shape_infer(op: Operation, operand_types=None):
    """Result type of ``op`` given operand types (defaults to the operands' own)."""
    if operand_types is None:
        operand_types = [v.type for v in op.operands]
    types = infer_result_types(op.opcode, operand_types, op.attributes)
    return types[0] if len(types) == 1 else types


def verify_generic_structure(op: Operation) -> list[str]:
    """Structural rules for linalg.generic beyond result-type inference."""
    errors: list[str] = []
    attrs = op.attributes
    n_ins = attrs["ins"]
    iters = attrs["iterator_types"]
    maps = attrs["indexing_maps"]
    n_ops = len(op.operands)
    n_outs = n_ops - n_ins
    if len(maps) != n_ops:
        errors.append(f"expected {n_ops} indexing maps, got {len(maps)}")
        return errors
    for idx, (m, v) in enumerate(zip(maps, op.operands)):
        if m.num_dims != len(iters):
            errors.append(f"map #{idx} has {m.num_dims} dims, iteration space has {len(iters)}")
        elif m.num_results != v.type.rank:
            errors.append(f"map #{idx} has {m.num_results} results for a rank-{v.type.rank} operand")
    if errors:
        return errors
    parallel = [d for d, k in enumerate(iters) if k is IteratorKind.PARALLEL]
    for idx in range(n_ins, n_ops):
        m = maps[idx]
        if any(iters[r] is IteratorKind.REDUCTION for r in m.results):
            errors.append(f"result map #{idx - n_ins} references a reduction dim")
        elif sorted(m.results) != parallel:
            errors.append(f"result map #{idx - n_ins} must be a permutation of the parallel dims")
    extents: dict[int, int] = {}
    for idx, (m, v) in enumerate(zip(maps, op.operands)):
        for pos, d in enumerate(m.results):
            e = v.type.shape[pos]
            if e is None:
                continue
            if d in extents and extents[d] != e:
                errors.append(f"operand #{idx} implies extent {e} for dim {d}, expected {extents[d]}")
            extents.setdefault(d, e)
    covered = {d for m in maps for d in m.results}
    if covered != set(range(len(iters))):
        errors.append("every iteration dim must be accessed by some operand")
    if len(op.regions) != 1:
        errors.append("generic needs exactly one body region")
        return errors
    errors.extend(verify_body(op.regions[0], [v.type.element for v in op.operands], n_outs))
    return errors


def verify_body(body: ScalarBody, arg_elements, n_outs: int) -> list[str]:
    errors: list[str] = []
    if list(body.arg_types) != list(arg_elements):
        errors.append("body argument types must match operand element types")
    n_args = len(body.arg_types)
    for i, sop in enumerate(body.ops):
        here = n_args + i
        if sop.opcode == "const":
            if sop.operands or sop.value is None:
                errors.append(f"body op {i}: malformed const")
            continue
        if sop.opcode not in SCALAR_OPCODES:
            errors.append(f"body op {i}: unknown scalar op {sop.opcode}")
            continue
        _, is_float = SCALAR_OPCODES[sop.opcode]
        if len(sop.operands) != 2 or any(not 0 <= o < here for o in sop.operands):
            errors.append(f"body op {i}: operands must refer to earlier values")
            continue
        if sop.type.is_float != is_float:
            errors.append(f"body op {i}: {sop.opcode} cannot produce {sop.type}")
        if any(body.value_type(o) != sop.type for o in sop.operands):
            errors.append(f"body op {i}: operand types must equal result type")
    if len(body.yields) != n_outs:
        errors.append(f"yield has {len(body.yields)} values, expected {n_outs}")
    else:
        for k, y in enumerate(body.yields):
            if not 0 <= y < body.num_values:
                errors.append(f"yield #{k} refers to an undefined value")
            elif body.value_type(y) != arg_elements[len(arg_elements) - n_outs + k]:
                errors.append(f"yield #{k} type does not match its output")
    return errors
