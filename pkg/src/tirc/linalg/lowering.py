"""Frontend tensor ops -> linalg.generic."""

from __future__ import annotations

from ..errors import NotSupported
from ..ir.affine import AffineMap
from ..ir.core import FuncOp, Operation, ProgramModule, Value
from ..ir.ops import FRONTEND_ELEMENTWISE
from ..ir.rewrite import FuncRewriter, map_functions
from .generic import PARALLEL, REDUCTION, BodyBuilder, make_generic


def _empty(rw: FuncRewriter, sources: list[Value], pairs, location=None) -> Value:
    """Zero-initialised tensor whose dims are copied from ``sources``.

    The element type is taken from ``sources[0]``.
    """
    flat = tuple(x for pair in pairs for x in pair)
    return rw.emit("linalg.empty", sources, {"dims": flat}, location=location).result


def _same_shape_init(rw, x: Value, location) -> Value:
    return _empty(rw, [x], [(0, d) for d in range(x.type.rank)], location)


def _generic(rw, ins, outs, iters, maps, body, location) -> Value:
    return rw.append(make_generic(ins, outs, iters, maps, body, location)).result


def _lower_elementwise(rw, op: Operation, operands):
    a, b = operands
    rank, elem = a.type.rank, a.type.element
    init = _same_shape_init(rw, a, op.location)
    bb = BodyBuilder([elem] * 3)
    y = bb.binary(FRONTEND_ELEMENTWISE[op.opcode], 0, 1)
    ident = AffineMap.identity(rank)
    return _generic(rw, [a, b], [init], [PARALLEL] * rank, [ident] * 3, bb.build(y), op.location)


def _lower_broadcast(rw, op, operands):
    x, ref = operands
    rank = ref.type.rank
    init = _empty(rw, [x, ref], [(1, d) for d in range(rank)], op.location)
    bb = BodyBuilder([x.type.element] * 2)
    in_map = AffineMap(rank, op.attributes["dimensions"])
    return _generic(
        rw, [x], [init], [PARALLEL] * rank, [in_map, AffineMap.identity(rank)], bb.build(0), op.location
    )


def _lower_matmul(rw, op, operands):
    a, b = operands
    elem = a.type.element
    init = _empty(rw, [a, b], [(0, 0), (1, 1)], op.location)
    bb = BodyBuilder([elem] * 3)
    prod = bb.binary("mul", 0, 1)
    acc = bb.binary("add", 2, prod)
    maps = [AffineMap(3, (0, 2)), AffineMap(3, (2, 1)), AffineMap(3, (0, 1))]
    iters = [PARALLEL, PARALLEL, REDUCTION]
    return _generic(rw, [a, b], [init], iters, maps, bb.build(acc), op.location)


def _lower_reduce_sum(rw, op, operands):
    (x,) = operands
    axis, rank = op.attributes["axis"], x.type.rank
    kept = [d for d in range(rank) if d != axis]
    init = _empty(rw, [x], [(0, d) for d in kept], op.location)
    # Kept dims become iteration dims 0..rank-2 in order; the reduced dim is last.
    in_results = []
    for d in range(rank):
        if d == axis:
            in_results.append(rank - 1)
        else:
            in_results.append(d if d < axis else d - 1)
    maps = [AffineMap(rank, tuple(in_results)), AffineMap(rank, tuple(range(rank - 1)))]
    iters = [PARALLEL] * (rank - 1) + [REDUCTION]
    bb = BodyBuilder([x.type.element] * 2)
    acc = bb.binary("add", 1, 0)
    return _generic(rw, [x], [init], iters, maps, bb.build(acc), op.location)


def _lower_transpose(rw, op, operands):
    (x,) = operands
    perm = op.attributes["permutation"]
    rank = x.type.rank
    init = _empty(rw, [x], [(0, p) for p in perm], op.location)
    inv = [0] * rank
    for pos, p in enumerate(perm):
        inv[p] = pos
    maps = [AffineMap(rank, tuple(inv)), AffineMap.identity(rank)]
    bb = BodyBuilder([x.type.element] * 2)
    return _generic(rw, [x], [init], [PARALLEL] * rank, maps, bb.build(0), op.location)


def _lower_reshape(rw, op, operands):
    opcode = "linalg." + op.opcode.split(".", 1)[1]
    return rw.emit(opcode, operands, op.attributes, location=op.location).result


def _lower_conv(rw, op, operands):
    raise NotSupported(
        "only 1x1, stride-1, unpadded conv2d can be compiled "
        f"(got strides={list(op.attributes.get('strides', (1, 1)))}, "
        f"padding={list(op.attributes.get('padding', (0, 0)))}, "
        f"filter={op.operands[1].type})"
    )


_LOWERINGS = {
    **{name: _lower_elementwise for name in FRONTEND_ELEMENTWISE},
    "fe.broadcast": _lower_broadcast,
    "fe.matmul": _lower_matmul,
    "fe.reduce_sum": _lower_reduce_sum,
    "fe.transpose": _lower_transpose,
    "fe.collapse": _lower_reshape,
    "fe.expand": _lower_reshape,
    "fe.conv2d": _lower_conv,
}


def _lower_func(func: FuncOp) -> FuncOp:
    rw = FuncRewriter(func)
    for op in func.ops:
        lower = _LOWERINGS.get(op.opcode)
        if lower is None:
            rw.clone(op)
            continue
        rw.bind(op.result, lower(rw, op, [rw.lookup(v) for v in op.operands]))
    return rw.new


def lower_to_linalg(module: ProgramModule) -> ProgramModule:
    """Lower every frontend tensor op to ``linalg.generic``.

    1x1 convolutions are rewritten to matmul first; any other conv2d raises
    NotSupported. Constants stay as ``fe.constant``.
    """
    from ..transforms.conv import rewrite_conv1x1_to_matmul

    return map_functions(rewrite_conv1x1_to_matmul(module), _lower_func)
