"""Producer/consumer fusion of all-parallel generic ops."""

from __future__ import annotations

from ..ir.affine import AffineMap
from ..ir.core import FuncOp, Operation, ProgramModule, ScalarBody, ScalarOp, Value
from ..ir.rewrite import FuncRewriter, map_functions
from ..linalg.generic import GenericOp, make_generic
from .dce import dce

# Fusing along every path of a diamond-shaped DAG duplicates producer bodies;
# these caps keep kernels inside the register budget.
MAX_FUSED_BODY_OPS = 96
MAX_FUSED_INPUTS = 24


def fusable_producer(value: Value) -> GenericOp | None:
    op = value.defining_op
    if op is None or op.opcode != "linalg.generic":
        return None
    g = GenericOp(op)
    if not g.is_all_parallel or len(op.results) != 1:
        return None
    if not g.output_maps[0].is_permutation:
        return None
    return g


def can_fuse(producer: GenericOp, consumer: GenericOp, operand: int) -> bool:
    """Legality from iterator kinds and indexing maps alone."""
    if not consumer.is_all_parallel or not producer.is_all_parallel:
        return False
    if operand >= consumer.num_ins:
        return False
    if len(producer.op.results) != 1 or not producer.output_maps[0].is_permutation:
        return False
    return consumer.map_for(operand).num_results == producer.output_maps[0].num_results


def producer_dim_map(producer: GenericOp, consumer_map: AffineMap) -> list[int]:
    """For each producer dim, the consumer dim that indexes it.

    The producer writes data position ``p`` from its dim ``R[p]`` and the
    consumer reads data position ``p`` with its dim ``M[p]``, so producer dim
    ``R[p]`` becomes consumer dim ``M[p]``.
    """
    result_map = producer.output_maps[0]
    phi = [0] * producer.num_dims
    for pos, d in enumerate(result_map.results):
        phi[d] = consumer_map.results[pos]
    return phi


class _Inputs:
    """Deduplicated (value, map) input list of the fused op."""

    def __init__(self):
        self.items: list[tuple[Value, AffineMap]] = []

    def add(self, value: Value, amap: AffineMap) -> int:
        key = (value, amap)
        for idx, item in enumerate(self.items):
            if item == key:
                return idx
        self.items.append(key)
        return len(self.items) - 1


def _inline(body: ScalarBody, arg_values: list[int], ops: list[ScalarOp], base: int) -> list[int]:
    """Append ``body``'s ops to ``ops`` with args bound to ``arg_values``.

    ``base`` is the value index of ``ops[0]``. Returns the yielded indices.
    """
    vals = list(arg_values)
    for sop in body.ops:
        ops.append(ScalarOp(sop.opcode, tuple(vals[o] for o in sop.operands), sop.type, sop.value))
        vals.append(base + len(ops) - 1)
    return [vals[y] for y in body.yields]


def fuse_pair(producer: GenericOp, consumer: GenericOp, operand: int) -> Operation | None:
    """Fuse ``producer`` into ``consumer`` at input ``operand``.

    Every consumer input reading the same value through the same map is
    replaced together. Returns None when the result would exceed the caps.
    """
    cmap = consumer.map_for(operand)
    target = consumer.op.operands[operand]
    replaced = {
        i for i in range(consumer.num_ins)
        if consumer.op.operands[i] is target and consumer.map_for(i) == cmap
    }
    phi = producer_dim_map(producer, cmap)
    n = consumer.num_dims

    inputs = _Inputs()
    consumer_arg: dict[int, int] = {}
    for i in range(consumer.num_ins):
        if i not in replaced:
            consumer_arg[i] = inputs.add(consumer.op.operands[i], consumer.map_for(i))
    producer_arg: dict[int, int] = {}
    used = producer.body.used_args()
    for j, (v, m) in enumerate(zip(producer.op.operands, producer.indexing_maps)):
        if j in used:
            producer_arg[j] = inputs.add(v, m.remap(phi, n))
    n_in = len(inputs.items)
    if n_in > MAX_FUSED_INPUTS:
        return None

    elems = [v.type.element for v, _ in inputs.items]
    out_elems = [v.type.element for v in consumer.outs]
    arg_types = tuple(elems + out_elems)
    base = len(arg_types)
    ops: list[ScalarOp] = []
    p_args = [producer_arg.get(j, 0) for j in range(len(producer.op.operands))]
    (produced,) = _inline(producer.body, p_args, ops, base)
    c_args = []
    for i in range(len(consumer.op.operands)):
        if i in replaced:
            c_args.append(produced)
        elif i < consumer.num_ins:
            c_args.append(consumer_arg[i])
        else:
            c_args.append(n_in + i - consumer.num_ins)
    yields = _inline(consumer.body, c_args, ops, base)
    if len(ops) > MAX_FUSED_BODY_OPS:
        return None
    body = ScalarBody(arg_types, tuple(ops), tuple(yields))
    return make_generic(
        [v for v, _ in inputs.items],
        consumer.outs,
        consumer.iterator_types,
        [m for _, m in inputs.items] + list(consumer.output_maps),
        body,
        consumer.op.location,
    )


def _fuse_once(func: FuncOp) -> FuncOp | None:
    for idx, op in enumerate(func.ops):
        if op.opcode != "linalg.generic":
            continue
        consumer = GenericOp(op)
        if not consumer.is_all_parallel:
            continue
        for operand in range(consumer.num_ins):
            producer = fusable_producer(op.operands[operand])
            if producer is None or not can_fuse(producer, consumer, operand):
                continue
            fused = fuse_pair(producer, consumer, operand)
            if fused is None:
                continue
            rw = FuncRewriter(func)
            for j, other in enumerate(func.ops):
                if j != idx:
                    rw.clone(other)
                    continue
                fused.operands = [rw.lookup(v) for v in fused.operands]
                rw.append(fused)
                for old, new in zip(op.results, fused.results):
                    rw.bind(old, new)
            return rw.new
    return None


def _fuse_func(func: FuncOp) -> FuncOp:
    while True:
        nxt = _fuse_once(func)
        if nxt is None:
            return func
        func = nxt


def _extent_source(value: Value, axis: int) -> tuple[Value, int]:
    """An earlier value with the same extent at some axis.

    Follows ``linalg.empty`` dims and generic results back to the generic's
    operands, so a shape query does not keep a fused producer alive.
    """
    while True:
        op = value.defining_op
        if op is None:
            return value, axis
        if op.opcode == "linalg.empty":
            pairs = op.attributes["dims"]
            src, axis = pairs[2 * axis], pairs[2 * axis + 1]
            value = op.operands[src]
            continue
        if op.opcode != "linalg.generic" or len(op.results) != 1:
            return value, axis
        g = GenericOp(op)
        d = g.output_maps[0].results[axis]
        for operand, amap in zip(g.op.operands, g.indexing_maps):
            if d in amap.results:
                value, axis = operand, amap.results.index(d)
                break
        else:
            return value, axis


def forward_shape_sources(func: FuncOp) -> FuncOp:
    """Rewrite ``linalg.empty`` dims to read extents from the earliest source."""
    rw = FuncRewriter(func)
    for op in func.ops:
        if op.opcode != "linalg.empty":
            rw.clone(op)
            continue
        pairs = op.attributes["dims"]
        element = op.result.type.element
        sources: list[Value] = []
        flat: list[int] = []
        for i in range(0, len(pairs), 2):
            v, axis = _extent_source(op.operands[pairs[i]], pairs[i + 1])
            if v.type.element is not element:
                # The result element type is read from the first source.
                v, axis = op.operands[pairs[i]], pairs[i + 1]
            if v not in sources:
                sources.append(v)
            flat += [sources.index(v), axis]
        attrs = {**op.attributes, "dims": tuple(flat)}
        new = rw.emit("linalg.empty", [rw.lookup(v) for v in sources], attrs, location=op.location)
        rw.bind(op.result, new.result)
    return rw.new


def fuse_elementwise(module: ProgramModule) -> ProgramModule:
    """Fuse all-parallel producers into all-parallel consumers to a fixpoint.

    Init tensors are then re-pointed at the earliest value with the same
    extents and producers left without users are removed.
    """
    return dce(map_functions(module, lambda f: forward_shape_sources(_fuse_func(f))))
