"""Direct point-by-point evaluation of generic ops (the linalg-level oracle)."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import InconsistentShapes, NotSupported, ShapeMismatch
from ..ir import arith
from ..ir.core import Operation, ProgramModule, ScalarBody
from .generic import GenericOp


@dataclass(frozen=True)
class IterationSpace:
    sizes: tuple[int, ...]

    @property
    def num_points(self) -> int:
        n = 1
        for s in self.sizes:
            n *= s
        return n


def resolve_iteration_space(op, operand_shapes) -> IterationSpace:
    """Size of each iteration dim, read off operand extents through the maps."""
    g = op if isinstance(op, GenericOp) else GenericOp(op)
    maps = g.indexing_maps
    if len(operand_shapes) != len(maps):
        raise InconsistentShapes(f"{len(operand_shapes)} shapes for {len(maps)} operands")
    sizes: list[int | None] = [None] * g.num_dims
    for idx, (m, shape) in enumerate(zip(maps, operand_shapes)):
        if len(shape) != m.num_results:
            raise InconsistentShapes(f"operand #{idx} has rank {len(shape)}, map expects {m.num_results}")
        for pos, d in enumerate(m.results):
            extent = int(shape[pos])
            if sizes[d] is None:
                sizes[d] = extent
            elif sizes[d] != extent:
                raise InconsistentShapes(
                    f"dim {d} is {sizes[d]} from an earlier operand but {extent} from operand #{idx}"
                )
    if any(s is None for s in sizes):
        raise InconsistentShapes("some iteration dim is not reached by any indexing map")
    return IterationSpace(tuple(sizes))


def compile_body(body: ScalarBody):
    """Turn a scalar body into a callable ``f(args) -> yields``."""
    steps = []
    for sop in body.ops:
        if sop.opcode == "const":
            steps.append((None, arith.const(sop.type, sop.value), ()))
        else:
            kind, _ = arith.SCALAR_OPCODES[sop.opcode]
            steps.append((arith.BINARY[kind], None, sop.operands))
    yields = body.yields

    def run(args):
        vals = list(args)
        for fn, constant, operands in steps:
            if fn is None:
                vals.append(constant)
            else:
                vals.append(fn(vals[operands[0]], vals[operands[1]]))
        return [vals[y] for y in yields]

    return run


def evaluate_generic(op, inputs, inits) -> list[np.ndarray]:
    """Run ``op`` over its iteration space in lexicographic order.

    The leftmost iterator varies slowest. Each point reads its operands
    through the indexing maps (outputs are read from the running result, so
    reductions accumulate in this order) and writes the yields back.
    """
    g = op if isinstance(op, GenericOp) else GenericOp(op)
    inputs = [np.asarray(x) for x in inputs]
    outs = [np.array(x, copy=True) for x in inits]
    space = resolve_iteration_space(g, [x.shape for x in inputs] + [x.shape for x in outs])
    body = compile_body(g.body)
    in_maps = [m.results for m in g.input_maps]
    out_maps = [m.results for m in g.output_maps]
    for point in itertools.product(*(range(s) for s in space.sizes)):
        args = [x[tuple(point[r] for r in m)] for x, m in zip(inputs, in_maps)]
        out_idx = [tuple(point[r] for r in m) for m in out_maps]
        args.extend(o[i] for o, i in zip(outs, out_idx))
        for o, i, y in zip(outs, out_idx, body(args)):
            o[i] = y
    return outs


def _dims_from_sources(op: Operation, env) -> tuple[int, ...]:
    pairs = op.attributes["dims"]
    return tuple(env[op.operands[pairs[i]]].shape[pairs[i + 1]] for i in range(0, len(pairs), 2))


def reshape_extents(op: Operation, source_shape, ref_shape=None) -> tuple[int, ...]:
    """Runtime result shape of a collapse/expand op."""
    groups = op.attributes["groups"]
    if op.opcode.endswith("collapse"):
        shape, pos = [], 0
        for g in groups:
            n = 1
            for d in source_shape[pos : pos + g]:
                n *= d
            shape.append(n)
            pos += g
        return tuple(shape)
    ref_dims = op.attributes["ref_dims"]
    shape, pos = [], 0
    for src, g in enumerate(groups):
        sel = ref_dims[pos : pos + g]
        pos += g
        known = 1
        for r in sel:
            if r != -1:
                known *= ref_shape[r]
        total = source_shape[src]
        for r in sel:
            if r != -1:
                shape.append(ref_shape[r])
            else:
                if known == 0 or total % known:
                    raise ShapeMismatch(f"cannot split extent {total} by {known}")
                shape.append(total // known)
    n_out = 1
    for d in shape:
        n_out *= d
    n_in = 1
    for d in source_shape:
        n_in *= d
    if n_in != n_out:
        raise ShapeMismatch(f"expand of {tuple(source_shape)} to {tuple(shape)} changes element count")
    return tuple(shape)


def run_linalg_module(module: ProgramModule, inputs) -> list[np.ndarray]:
    """Evaluate ``@main`` of a linalg-level module with evaluate_generic."""
    func = module.main
    if len(inputs) != len(func.args):
        raise ShapeMismatch(f"expected {len(func.args)} inputs, got {len(inputs)}")
    env = {}
    for arg, x in zip(func.args, inputs):
        x = np.asarray(x)
        if x.dtype != arg.type.element.dtype or not arg.type.accepts(x.shape):
            raise ShapeMismatch(f"input {x.dtype}{x.shape} does not match {arg.type}")
        env[arg] = x
    for op in func.ops:
        if op.opcode == "return":
            return [env[v] for v in op.operands]
        vals = [env[v] for v in op.operands]
        if op.opcode == "linalg.generic":
            g = GenericOp(op)
            results = evaluate_generic(g, vals[: g.num_ins], vals[g.num_ins :])
        elif op.opcode == "linalg.empty":
            elem = op.result.type.element
            results = [np.zeros(_dims_from_sources(op, env), dtype=elem.dtype)]
        elif op.opcode in ("linalg.collapse", "linalg.expand"):
            ref = vals[1].shape if len(vals) > 1 else None
            results = [vals[0].reshape(reshape_extents(op, vals[0].shape, ref))]
        elif op.opcode == "fe.constant":
            results = [op.attributes["value"].array]
        else:
            raise NotSupported(f"{op.opcode} is not a linalg-level op")
        for r, v in zip(op.results, results):
            env[r] = v
    raise NotSupported("@main has no return")
