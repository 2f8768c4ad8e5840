from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tirc.errors import InvalidTileSpec
from tirc.ir import Builder, tensor
from tirc.linalg import PARALLEL, REDUCTION, GenericOp, lower_to_linalg, run_linalg_module
from tirc.refinterp import interpret
from tirc.testing import generate_program, random_inputs
from tirc.transforms import (
    TileSpec,
    cse,
    dce,
    form_dispatch_regions,
    fuse_elementwise,
    is_pointwise_conv,
    rewrite_conv1x1_to_matmul,
)
from tirc.transforms import host as H
from tirc.pipeline import optimize

from conftest import same_bytes


def opcodes(module):
    return [op.opcode for op in module.main.ops]


def count(module, opcode):
    return opcodes(module).count(opcode)


def rand(shape, seed=0, dtype=np.float32):
    return np.random.default_rng(seed).standard_normal(shape).astype(dtype)


# -- cse / dce ------------------------------------------------------------------


def test_cse_merges_identical_adds():
    b = Builder.main(tensor((3,)))
    x = b.args[0]
    m = b.ret(b.mul(b.add(x, x), b.add(x, x)))
    out = cse(m)
    assert count(out, "fe.add") == 1
    mul = next(op for op in out.main.ops if op.opcode == "fe.mul")
    assert mul.operands[0] is mul.operands[1]


def test_cse_fixpoint_without_duplicates():
    b = Builder.main(tensor((3,)), tensor((3,)))
    m = b.ret(b.add(*b.args))
    assert opcodes(cse(m)) == opcodes(m)


def test_cse_duplicate_matmul_feeding_two_adds():
    b = Builder.main(tensor((4, 5)), tensor((5, 3)), tensor((4, 3)))
    x, y, z = b.args
    p, q = b.matmul(x, y), b.matmul(x, y)
    m = b.ret(b.add(p, z), b.sub(q, z))
    out = cse(m)
    assert count(out, "fe.matmul") == 1
    assert count(out, "fe.add") == 1 and count(out, "fe.sub") == 1
    inputs = [rand((4, 5), 1), rand((5, 3), 2), rand((4, 3), 3)]
    for got, want in zip(interpret(out, inputs), interpret(m, inputs)):
        assert same_bytes(got, want)


def test_dce_removes_unused_op():
    b = Builder.main(tensor((3,)))
    x = b.args[0]
    b.mul(x, x)
    m = b.ret(b.add(x, x))
    assert opcodes(dce(m)) == ["fe.add", "return"]


def test_dce_keeps_live_module():
    b = Builder.main(tensor((3,)))
    x = b.args[0]
    m = b.ret(b.mul(b.add(x, x), x))
    assert opcodes(dce(m)) == opcodes(m)


def test_dce_removes_dead_chain():
    b = Builder.main(tensor((3,)))
    x = b.args[0]
    v = x
    for _ in range(5):
        v = b.add(v, x)
    m = b.ret(x)
    assert opcodes(dce(m)) == ["return"]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cleanup_passes_are_idempotent_and_shrinking(seed):
    m = generate_program(seed).module
    once_c, once_d = cse(m), dce(m)
    assert opcodes(cse(once_c)) == opcodes(once_c)
    assert opcodes(dce(once_d)) == opcodes(once_d)
    assert len(once_c.main.ops) <= len(m.main.ops)
    assert len(once_d.main.ops) <= len(m.main.ops)


# -- 1x1 convolution -------------------------------------------------------------


def conv_module(n, h, w, c, f, k=1, strides=(1, 1), padding=(0, 0)):
    b = Builder.main(tensor((n, h, w, c)), tensor((k, k, c, f)))
    return b.ret(b.conv2d(*b.args, strides=strides, padding=padding))


def test_pointwise_conv_becomes_matmul():
    m = conv_module(1, 4, 4, 3, 8)
    out = rewrite_conv1x1_to_matmul(m)
    assert "fe.conv2d" not in opcodes(out)
    (mm,) = [op for op in out.main.ops if op.opcode == "fe.matmul"]
    assert [v.type.shape for v in mm.operands] == [(16, 3), (3, 8)]
    inputs = [rand((1, 4, 4, 3), 4), rand((1, 1, 3, 8), 5)]
    (got,) = interpret(out, inputs)
    (want,) = interpret(m, inputs)
    assert same_bytes(got, want)


def test_3x3_conv_left_alone():
    m = conv_module(1, 6, 6, 2, 4, k=3)
    assert not is_pointwise_conv(m.main.ops[0])
    assert opcodes(rewrite_conv1x1_to_matmul(m)) == opcodes(m)


def test_strided_pointwise_conv_left_alone():
    m = conv_module(1, 6, 6, 2, 4, strides=(2, 2))
    assert opcodes(rewrite_conv1x1_to_matmul(m)) == opcodes(m)


# -- fusion ------------------------------------------------------------------------


def generic_count(module):
    return count(module, "linalg.generic")


def test_add_mul_chain_fuses():
    b = Builder.main(tensor((6, 5)), tensor((6, 5)))
    x, y = b.args
    m = b.ret(b.mul(b.add(x, y), y))
    low = dce(cse(lower_to_linalg(m)))
    fused = fuse_elementwise(low)
    assert generic_count(low) == 2 and generic_count(fused) == 1
    (g,) = [GenericOp(op) for op in fused.main.ops if op.opcode == "linalg.generic"]
    assert [op.opcode for op in g.body.ops] == ["addf", "mulf"]
    inputs = [rand((6, 5), 6), rand((6, 5), 7)]
    assert same_bytes(run_linalg_module(fused, inputs)[0], interpret(m, inputs)[0])


def test_broadcast_producer_fuses_through_composed_map():
    b = Builder.main(tensor((4, 6)), tensor((6,)))
    x, bias = b.args
    m = b.ret(b.add(x, b.broadcast(bias, x, [1])))
    fused = fuse_elementwise(dce(cse(lower_to_linalg(m))))
    (g,) = [GenericOp(op) for op in fused.main.ops if op.opcode == "linalg.generic"]
    assert sorted(amap.results for amap in g.input_maps) == [(0, 1), (1,)]


def test_reduction_producer_is_not_fused():
    b = Builder.main(tensor((4, 5)), tensor((5, 6)), tensor((4, 6)))
    x, y, z = b.args
    m = b.ret(b.add(b.matmul(x, y), z))
    fused = fuse_elementwise(dce(cse(lower_to_linalg(m))))
    assert generic_count(fused) == 2


def test_fusion_frees_shape_only_producers():
    b = Builder.main(tensor((8, 8)))
    x = b.args[0]
    v = x
    for op in ("add", "mul", "max", "sub"):
        v = getattr(b, op)(v, x)
    fused = optimize(b.ret(v))
    assert generic_count(fused) == 1


@settings(max_examples=40, deadline=None)
@given(st.permutations(range(3)), st.integers(0, 2**31 - 1))
def test_fusion_decision_ignores_iterator_names(perm, seed):
    # Transposing producer feeding an add: fused under any renaming of the dims.
    shape = (2, 3, 4)
    src = tuple(shape[p] for p in perm)
    inverse = tuple(int(i) for i in np.argsort(perm))
    b = Builder.main(tensor(src), tensor(shape))
    x, y = b.args
    t = b.transpose(b.add(x, x), inverse)
    m = b.ret(b.mul(t, y))
    fused = optimize(m)
    assert generic_count(fused) == 1
    inputs = [rand(src, seed % 1000), rand(shape, seed % 1000 + 1)]
    assert same_bytes(run_linalg_module(fused, inputs)[0], interpret(m, inputs)[0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_optimized_modules_stay_bit_exact(seed):
    program = generate_program(seed, max_dim=10)
    inputs = random_inputs(np.random.default_rng(seed), program)
    want = interpret(program.module, inputs)
    got = run_linalg_module(optimize(program.module), inputs)
    for g, w in zip(got, want):
        assert same_bytes(g, w)


# -- dispatch regions ----------------------------------------------------------------


def test_default_tile_spec_maps_outer_dims_to_y_and_x():
    spec = TileSpec.outer((PARALLEL, PARALLEL, REDUCTION))
    assert spec.tile_sizes == (32, 32, 0)
    assert spec.grid_mapping == (1, 0)


def test_matmul_grid_100():
    b = Builder.main(tensor((100, 100)), tensor((100, 100)))
    m = optimize(b.ret(b.matmul(*b.args)))
    program, (region,) = form_dispatch_regions(m)
    assert region.grid_counts((100, 100, 100)) == (4, 4, 1)
    assert region.grid_expr() == ["ceildiv(size1, 32)", "ceildiv(size0, 32)", "1"]
    assert len(program.dispatches) == 1


def test_matmul_bias_is_one_region():
    b = Builder.main(tensor((16, 32)), tensor((32, 64)), tensor((64,)))
    x, w, bias = b.args
    mm = b.matmul(x, w)
    m = optimize(b.ret(b.add(mm, b.broadcast(bias, mm, [1]))))
    program, regions = form_dispatch_regions(m)
    assert len(regions) == 1
    assert regions[0].fused_ops
    assert sum(isinstance(op, H.AllocTransient) for op in program.ops) == 1


def test_independent_elementwise_ops_get_separate_regions():
    b = Builder.main(tensor((8, 8)))
    x = b.args[0]
    m = optimize(b.ret(b.add(x, x), b.mul(x, x)))
    program, regions = form_dispatch_regions(m)
    assert len(regions) == 2
    assert [d.region for d in program.dispatches] == [0, 1]
    assert sum(isinstance(op, H.AllocTransient) for op in program.ops) == 2
    for r in regions:
        assert [s.access for s in r.bindings].count("write") == 1


def test_tile_on_reduction_dim_is_rejected():
    b = Builder.main(tensor((8, 8)), tensor((8, 8)))
    m = optimize(b.ret(b.matmul(*b.args)))
    with pytest.raises(InvalidTileSpec):
        form_dispatch_regions(m, {0: TileSpec((0, 0, 4), (2,))})


def test_too_many_grid_axes_rejected():
    spec = TileSpec((1, 1, 1, 1), (0, 1, 2, 3))
    with pytest.raises(InvalidTileSpec):
        spec.validate((PARALLEL,) * 4)


def test_dynamic_matmul_host_program():
    b = Builder.main(tensor((None, 8)), tensor((8, None)))
    m = optimize(b.ret(b.matmul(*b.args)))
    program, _ = form_dispatch_regions(m)
    kinds = [type(op).__name__ for op in program.ops]
    assert kinds.count("Dim") == 2
    assert kinds.count("CeilDiv") == 2
    assert kinds.count("Dispatch") == 1
    assert kinds[-1] == "Return"
    H.verify_host_program(program, 1)
