from __future__ import annotations

import numpy as np
import pytest

from tirc.errors import IncompatibleShapes
from tirc.ir import (
    AffineMap,
    Builder,
    DenseElements,
    ElementType,
    FuncOp,
    Operation,
    ProgramModule,
    TensorType,
    infer_result_types,
    module_equal,
    tensor,
    verify_module,
)


def test_tensor_type_printing():
    assert str(tensor((2, None), "f32")) == "tensor<2x?xf32>"
    assert str(tensor((), "i8")) == "tensor<i8>"
    assert tensor((2, None)).dynamic_dims == [1]


def test_tensor_type_rejects_bad_shapes():
    with pytest.raises(ValueError):
        tensor((1, 2, 3, 4, 5))
    with pytest.raises(ValueError):
        tensor((-1,))


def test_accepts_runtime_shape():
    t = tensor((None, 3))
    assert t.accepts((7, 3))
    assert not t.accepts((7, 4))
    assert not t.accepts((7,))


def test_element_widths():
    assert ElementType.F32.width == 4
    assert ElementType.I32.width == 4
    assert ElementType.I8.width == 1
    assert ElementType.from_dtype(np.int8) is ElementType.I8


def test_matmul_inference():
    (t,) = infer_result_types("fe.matmul", [tensor((2, 3)), tensor((3, 4))], {})
    assert t == tensor((2, 4))


def test_matmul_inner_mismatch():
    with pytest.raises(IncompatibleShapes):
        infer_result_types("fe.matmul", [tensor((2, 3)), tensor((4, 4))], {})


def test_dynamic_dims_propagate():
    (t,) = infer_result_types("fe.matmul", [tensor((None, 3)), tensor((3, None))], {})
    assert t == tensor((None, None))


def test_elementwise_type_mismatch():
    with pytest.raises(IncompatibleShapes):
        infer_result_types("fe.add", [tensor((2, 3)), tensor((3, 2))], {})
    with pytest.raises(IncompatibleShapes):
        infer_result_types("fe.add", [tensor((2,), "f32"), tensor((2,), "i32")], {})


def test_reduce_and_transpose_inference():
    (r,) = infer_result_types("fe.reduce_sum", [tensor((2, 3, 4))], {"axis": 1})
    assert r == tensor((2, 4))
    (p,) = infer_result_types("fe.transpose", [tensor((2, 3, 4))], {"permutation": (2, 0, 1)})
    assert p == tensor((4, 2, 3))


def test_conv_inference():
    x, w = tensor((1, 8, 8, 3)), tensor((3, 3, 3, 5))
    (y,) = infer_result_types("fe.conv2d", [x, w], {"strides": (2, 2), "padding": (1, 1)})
    assert y == tensor((1, 4, 4, 5))


def test_builder_produces_valid_module():
    b = Builder.main(tensor((4, 4)), tensor((4, 4)))
    s = b.add(*b.args)
    m = b.ret(b.matmul(s, b.args[1]))
    assert verify_module(m) == []
    assert m.main.result_types == [tensor((4, 4))]


def test_use_before_def_is_reported():
    f = FuncOp("main", [tensor((2,))], [tensor((2,))])
    stray = Operation("fe.add", [f.args[0], f.args[0]], [tensor((2,))])
    use = Operation("fe.add", [stray.result, f.args[0]], [tensor((2,))])
    f.append(use)
    f.append(stray)
    f.ret(stray.result)
    diags = verify_module(ProgramModule([f]))
    assert [d.kind for d in diags] == ["dominance"]


def test_wrong_result_type_is_reported():
    f = FuncOp("main", [tensor((2,))], [tensor((3,))])
    op = f.append(Operation("fe.add", [f.args[0], f.args[0]], [tensor((3,))]))
    f.ret(op.result)
    kinds = {d.kind for d in verify_module(ProgramModule([f]))}
    assert kinds == {"type-mismatch"}


def test_missing_main():
    f = FuncOp("other", [], [])
    f.ret()
    diags = verify_module(ProgramModule([f]))
    assert diags and diags[0].kind == "signature"


def test_unknown_opcode():
    f = FuncOp("main", [tensor((2,))], [])
    f.append(Operation("fe.frobnicate", [f.args[0]], [tensor((2,))]))
    f.ret()
    diags = verify_module(ProgramModule([f]))
    assert any("unknown opcode" in d.message for d in diags)


def test_module_equal_ignores_value_identity():
    def build():
        b = Builder.main(tensor((3,)))
        return b.ret(b.mul(b.args[0], b.args[0]))

    assert module_equal(build(), build())
    b = Builder.main(tensor((3,)))
    other = b.ret(b.add(b.args[0], b.args[0]))
    assert not module_equal(build(), other)


def test_dense_elements_equality_is_bitwise():
    a = DenseElements(np.array([np.nan, 1.0], dtype=np.float32))
    b = DenseElements(np.array([np.nan, 1.0], dtype=np.float32))
    assert a == b and hash(a) == hash(b)
    assert DenseElements(np.array([0.0], np.float32)) != DenseElements(np.array([-0.0], np.float32))
    assert a.type == TensorType((2,), ElementType.F32)


def test_affine_map_basics():
    m = AffineMap(3, (0, 2))
    assert str(m) == "affine_map<(i, j, k) -> (i, k)>"
    assert m.apply((5, 6, 7)) == (5, 7)
    assert not m.is_permutation
    p = AffineMap(3, (2, 0, 1))
    assert p.inverse().apply(p.apply((1, 2, 3))) == (1, 2, 3)
    with pytest.raises(ValueError):
        AffineMap(2, (2,))
