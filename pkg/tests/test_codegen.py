from __future__ import annotations

import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tirc.codegen import (
    LoopNestKernel,
    decode_host_bytecode,
    deserialize_kernel,
    emit_host_c,
    generate_host_bytecode,
    lower_dispatch_to_loops,
    parse_host_c,
    serialize_kernel,
    vectorize,
)
from tirc.codegen.emitc import count_api_calls
from tirc.codegen.kernel import Op
from tirc.errors import MalformedBytecode
from tirc.ir import Builder, tensor
from tirc.pipeline import optimize
from tirc.runtime import Instrumentation, execute_kernel
from tirc.transforms import TileSpec, form_dispatch_regions
from tirc.transforms import host as H

from conftest import EMPTY, compiled, same_bytes

GOLDEN = Path(__file__).parent / "golden"


def regions_of(module, tile_specs=None):
    return form_dispatch_regions(optimize(module), tile_specs)


def matmul_module(m, k, n, element="f32"):
    b = Builder.main(tensor((m, k), element), tensor((k, n), element))
    return b.ret(b.matmul(*b.args))


def elementwise_module(n, op="add", element="f32"):
    b = Builder.main(tensor((n,), element), tensor((n,), element))
    return b.ret(getattr(b, op)(*b.args))


def loop_ops(kernel):
    return [i.op for i in kernel.instrs if i.op in (Op.PLOOP, Op.RLOOP, Op.VLOOP)]


def test_matmul_kernel_loop_nest():
    _, (region,) = regions_of(matmul_module(100, 100, 100))
    k = lower_dispatch_to_loops(region)
    assert loop_ops(k) == [Op.PLOOP, Op.PLOOP, Op.RLOOP]
    body = [i.op for i in k.instrs]
    assert Op.MULF in body and Op.ADDF in body
    assert [b.access for b in k.bindings] == [1, 1, 2]


def test_untiled_region_runs_one_work_item():
    _, (region,) = regions_of(elementwise_module(9), {0: TileSpec.untiled(1)})
    assert region.grid_counts((9,)) == (1, 1, 1)
    k = lower_dispatch_to_loops(region)
    x, y = np.arange(9, dtype=np.float32), np.full(9, 2, np.float32)
    out = np.zeros(9, np.float32)
    execute_kernel(k, [x, y, out], (9, 0))
    assert same_bytes(out, x + y)


def test_remainder_tile_extent():
    _, (region,) = regions_of(matmul_module(100, 100, 100))
    k = lower_dispatch_to_loops(region)
    ones = np.ones(100 * 100, np.float32)
    out = np.zeros(100 * 100, np.float32)
    inst = Instrumentation(count_writes=True)
    execute_kernel(k, [ones, ones, out], (100, 100, 100, 32, 32, 0), (3, 0, 0), (4, 4, 1), inst)
    # Work item x=3 covers columns 96..99: 32 rows times min(32, 100 - 96) columns.
    assert inst.write_counts[2].sum() == 32 * 4
    written = out.reshape(100, 100)
    assert (written[:32, 96:] == 100).all()
    assert (written[:, :96] == 0).all() and (written[32:, :] == 0).all()


def test_vectorized_add_over_ten_elements():
    _, (region,) = regions_of(elementwise_module(10))
    k = vectorize(lower_dispatch_to_loops(region))
    vloop = next(pc for pc, i in enumerate(k.instrs) if i.op is Op.VLOOP)
    ploop = next(pc for pc, i in enumerate(k.instrs) if i.op is Op.PLOOP)
    assert vloop < ploop
    inst = Instrumentation()
    x, y = np.arange(10, dtype=np.float32), np.ones(10, np.float32)
    out = np.zeros(10, np.float32)
    execute_kernel(k, [x, y, out], (10, 32), instrument=inst)
    assert inst.trips[vloop] == 2
    assert inst.trips[ploop] == 2
    assert same_bytes(out, x + y)


def test_reduction_innermost_kernel_is_not_vectorized():
    _, (region,) = regions_of(matmul_module(8, 8, 8))
    k = lower_dispatch_to_loops(region)
    assert vectorize(k) == k


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 17),
    st.integers(1, 3),
    st.sampled_from(["add", "sub", "mul", "max"]),
    st.sampled_from(["f32", "i32", "i8"]),
    st.integers(0, 2**32 - 1),
)
def test_vectorization_is_bit_exact(n, rows, op, element, seed):
    b = Builder.main(tensor((rows, n), element), tensor((rows, n), element))
    x, y = b.args
    m = b.ret(getattr(b, op)(b.mul(x, y), y))
    _, (region,) = regions_of(m, {0: (4, 8)})
    scalar = lower_dispatch_to_loops(region)
    vector = vectorize(scalar)
    rng = np.random.default_rng(seed)
    dtype = tensor((1,), element).element.dtype
    if element == "f32":
        a, c = (rng.standard_normal(rows * n).astype(dtype) for _ in range(2))
    else:
        a, c = (rng.integers(-100, 100, rows * n).astype(dtype) for _ in range(2))
    grid = region.grid_counts((rows, n))
    push = (rows, n, 4, 8)
    outs = []
    for k in (scalar, vector):
        out = np.zeros(rows * n, dtype)
        for gy in range(grid[1]):
            for gx in range(grid[0]):
                execute_kernel(k, [a, c, out], push, (gx, gy, 0), grid)
        outs.append(out)
    assert same_bytes(outs[0], outs[1])


def test_kernel_round_trip(corpus):
    for program in corpus:
        for k in compiled(program.text).kernels:
            data = serialize_kernel(k)
            back = deserialize_kernel(data)
            assert back == k
            assert serialize_kernel(back) == data


def test_matmul_kernel_bytes_are_golden():
    text = (Path(__file__).parent.parent / "corpus" / "matmul.tir").read_text()
    (k,) = compiled(text).kernels
    assert serialize_kernel(k) == (GOLDEN / "matmul_kernel.bin").read_bytes()


def test_truncated_kernel_is_rejected():
    _, (region,) = regions_of(matmul_module(4, 4, 4))
    data = serialize_kernel(lower_dispatch_to_loops(region))
    for cut in (0, 3, 8, len(data) - 4, len(data) - 1):
        with pytest.raises(MalformedBytecode):
            deserialize_kernel(data[:cut])


def test_bad_kernel_opcode_is_rejected():
    _, (region,) = regions_of(matmul_module(4, 4, 4))
    k = lower_dispatch_to_loops(region)
    data = bytearray(serialize_kernel(k))
    # The last word is the outermost END; give it an unknown opcode.
    data[-4] = 0xEE
    with pytest.raises(MalformedBytecode):
        deserialize_kernel(bytes(data))


def test_register_overflow_is_rejected():
    k = LoopNestKernel((), 0, (), (), 300)
    with pytest.raises(MalformedBytecode):
        deserialize_kernel(serialize_kernel(k))


def test_dynamic_matmul_host_bytecode():
    b = Builder.main(tensor((None, 8)), tensor((8, None)))
    host, _ = regions_of(b.ret(b.matmul(*b.args)))
    program = decode_host_bytecode(generate_host_bytecode(host))
    kinds = [type(op).__name__ for op in program.ops]
    assert kinds.count("Dim") == 2
    assert kinds.count("CeilDiv") == 2
    assert kinds.count("Dispatch") == 1
    assert kinds[-1] == "Return"
    assert program == host


def test_empty_program_is_a_single_return():
    host = compiled(EMPTY).host
    assert host.ops == [H.Return(())]
    assert decode_host_bytecode(generate_host_bytecode(host)).ops == [H.Return(())]


def test_two_dispatch_pipeline():
    b = Builder.main(tensor((8, 8)))
    x = b.args[0]
    host, _ = regions_of(b.ret(b.add(x, x), b.mul(x, x)))
    assert [d.region for d in decode_host_bytecode(generate_host_bytecode(host)).dispatches] == [0, 1]


def test_host_bytecode_truncation():
    data = generate_host_bytecode(compiled(EMPTY).host)
    with pytest.raises(MalformedBytecode):
        decode_host_bytecode(data[:-4])


def test_emitted_c_matches_golden(corpus):
    for program in corpus:
        c = compiled(program.text, host="emitc", module_name=program.name).c_source
        assert c == (GOLDEN / f"{program.name}.c").read_text(), program.name


def test_matmul_c_has_one_dispatch_and_one_call_per_op():
    text = (GOLDEN / "matmul.c").read_text()
    host = compiled((Path(__file__).parent.parent / "corpus" / "matmul.tir").read_text()).host
    assert text.count("tiny_vm_dispatch(") == 1
    assert count_api_calls(text) == len(host.ops)
    assert "switch" not in text and "while" not in text and "for (" not in text


def test_empty_program_c_body():
    c = emit_host_c(compiled(EMPTY).host, "empty")
    body = c[c.index("{") + 1 : c.rindex("}")].strip()
    assert body == "return 0;"


def test_c_emission_is_deterministic_and_parses_back(corpus):
    for program in corpus:
        host = compiled(program.text).host
        first = emit_host_c(host, "m")
        assert emit_host_c(host, "m") == first
        name, parsed = parse_host_c(first)
        assert name == "m" and parsed == host


def test_c_emission_rejects_bad_identifier():
    with pytest.raises(ValueError):
        emit_host_c(compiled(EMPTY).host, "9lives")


@pytest.mark.skipif(shutil.which("cc") is None, reason="no C compiler on PATH")
def test_emitted_c_compiles_against_the_api_header(corpus, tmp_path):
    header_dir = Path(__file__).parent.parent / "docs"
    for program in corpus:
        src = tmp_path / f"{program.name}.c"
        src.write_text((GOLDEN / f"{program.name}.c").read_text())
        proc = subprocess.run(
            ["cc", "-std=c99", "-Wall", "-Wextra", "-Werror", "-fsyntax-only", f"-I{header_dir}", str(src)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
