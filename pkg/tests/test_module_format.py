from __future__ import annotations

import random
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tirc.errors import (
    BadMagic,
    CorruptSectionTable,
    MalformedSection,
    ModuleFormatError,
    TruncatedPayload,
    UnsupportedVersion,
)
from tirc.ir import DenseElements, tensor
from tirc.module_format import (
    ENTRY,
    HEADER,
    Signature,
    describe,
    read_module,
    read_section_table,
    strip_debug,
    write_module,
)

from conftest import EMPTY, MATMUL_BIAS, compiled

MATMUL = """\
module {
  func @main(%a: tensor<8x4xf32>, %b: tensor<4x8xf32>) -> (tensor<8x8xf32>) {
    %0 = fe.matmul(%a, %b) : (tensor<8x4xf32>, tensor<4x8xf32>) -> tensor<8x8xf32>
    return %0 : tensor<8x8xf32>
  }
}
"""


def kinds(data):
    return [e.kind for e in read_section_table(data)[2]]


def entry_offset(i):
    return HEADER.size + ENTRY.size * i


def test_matmul_module_sections():
    debug = compiled(MATMUL).data
    stripped = compiled(MATMUL, debug=False).data
    assert kinds(debug) == [1, 2, 3, 4, 6]
    assert kinds(stripped) == [1, 2, 3, 6]
    assert len(stripped) < len(debug)


def test_header_layout():
    data = compiled(MATMUL).data
    magic, version, flags, count = HEADER.unpack_from(data)
    assert (magic, version, flags, count) == (b"TIRM", 1, 0x2, 5)
    for e in read_section_table(data)[2]:
        assert e.offset % 8 == 0
    last = read_section_table(data)[2][-1]
    assert len(data) == last.offset + ((last.size + 7) & ~7)


def test_emitc_module_has_c_section_only():
    data = compiled(MATMUL, host="emitc").data
    assert kinds(data) == [2, 3, 4, 5, 6]
    mf = read_module(data)
    assert mf.is_emitc and mf.host_bytecode is None
    assert mf.flags == 0x3


def test_empty_program_module():
    mf = read_module(compiled(EMPTY).data)
    assert mf.kernels == ()
    # Header words (0 args, 1 op) then one RETURN word with no values.
    assert len(mf.host_bytecode) == 12


def test_round_trip_on_corpus(corpus):
    for program in corpus:
        for opts in ({}, {"host": "emitc"}, {"debug": False}):
            data = compiled(program.text, **opts).data
            mf = read_module(data)
            assert mf.to_bytes() == data
            assert read_module(mf.to_bytes()) == mf


def test_write_is_deterministic():
    a = compiled(MATMUL_BIAS).module_file
    assert a.to_bytes() == read_module(a.to_bytes()).to_bytes()


def test_strip_keeps_other_payloads():
    data = compiled(MATMUL_BIAS).data
    mf = read_module(data)
    stripped = strip_debug(mf)
    assert not stripped.has_debug
    assert stripped.kernels == mf.kernels
    assert stripped.host_bytecode == mf.host_bytecode
    assert stripped.constants == mf.constants
    assert stripped.signature == mf.signature
    out = stripped.to_bytes()
    assert len(out) < len(data)
    assert strip_debug(read_module(out)).to_bytes() == out


def test_describe_report():
    text = describe(compiled(MATMUL).data)
    lines = text.splitlines()
    assert lines[0] == "format=TIRM version=1 flags=0x2 sections=5"
    assert any(l.startswith("section kind=4 name=debug_names ") for l in lines)
    assert lines[-1] == f"total bytes={len(compiled(MATMUL).data)}"
    stripped = describe(compiled(MATMUL, debug=False).data)
    assert "debug_names" not in stripped


# -- one fixture per error class --------------------------------------------------


def test_bad_magic():
    data = bytearray(compiled(MATMUL).data)
    data[0] ^= 0xFF
    with pytest.raises(BadMagic):
        read_module(bytes(data))


def test_unsupported_version():
    data = bytearray(compiled(MATMUL).data)
    struct.pack_into("<H", data, 4, 2)
    with pytest.raises(UnsupportedVersion):
        read_module(bytes(data))


def test_unknown_section_kind():
    data = bytearray(compiled(MATMUL).data)
    struct.pack_into("<I", data, entry_offset(1), 99)
    with pytest.raises(CorruptSectionTable):
        read_module(bytes(data))


def test_misaligned_offset():
    data = bytearray(compiled(MATMUL).data)
    kind, offset, size = ENTRY.unpack_from(data, entry_offset(1))
    ENTRY.pack_into(data, entry_offset(1), kind, offset + 4, size)
    with pytest.raises(CorruptSectionTable):
        read_module(bytes(data))


def test_section_size_beyond_end_of_file():
    data = bytearray(compiled(MATMUL).data)
    last = HEADER.unpack_from(data)[3] - 1
    kind, offset, size = ENTRY.unpack_from(data, entry_offset(last))
    ENTRY.pack_into(data, entry_offset(last), kind, offset, size + 4096)
    with pytest.raises(TruncatedPayload):
        read_module(bytes(data))


def test_truncated_file():
    data = compiled(MATMUL).data
    with pytest.raises(TruncatedPayload):
        read_module(data[:-8])
    with pytest.raises(TruncatedPayload):
        read_module(data[:6])


def test_malformed_kernel_table():
    data = bytearray(compiled(MATMUL).data)
    entries = read_section_table(bytes(data))[2]
    table = next(e for e in entries if e.kind == 2)
    # Claim a huge kernel count.
    struct.pack_into("<I", data, table.offset, 0xFFFFFFF)
    with pytest.raises(MalformedSection):
        read_module(bytes(data))


def test_emitc_flag_mismatch():
    data = bytearray(compiled(MATMUL).data)
    struct.pack_into("<H", data, 6, 0x3)
    with pytest.raises(CorruptSectionTable):
        read_module(bytes(data))


# -- properties ---------------------------------------------------------------------

ELEMENTS = ("f32", "i32", "i8")


@st.composite
def module_parts(draw):
    n_kernels = draw(st.integers(0, 4))
    kernels = [draw(st.binary(max_size=40)) for _ in range(n_kernels)]
    consts = []
    for _ in range(draw(st.integers(0, 3))):
        el = draw(st.sampled_from(ELEMENTS))
        shape = tuple(draw(st.lists(st.integers(0, 4), max_size=3)))
        dtype = tensor((), el).element.dtype
        raw = draw(st.binary(min_size=int(np.prod(shape)) * dtype.itemsize, max_size=int(np.prod(shape)) * dtype.itemsize))
        consts.append(DenseElements(np.frombuffer(raw, dtype=dtype).reshape(shape)))
    args = [tensor(tuple(draw(st.lists(st.one_of(st.none(), st.integers(0, 9)), max_size=4))), draw(st.sampled_from(ELEMENTS))) for _ in range(draw(st.integers(0, 3)))]
    dyn = tuple((i, ax) for i, t in enumerate(args) for ax in t.dynamic_dims)
    sig = Signature(tuple(args), (tensor((3,), "f32"),), dyn, ())
    if draw(st.booleans()):
        host = draw(st.binary(max_size=10).map(lambda b: b[: len(b) // 4 * 4]))
    else:
        host = draw(st.text(max_size=30))
    names = [draw(st.text(max_size=12)) for _ in kernels]
    return host, kernels, consts, sig, names


@settings(max_examples=150, deadline=None)
@given(module_parts(), st.booleans())
def test_write_read_identity(parts, debug):
    host, kernels, consts, sig, names = parts
    data = write_module(host, kernels, consts, sig, debug=debug, names=names)
    mf = read_module(data)
    assert mf.signature == sig
    assert [k for _, k in mf.kernels] == kernels
    assert mf.constants == tuple(consts)
    assert mf.to_bytes() == data
    assert write_module(host, kernels, consts, sig, debug=debug, names=names) == data
    if debug:
        assert [n for _, n in mf.debug_names] == names


@settings(max_examples=80, deadline=None)
@given(module_parts())
def test_strip_is_idempotent(parts):
    host, kernels, consts, sig, names = parts
    mf = read_module(write_module(host, kernels, consts, sig, names=names))
    once = strip_debug(mf)
    assert strip_debug(once) == once
    assert len(once.to_bytes()) < len(mf.to_bytes())


def test_reader_fuzz_small(corpus):
    seeds = [compiled(p.text).data for p in corpus]
    rng = random.Random(7)
    for _ in range(3000):
        data = bytearray(rng.choice(seeds))
        for _ in range(rng.randint(1, 3)):
            data[rng.randrange(len(data))] = rng.randrange(256)
        try:
            read_module(bytes(data))
        except ModuleFormatError:
            pass
