from __future__ import annotations

import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tirc.errors import IRSyntaxError, VerificationFailed
from tirc.ir import IteratorKind, ProgramModule, module_equal
from tirc.linalg import lower_to_linalg
from tirc.testing import generate_program
from tirc.text import parse_module, print_module

MATMUL_GENERIC = """\
module {
  func @main(%A: tensor<2x3xf32>, %B: tensor<3x4xf32>, %C: tensor<2x4xf32>) -> (tensor<2x4xf32>) {
    %D = linalg.generic(%A, %B, %C) {iterator_types = ["parallel", "parallel", "reduction"], indexing_maps = [affine_map<(i, j, k) -> (i, k)>, affine_map<(i, j, k) -> (k, j)>, affine_map<(i, j, k) -> (i, j)>], ins = 2} : (tensor<2x3xf32>, tensor<3x4xf32>, tensor<2x4xf32>) -> tensor<2x4xf32> {
    ^bb0(%a: f32, %b: f32, %c: f32):
      %p = arith.mulf %a, %b : f32
      %s = arith.addf %c, %p : f32
      linalg.yield %s : f32
    }
    return %D : tensor<2x4xf32>
  }
}
"""


def test_parse_matmul_generic():
    m = parse_module(MATMUL_GENERIC)
    (generic,) = [op for op in m.main.ops if op.opcode == "linalg.generic"]
    kinds = [k.value for k in generic.attributes["iterator_types"]]
    assert kinds == ["parallel", "parallel", "reduction"]
    assert generic.attributes["iterator_types"][2] is IteratorKind.REDUCTION


def test_generic_prints_maps_verbatim():
    text = print_module(parse_module(MATMUL_GENERIC))
    assert "affine_map<(i, j, k) -> (k, j)>" in text
    assert 'iterator_types = ["parallel", "parallel", "reduction"]' in text


def test_matmul_generic_round_trip():
    m = parse_module(MATMUL_GENERIC)
    again = parse_module(print_module(m))
    assert module_equal(m, again)
    assert print_module(again) == print_module(m)


def test_empty_main():
    m = parse_module("module { func @main() -> () { return } }")
    assert m.main.ops[-1].opcode == "return"
    assert m.main.arg_types == []


def test_empty_module_prints_two_lines():
    assert print_module(ProgramModule([])) == "module {\n}\n"


def test_unterminated_tensor_type_reports_column():
    text = "module { func @main(%a: tensor<2x) -> () { return } }"
    with pytest.raises(IRSyntaxError) as info:
        parse_module(text)
    assert (info.value.line, info.value.column) == (1, text.index(")") + 1)


def test_unknown_opcode_is_an_error():
    text = """module { func @main(%a: tensor<2xf32>) -> (tensor<2xf32>) {
      %0 = fe.nope(%a) : (tensor<2xf32>) -> tensor<2xf32>
      return %0 : tensor<2xf32>
    } }"""
    with pytest.raises(IRSyntaxError, match="unknown opcode") as info:
        parse_module(text)
    assert info.value.line == 2


def test_type_mismatch_is_a_verification_failure():
    text = """module { func @main(%a: tensor<2xf32>) -> (tensor<3xf32>) {
      return %a : tensor<2xf32>
    } }"""
    with pytest.raises((VerificationFailed, IRSyntaxError)):
        parse_module(text)


def test_locations_are_attached():
    m = parse_module(MATMUL_GENERIC)
    loc = m.main.ops[0].location
    assert (loc.line, loc.column) == (3, 5)


def test_line_comments_are_skipped():
    text = "// header\nmodule { // trailing\n func @main() -> () { return } }\n"
    assert parse_module(text).main.ops[-1].opcode == "return"


def test_invalid_utf8():
    with pytest.raises(IRSyntaxError, match="UTF-8"):
        parse_module(b"module \xff")


def test_lowered_corpus_round_trips(corpus):
    for program in corpus:
        for m in (parse_module(program.text), lower_to_linalg(parse_module(program.text))):
            text = print_module(m)
            assert module_equal(parse_module(text), m), program.name
            assert print_module(parse_module(text)) == text


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_generated_programs_round_trip(seed):
    m = generate_program(seed).module
    text = print_module(m)
    assert module_equal(parse_module(text), m)
    low = lower_to_linalg(m)
    assert module_equal(parse_module(print_module(low)), low)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 2**31 - 1))
def test_printing_distinguishes_modules(s1, s2):
    a, b = generate_program(s1).module, generate_program(s2).module
    if not module_equal(a, b):
        assert print_module(a) != print_module(b)


ALPHABET = string.ascii_letters + string.digits + " %@{}()<>[]=,:->.\"\n?x^"


@settings(max_examples=300, deadline=None)
@given(st.one_of(st.binary(max_size=200), st.text(ALPHABET, max_size=200)))
def test_parse_is_total(data):
    try:
        parse_module(data)
    except (IRSyntaxError, VerificationFailed):
        pass


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_parse_survives_mutations(data):
    text = MATMUL_GENERIC
    pos = data.draw(st.integers(0, len(text) - 1))
    cut = data.draw(st.integers(0, 8))
    insert = data.draw(st.text(ALPHABET, max_size=4))
    try:
        parse_module(text[:pos] + insert + text[pos + cut :])
    except (IRSyntaxError, VerificationFailed):
        pass
