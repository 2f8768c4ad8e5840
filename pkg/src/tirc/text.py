"""Parser and printer for the ``.tir`` textual IR.

One op per line; values are renumbered densely on print (``%argN`` for
arguments, ``%N`` for op results, ``%sN`` inside generic bodies).
"""

from __future__ import annotations

import re

import numpy as np

from .errors import IRSyntaxError, VerificationFailed
from .ir.affine import AffineMap, IteratorKind, dim_name
from .ir.arith import SCALAR_OPCODES
from .ir.core import (
    DenseElements,
    FuncOp,
    Operation,
    ProgramModule,
    ScalarBody,
    ScalarOp,
    SourceLocation,
)
from .ir.ops import OPS
from .ir.types import MAX_RANK, ElementType, TensorType
from .ir.verify import verify_module

# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_ATTR_PRIORITY = ("iterator_types", "indexing_maps")


def format_scalar(value, element: ElementType) -> str:
    if element.is_float:
        return repr(float(np.float32(value)))
    return str(int(value))


def _format_attr(value) -> str:
    if isinstance(value, DenseElements):
        flat = value.array.reshape(-1)
        body = ", ".join(format_scalar(v, value.element) for v in flat)
        return f"dense<[{body}]>"
    if isinstance(value, tuple):
        items = []
        for v in value:
            if isinstance(v, IteratorKind):
                items.append(f'"{v.value}"')
            else:
                items.append(str(v))
        return "[" + ", ".join(items) + "]"
    return str(value)


def _attr_order(keys):
    first = [k for k in _ATTR_PRIORITY if k in keys]
    return first + sorted(k for k in keys if k not in _ATTR_PRIORITY)


def _format_types(types) -> str:
    return ", ".join(str(t) for t in types)


def print_module(module: ProgramModule) -> str:
    lines = ["module {"]
    for func in module.functions:
        lines.extend(_print_func(func))
    lines.append("}")
    return "\n".join(lines) + "\n"


def _print_func(func: FuncOp) -> list[str]:
    names = {}
    for i, a in enumerate(func.args):
        names[a] = f"%arg{i}"
    counter = 0
    for op in func.ops:
        for r in op.results:
            names[r] = f"%{counter}"
            counter += 1
    args = ", ".join(f"{names[a]}: {a.type}" for a in func.args)
    lines = [f"  func @{func.name}({args}) -> ({_format_types(func.result_types)}) {{"]
    for op in func.ops:
        lines.extend(_print_op(op, names))
    lines.append("  }")
    return lines


def _print_op(op: Operation, names) -> list[str]:
    operands = ", ".join(names.get(v, "%<undef>") for v in op.operands)
    if op.opcode == "return":
        if not op.operands:
            return ["    return"]
        return [f"    return {operands} : {_format_types(v.type for v in op.operands)}"]
    head = ", ".join(names[r] for r in op.results)
    text = f"    {head} = {op.opcode}({operands})"
    if op.attributes:
        attrs = ", ".join(f"{k} = {_format_attr(op.attributes[k])}" for k in _attr_order(op.attributes))
        text += f" {{{attrs}}}"
    in_types = _format_types(v.type for v in op.operands)
    res = op.result_types
    out_types = str(res[0]) if len(res) == 1 else f"({_format_types(res)})"
    text += f" : ({in_types}) -> {out_types}"
    if not op.regions:
        return [text]
    lines = [text + " {"]
    for body in op.regions:
        lines.extend(_print_body(body))
    lines.append("    }")
    return lines


def _print_body(body: ScalarBody) -> list[str]:
    n = len(body.arg_types)
    args = ", ".join(f"%s{i}: {t}" for i, t in enumerate(body.arg_types))
    lines = [f"    ^bb0({args}):"]
    for i, sop in enumerate(body.ops):
        name = f"%s{n + i}"
        if sop.opcode == "const":
            lines.append(f"      {name} = arith.constant {format_scalar(sop.value, sop.type)} : {sop.type}")
        else:
            ops = ", ".join(f"%s{o}" for o in sop.operands)
            lines.append(f"      {name} = arith.{sop.opcode} {ops} : {sop.type}")
    ys = ", ".join(f"%s{y}" for y in body.yields)
    ytypes = ", ".join(str(body.value_type(y)) for y in body.yields)
    lines.append(f"      linalg.yield {ys} : {ytypes}" if body.yields else "      linalg.yield")
    return lines


# ---------------------------------------------------------------------------
# lexing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>(?:[ \t\r\n]+|//[^\n]*)+)
  | (?P<tensor>tensor<)
  | (?P<arrow>->)
  | (?P<number>-?(?:\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|inf\b|nan\b))
  | (?P<percent>%[A-Za-z0-9_.$]+)
  | (?P<at>@[A-Za-z_][A-Za-z0-9_.$]*)
  | (?P<caret>\^[A-Za-z0-9_]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<string>"[^"\n]*")
  | (?P<punct>[(){}\[\]<>,:=])
    """,
    re.VERBOSE,
)

_ELEMENT_NAMES = {e.value: e for e in ElementType}


class _Token:
    __slots__ = ("kind", "text", "line", "col", "value")

    def __init__(self, kind, text, line, col, value=None):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col
        self.value = value

    def __repr__(self):
        return f"{self.kind}:{self.text!r}@{self.line}:{self.col}"


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise IRSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            newlines = chunk.count("\n")
            if newlines:
                line += newlines
                line_start = pos + chunk.rfind("\n") + 1
            pos = m.end()
            continue
        if kind == "tensor":
            ttype, end = _scan_tensor(text, m.end(), line, line_start)
            tokens.append(_Token("type", text[pos:end], line, col, ttype))
            pos = end
            continue
        tokens.append(_Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


_DIM_RE = re.compile(r"\d+|\?")
_ELEM_RE = re.compile(r"(f32|i32|i8)>")


def _scan_tensor(text: str, pos: int, line: int, line_start: int):
    shape = []
    while True:
        m = _ELEM_RE.match(text, pos)
        if m:
            if len(shape) > MAX_RANK:
                raise IRSyntaxError(f"rank exceeds {MAX_RANK}", line, pos - line_start + 1)
            return TensorType(tuple(shape), _ELEMENT_NAMES[m.group(1)]), m.end()
        m = _DIM_RE.match(text, pos)
        if not m:
            raise IRSyntaxError("expected dimension or element type in tensor type", line, pos - line_start + 1)
        shape.append(None if m.group() == "?" else int(m.group()))
        pos = m.end()
        if pos >= len(text) or text[pos] != "x":
            raise IRSyntaxError("expected 'x' after dimension", line, pos - line_start + 1)
        pos += 1


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


class _PendingDense:
    def __init__(self, values, token):
        self.values = values
        self.token = token


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.tok
        raise IRSyntaxError(message, tok.line, tok.col)

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("punct", "arrow", "ident") and t.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def expect(self, text: str) -> _Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            self.error(f"expected '{text}', found '{found}'")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> _Token:
        if self.tok.kind != kind:
            found = self.tok.text or "end of input"
            self.error(f"expected {what}, found '{found}'")
        return self.advance()

    def parse_type(self) -> TensorType:
        return self.expect_kind("type", "tensor type").value

    def parse_element(self) -> ElementType:
        tok = self.expect_kind("ident", "element type")
        if tok.text not in _ELEMENT_NAMES:
            self.error(f"unknown element type '{tok.text}'", tok)
        return _ELEMENT_NAMES[tok.text]

    def parse_type_list(self) -> list[TensorType]:
        self.expect("(")
        types = []
        if not self.at(")"):
            types.append(self.parse_type())
            while self.accept(","):
                types.append(self.parse_type())
        self.expect(")")
        return types

    # -- module structure ----------------------------------------------------

    def parse_module(self) -> ProgramModule:
        self.expect("module")
        self.expect("{")
        funcs = []
        while not self.at("}"):
            funcs.append(self.parse_func())
        self.expect("}")
        if self.tok.kind != "eof":
            self.error(f"unexpected '{self.tok.text}' after module")
        return ProgramModule(funcs)

    def parse_func(self) -> FuncOp:
        start = self.expect("func")
        name = self.expect_kind("at", "function name").text[1:]
        self.expect("(")
        arg_names, arg_types = [], []
        if not self.at(")"):
            while True:
                tok = self.expect_kind("percent", "argument name")
                self.expect(":")
                arg_names.append(tok)
                arg_types.append(self.parse_type())
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("->")
        result_types = self.parse_type_list()
        func = FuncOp(name, arg_types, result_types, SourceLocation(start.line, start.col))
        scope = {}
        for tok, value in zip(arg_names, func.args):
            if tok.text in scope:
                self.error(f"redefinition of {tok.text}", tok)
            scope[tok.text] = value
        self.expect("{")
        while not self.at("}"):
            func.append(self.parse_op(scope))
        self.expect("}")
        return func

    def lookup(self, scope, tok: _Token):
        if tok.text not in scope:
            self.error(f"use of undefined value {tok.text}", tok)
        return scope[tok.text]

    def parse_op(self, scope) -> Operation:
        start = self.tok
        loc = SourceLocation(start.line, start.col)
        if self.accept("return"):
            operands = []
            if self.tok.kind == "percent":
                toks = [self.advance()]
                while self.accept(","):
                    toks.append(self.expect_kind("percent", "value"))
                operands = [self.lookup(scope, t) for t in toks]
                self.expect(":")
                types = [self.parse_type()]
                while self.accept(","):
                    types.append(self.parse_type())
                self.check_types(operands, types, start)
            return Operation("return", operands, (), location=loc)

        result_toks = [self.expect_kind("percent", "result name or 'return'")]
        while self.accept(","):
            result_toks.append(self.expect_kind("percent", "result name"))
        self.expect("=")
        opcode_tok = self.expect_kind("ident", "opcode")
        opcode = opcode_tok.text
        if opcode not in OPS:
            self.error(f"unknown opcode '{opcode}'", opcode_tok)
        self.expect("(")
        operand_toks = []
        if not self.at(")"):
            operand_toks.append(self.expect_kind("percent", "operand"))
            while self.accept(","):
                operand_toks.append(self.expect_kind("percent", "operand"))
        self.expect(")")
        operands = [self.lookup(scope, t) for t in operand_toks]
        attrs = self.parse_attr_dict() if self.at("{") else {}
        self.expect(":")
        type_tok = self.tok
        in_types = self.parse_type_list()
        self.check_types(operands, in_types, type_tok)
        self.expect("->")
        if self.at("("):
            out_types = self.parse_type_list()
        else:
            out_types = [self.parse_type()]
        if len(out_types) != len(result_toks):
            self.error(f"{len(result_toks)} result names for {len(out_types)} result types", start)
        for key, value in list(attrs.items()):
            if isinstance(value, _PendingDense):
                attrs[key] = self.finish_dense(value, out_types[0])
        regions = []
        if self.at("{"):
            regions.append(self.parse_body())
        op = Operation(opcode, operands, out_types, attrs, regions, loc)
        for tok, value in zip(result_toks, op.results):
            if tok.text in scope:
                self.error(f"redefinition of {tok.text}", tok)
            scope[tok.text] = value
        return op

    def check_types(self, operands, types, tok):
        if len(operands) != len(types):
            self.error(f"{len(operands)} operands but {len(types)} types", tok)
        for v, t in zip(operands, types):
            if v.type != t:
                self.error(f"operand annotated {t} but has type {v.type}", tok)

    # -- attributes ----------------------------------------------------------

    def parse_attr_dict(self) -> dict:
        self.expect("{")
        attrs = {}
        while True:
            key = self.expect_kind("ident", "attribute name")
            if key.text in attrs:
                self.error(f"duplicate attribute '{key.text}'", key)
            self.expect("=")
            attrs[key.text] = self.parse_attr_value()
            if not self.accept(","):
                break
        self.expect("}")
        return attrs

    def parse_int(self) -> int:
        tok = self.expect_kind("number", "integer")
        try:
            return int(tok.text)
        except ValueError:
            self.error(f"expected integer, found '{tok.text}'", tok)

    def parse_attr_value(self):
        tok = self.tok
        if tok.kind == "number":
            return self.parse_int()
        if self.at("dense"):
            self.advance()
            self.expect("<")
            self.expect("[")
            values = []
            if not self.at("]"):
                values.append(self.expect_kind("number", "number").text)
                while self.accept(","):
                    values.append(self.expect_kind("number", "number").text)
            self.expect("]")
            self.expect(">")
            return _PendingDense(values, tok)
        if self.at("affine_map"):
            return self.parse_affine_map()
        if self.accept("["):
            items = []
            if not self.at("]"):
                items.append(self.parse_list_item())
                while self.accept(","):
                    items.append(self.parse_list_item())
            self.expect("]")
            kinds = {type(v) for v in items}
            if len(kinds) > 1:
                self.error("list mixes element kinds", tok)
            return tuple(items)
        self.error(f"expected attribute value, found '{tok.text or 'end of input'}'")

    def parse_list_item(self):
        tok = self.tok
        if tok.kind == "number":
            return self.parse_int()
        if tok.kind == "string":
            self.advance()
            try:
                return IteratorKind(tok.text[1:-1])
            except ValueError:
                self.error(f"unknown iterator type {tok.text}", tok)
        if self.at("affine_map"):
            return self.parse_affine_map()
        self.error(f"expected list element, found '{tok.text or 'end of input'}'")

    def parse_affine_map(self) -> AffineMap:
        self.expect("affine_map")
        self.expect("<")
        self.expect("(")
        dims: dict[str, int] = {}
        if not self.at(")"):
            while True:
                tok = self.expect_kind("ident", "dimension name")
                if tok.text in dims:
                    self.error(f"duplicate dimension '{tok.text}'", tok)
                dims[tok.text] = len(dims)
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("->")
        self.expect("(")
        results = []
        if not self.at(")"):
            while True:
                tok = self.expect_kind("ident", "dimension name")
                if tok.text not in dims:
                    self.error(f"unknown dimension '{tok.text}'", tok)
                results.append(dims[tok.text])
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect(">")
        return AffineMap(len(dims), tuple(results))

    def finish_dense(self, pending: _PendingDense, ttype: TensorType) -> DenseElements:
        if not ttype.is_static:
            self.error("dense constant needs a static result type", pending.token)
        if len(pending.values) != ttype.num_elements:
            self.error(
                f"dense constant has {len(pending.values)} elements, type needs {ttype.num_elements}",
                pending.token,
            )
        elem = ttype.element
        try:
            if elem.is_float:
                vals = [np.float32(float(v)) for v in pending.values]
            else:
                info = np.iinfo(elem.dtype)
                vals = []
                for v in pending.values:
                    iv = int(v)
                    if not info.min <= iv <= info.max:
                        raise ValueError(f"{iv} out of range for {elem}")
                    vals.append(iv)
        except (ValueError, OverflowError) as exc:
            self.error(f"bad constant: {exc}", pending.token)
        arr = np.array(vals, dtype=elem.dtype).reshape(ttype.shape)
        return DenseElements(arr)

    # -- generic bodies ------------------------------------------------------

    def parse_body(self) -> ScalarBody:
        self.expect("{")
        self.expect_kind("caret", "block label")
        self.expect("(")
        names: dict[str, int] = {}
        arg_types = []
        if not self.at(")"):
            while True:
                tok = self.expect_kind("percent", "block argument")
                self.expect(":")
                if tok.text in names:
                    self.error(f"redefinition of {tok.text}", tok)
                names[tok.text] = len(names)
                arg_types.append(self.parse_element())
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect(":")
        ops = []
        while not self.at("linalg.yield"):
            tok = self.expect_kind("percent", "scalar op or 'linalg.yield'")
            if tok.text in names:
                self.error(f"redefinition of {tok.text}", tok)
            self.expect("=")
            op_tok = self.expect_kind("ident", "scalar opcode")
            if not op_tok.text.startswith("arith."):
                self.error(f"unknown scalar op '{op_tok.text}'", op_tok)
            name = op_tok.text[len("arith."):]
            if name == "constant":
                num = self.expect_kind("number", "constant value")
                self.expect(":")
                elem = self.parse_element()
                try:
                    value = float(np.float32(float(num.text))) if elem.is_float else int(num.text)
                except ValueError:
                    self.error(f"bad constant '{num.text}'", num)
                if not elem.is_float:
                    info = np.iinfo(elem.dtype)
                    if not info.min <= value <= info.max:
                        self.error(f"{value} out of range for {elem}", num)
                ops.append(ScalarOp("const", (), elem, value))
            elif name in SCALAR_OPCODES:
                a = self.parse_scalar_ref(names)
                self.expect(",")
                b = self.parse_scalar_ref(names)
                self.expect(":")
                ops.append(ScalarOp(name, (a, b), self.parse_element()))
            else:
                self.error(f"unknown scalar op '{op_tok.text}'", op_tok)
            names[tok.text] = len(names)
        self.expect("linalg.yield")
        yields = []
        if self.tok.kind == "percent":
            yields.append(self.parse_scalar_ref(names))
            while self.accept(","):
                yields.append(self.parse_scalar_ref(names))
            self.expect(":")
            self.parse_element()
            for _ in yields[1:]:
                self.expect(",")
                self.parse_element()
        self.expect("}")
        return ScalarBody(tuple(arg_types), tuple(ops), tuple(yields))

    def parse_scalar_ref(self, names) -> int:
        tok = self.expect_kind("percent", "scalar value")
        if tok.text not in names:
            self.error(f"use of undefined value {tok.text}", tok)
        return names[tok.text]


def _location_of(text: str, index: int) -> tuple[int, int]:
    line = text.count("\n", 0, index) + 1
    col = index - (text.rfind("\n", 0, index) + 1) + 1
    return line, col


def parse_module(text, verify: bool = True) -> ProgramModule:
    """Parse ``.tir`` text (str or UTF-8 bytes).

    Raises IRSyntaxError for malformed input and VerificationFailed when the
    parsed module breaks a structural rule.
    """
    if isinstance(text, (bytes, bytearray, memoryview)):
        raw = bytes(text)
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            prefix = raw[: exc.start].decode("utf-8", errors="replace")
            raise IRSyntaxError("invalid UTF-8", *_location_of(prefix, len(prefix))) from None
    tokens = _tokenize(text)
    parser = _Parser(tokens)
    try:
        module = parser.parse_module()
    except IRSyntaxError:
        raise
    except (ValueError, TypeError, KeyError, IndexError, OverflowError) as exc:
        tok = parser.tok
        raise IRSyntaxError(f"malformed input ({exc})", tok.line, tok.col) from None
    if verify:
        diags = verify_module(module)
        if diags:
            raise VerificationFailed(diags)
    return module


# ---------------------------------------------------------------------------
# host programs
# ---------------------------------------------------------------------------


def print_host_program(program) -> str:
    from .transforms.host import format_host_op

    lines = [f"vm.program(args = {program.num_args}, regs = {program.num_regs}) {{"]
    lines.extend("  " + format_host_op(op) for op in program.ops)
    lines.append("}")
    return "\n".join(lines) + "\n"


def parse_host_program(text: str):
    from .transforms.host import parse_host_text

    return parse_host_text(text)


__all__ = [
    "dim_name",
    "parse_host_program",
    "parse_module",
    "print_host_program",
    "print_module",
]
