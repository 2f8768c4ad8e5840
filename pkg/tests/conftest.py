from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from tirc.pipeline import CompileOptions, compile_source
from tirc.testing import load_corpus

ROOT = Path(__file__).resolve().parent.parent
CORPUS_DIR = ROOT / "corpus"

MATMUL_BIAS = """\
module {
  func @main(%a: tensor<16x32xf32>, %b: tensor<32x64xf32>, %bias: tensor<64xf32>) -> (tensor<16x64xf32>) {
    %0 = fe.matmul(%a, %b) : (tensor<16x32xf32>, tensor<32x64xf32>) -> tensor<16x64xf32>
    %1 = fe.broadcast(%bias, %0) {dimensions = [1]} : (tensor<64xf32>, tensor<16x64xf32>) -> tensor<16x64xf32>
    %2 = fe.add(%0, %1) : (tensor<16x64xf32>, tensor<16x64xf32>) -> tensor<16x64xf32>
    return %2 : tensor<16x64xf32>
  }
}
"""

EMPTY = "module { func @main() -> () { return } }"

_compiled: dict = {}


@pytest.fixture(scope="session")
def corpus():
    programs = load_corpus(CORPUS_DIR)
    assert programs, "corpus is empty"
    return programs


def compiled(text: str, **options):
    """Compile once per (text, options) within the test session."""
    key = (text, tuple(sorted(options.items())))
    if key not in _compiled:
        _compiled[key] = compile_source(text, CompileOptions(**options))
    return _compiled[key]


def same_bytes(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


# Acceptance criterion number -> "PASS ..." / "FAIL ..." line, filled in by
# test_acceptance.py and printed at the end of the session.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
