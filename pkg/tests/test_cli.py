from __future__ import annotations

import io
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np

from tirc.cli import main
from tirc.module_format import read_module, read_section_table
from tirc.runtime import read_tensor, write_tensor
from tirc.testing import corpus_inputs

from conftest import CORPUS_DIR, EMPTY, same_bytes

GOLDEN = Path(__file__).parent / "golden"


def tirc(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def keys(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line and " " not in line.split("=", 1)[0])


def setup_program(tmp_path, name="matmul_bias", seed=0):
    from tirc.testing import load_corpus

    program = next(p for p in load_corpus(CORPUS_DIR) if p.name == name)
    src = tmp_path / f"{name}.tir"
    shutil.copy(program.path, src)
    inputs = []
    for i, x in enumerate(corpus_inputs(program, seed)):
        path = tmp_path / f"in{i}.tnsr"
        write_tensor(path, x)
        inputs.append(path)
    return src, inputs


def test_compile_reports_module(tmp_path):
    src, _ = setup_program(tmp_path)
    code, out, err = tirc("compile", src)
    assert code == 0 and err == ""
    info = keys(out)
    assert info["module"] == str(tmp_path / "matmul_bias.tirm")
    assert info["kernels"] == "1"
    assert (tmp_path / "matmul_bias.tirm").exists()


def test_inspect_matches_golden(tmp_path):
    src, _ = setup_program(tmp_path)
    tirc("compile", src)
    code, out, _ = tirc("inspect", tmp_path / "matmul_bias.tirm")
    assert code == 0
    assert out == (GOLDEN / "matmul_bias_inspect.txt").read_text()


def test_strip_debug_is_smaller(tmp_path):
    src, _ = setup_program(tmp_path)
    tirc("compile", src, "-o", tmp_path / "full.tirm")
    tirc("compile", src, "--strip-debug", "-o", tmp_path / "bare.tirm")
    full, bare = (tmp_path / "full.tirm").read_bytes(), (tmp_path / "bare.tirm").read_bytes()
    assert len(bare) < len(full)
    code, out, _ = tirc("strip", tmp_path / "full.tirm", "-o", tmp_path / "stripped.tirm")
    assert code == 0 and keys(out)["bytes_after"] == str(len(bare))
    assert (tmp_path / "stripped.tirm").read_bytes() == bare


def test_emitc_writes_c_sibling(tmp_path):
    src, _ = setup_program(tmp_path)
    code, out, _ = tirc("compile", src, "--host", "emitc")
    assert code == 0
    c_path = tmp_path / "matmul_bias.c"
    assert keys(out)["c_source"] == str(c_path)
    data = (tmp_path / "matmul_bias.tirm").read_bytes()
    assert 1 not in [e.kind for e in read_section_table(data)[2]]
    assert read_module(data).host_c == c_path.read_text()


def test_run_matches_interpret(tmp_path):
    src, inputs = setup_program(tmp_path, "two_branch_dag")
    tirc("compile", src)
    module = tmp_path / "two_branch_dag.tirm"
    code, out, _ = tirc("interpret", src, *inputs, "-o", tmp_path / "ref")
    assert code == 0
    n = int(keys(out)["outputs"])
    for args in ([], ["--scheduler", "async", "--workers", "4"], ["--host-mode", "direct"]):
        code, out, err = tirc("run", module, *inputs, "-o", tmp_path / "vm", *args)
        assert code == 0, err
        info = keys(out)
        assert int(info["outputs"]) == n and int(info["dispatches"]) == 4
        for i in range(n):
            assert same_bytes(read_tensor(tmp_path / "vm" / f"out{i}.tnsr"), read_tensor(tmp_path / "ref" / f"out{i}.tnsr"))


def test_run_stats(tmp_path):
    src, inputs = setup_program(tmp_path)
    tirc("compile", src)
    code, out, _ = tirc("run", tmp_path / "matmul_bias.tirm", *inputs, "-o", tmp_path, "--stats")
    info = keys(out)
    assert code == 0
    assert info["decoded_ops"] == info["host_ops"]
    assert info["live_bytes_after"] == "0"


def test_missing_input_is_a_usage_error(tmp_path):
    src, inputs = setup_program(tmp_path)
    tirc("compile", src)
    missing = tmp_path / "nope.tnsr"
    code, out, err = tirc("run", tmp_path / "matmul_bias.tirm", inputs[0], missing, inputs[2])
    assert code == 2 and str(missing) in err and out == ""
    code, _, err = tirc("inspect", tmp_path / "absent.tirm")
    assert code == 2 and "absent.tirm" in err


def test_shape_mismatch_is_a_usage_error(tmp_path):
    src, inputs = setup_program(tmp_path)
    tirc("compile", src)
    write_tensor(inputs[2], np.zeros(31, np.float32))
    code, _, err = tirc("run", tmp_path / "matmul_bias.tirm", *inputs)
    assert code == 2 and "SignatureMismatch" in err
    code, _, err = tirc("interpret", src, *inputs)
    assert code == 2 and "ShapeMismatch" in err


def test_corrupt_module(tmp_path):
    src, inputs = setup_program(tmp_path)
    tirc("compile", src)
    module = tmp_path / "matmul_bias.tirm"
    data = bytearray(module.read_bytes())
    data[0] ^= 0xFF
    module.write_bytes(bytes(data))
    for cmd in (("run", module, *inputs), ("inspect", module)):
        code, _, err = tirc(*cmd)
        assert code == 3 and "BadMagic" in err


def test_compile_diagnostics(tmp_path):
    bad = tmp_path / "bad.tir"
    bad.write_text("module { func @main(%a: tensor<4xf32>) -> (tensor<4xf32>) { return %b : tensor<4xf32> } }")
    code, _, err = tirc("compile", bad)
    assert code == 1 and err.startswith("error: ")
    bad.write_text("module { func @main( }")
    assert tirc("compile", bad)[0] == 1
    assert not (tmp_path / "bad.tirm").exists()


def test_usage_errors(tmp_path):
    assert tirc()[0] == 2
    assert tirc("frobnicate")[0] == 2
    src, inputs = setup_program(tmp_path)
    assert tirc("compile", src, "--tile", "x,y")[0] == 2
    tirc("compile", src)
    assert tirc("run", tmp_path / "matmul_bias.tirm", *inputs, "--workers", "0")[0] == 2


def test_empty_program(tmp_path):
    src = tmp_path / "empty.tir"
    src.write_text(EMPTY)
    code, out, _ = tirc("interpret", src, "-o", tmp_path / "o")
    assert code == 0 and keys(out) == {"outputs": "0"}
    assert tirc("compile", src)[0] == 0
    code, out, _ = tirc("run", tmp_path / "empty.tirm", "-o", tmp_path / "o")
    assert code == 0 and keys(out)["outputs"] == "0" and keys(out)["dispatches"] == "0"


def test_console_entry_point(tmp_path):
    src, _ = setup_program(tmp_path)
    proc = subprocess.run(
        [sys.executable, "-m", "tirc.cli", "compile", str(src), "-o", str(tmp_path / "m.tirm")],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert "kernels=1" in proc.stdout.splitlines()
