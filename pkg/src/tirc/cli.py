"""``tirc`` command-line tool: compile, run, interpret and inspect.

Everything meant for scripts is printed as ``key=value`` lines on stdout;
errors go to stderr. Exit codes: 0 success, 1 compile diagnostics,
2 usage or I/O problems (including inputs that do not fit the signature),
3 malformed module, 4 runtime trap.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from . import __version__
from .errors import (
    IncompatibleShapes,
    InvalidTileSpec,
    IRSyntaxError,
    MalformedBytecode,
    MissingKernel,
    ModuleFormatError,
    NotSupported,
    RuntimeFault,
    ShapeMismatch,
    SignatureMismatch,
    VerificationFailed,
)
from .module_format import describe, read_module, strip_debug
from .pipeline import CompileOptions, compile_source
from .refinterp import interpret
from .runtime.tensor_io import read_tensor, write_tensor
from .runtime.vm import HOST_MODES, SCHEDULERS, Program
from .text import parse_module

EXIT_OK = 0
EXIT_COMPILE = 1
EXIT_USAGE = 2
EXIT_MALFORMED = 3
EXIT_TRAP = 4

_EXIT_FOR = (
    ((IRSyntaxError, VerificationFailed, NotSupported, IncompatibleShapes, InvalidTileSpec), EXIT_COMPILE),
    ((SignatureMismatch, ShapeMismatch), EXIT_USAGE),
    ((ModuleFormatError, MalformedBytecode, MissingKernel), EXIT_MALFORMED),
    ((RuntimeFault,), EXIT_TRAP),
)


class UsageError(Exception):
    pass


def _emit(out, key: str, value) -> None:
    print(f"{key}={value}", file=out)


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _read_inputs(paths) -> list:
    arrays = []
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"cannot read {p}: no such file")
        try:
            arrays.append(read_tensor(p))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read tensor {p}: {exc}") from None
    return arrays


def _write_outputs(outputs, out_dir: str, out) -> None:
    d = Path(out_dir)
    try:
        d.mkdir(parents=True, exist_ok=True)
        for i, arr in enumerate(outputs):
            path = d / f"out{i}.tnsr"
            write_tensor(path, arr)
            _emit(out, f"output{i}", path)
    except OSError as exc:
        raise UsageError(f"cannot write outputs to {out_dir}: {exc.strerror or exc}") from None
    _emit(out, "outputs", len(outputs))


def _parse_tiles(specs) -> tuple[tuple[int, ...] | None, dict]:
    """``--tile 16,8`` sets the default; ``--tile 2:16,8`` targets root 2."""
    default, per_root = None, {}
    for spec in specs or ():
        m = re.fullmatch(r"(?:(\d+):)?(\d+(?:,\d+)*)", spec.strip())
        if m is None:
            raise UsageError(f"bad --tile value {spec!r}; expected i,j or root:i,j")
        tiles = tuple(int(x) for x in m[2].split(","))
        if m[1] is None:
            default = tiles
        else:
            per_root[int(m[1])] = tiles
    return default, per_root


def _module_name(path: Path) -> str:
    name = re.sub(r"\W", "_", path.stem) or "model"
    return name if not name[0].isdigit() else "m_" + name


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_compile(args, out) -> int:
    src = Path(args.input)
    text = _read_bytes(args.input)
    default, per_root = _parse_tiles(args.tile)
    options = CompileOptions(
        host=args.host,
        debug=not args.strip_debug,
        vectorize=not args.no_vectorize,
        tile_specs=per_root or None,
        module_name=_module_name(src),
    )
    if default is not None:
        options.default_tiles = default
    compiled = compile_source(text, options)
    dest = Path(args.output) if args.output else src.with_suffix(".tirm")
    try:
        dest.write_bytes(compiled.data)
        if compiled.c_source is not None:
            c_path = dest.with_suffix(".c")
            c_path.write_text(compiled.c_source, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {dest}: {exc.strerror or exc}") from None
    _emit(out, "module", dest)
    if compiled.c_source is not None:
        _emit(out, "c_source", dest.with_suffix(".c"))
    _emit(out, "kernels", len(compiled.kernels))
    print(describe(compiled.data), end="", file=out)
    return EXIT_OK


def cmd_run(args, out) -> int:
    data = _read_bytes(args.module)
    inputs = _read_inputs(args.inputs)
    with Program(data) as prog:
        result = prog.run(inputs, scheduler=args.scheduler, workers=args.workers, host=args.host_mode)
    _write_outputs(result.outputs, args.out_dir, out)
    stats = result.stats
    _emit(out, "peak_pool_bytes", stats.pool_high_water)
    _emit(out, "dispatches", stats.dispatches)
    _emit(out, "work_items", stats.work_items)
    if args.stats:
        for line in stats.lines():
            print(line, file=out)
    return EXIT_OK


def cmd_interpret(args, out) -> int:
    text = _read_bytes(args.program)
    module = parse_module(text)
    inputs = _read_inputs(args.inputs)
    outputs = interpret(module, inputs)
    _write_outputs(outputs, args.out_dir, out)
    return EXIT_OK


def cmd_inspect(args, out) -> int:
    data = _read_bytes(args.module)
    print(describe(data), end="", file=out)
    return EXIT_OK


def cmd_strip(args, out) -> int:
    data = _read_bytes(args.module)
    stripped = strip_debug(read_module(data)).to_bytes()
    dest = Path(args.output or args.module)
    try:
        dest.write_bytes(stripped)
    except OSError as exc:
        raise UsageError(f"cannot write {dest}: {exc.strerror or exc}") from None
    _emit(out, "module", dest)
    _emit(out, "bytes_before", len(data))
    _emit(out, "bytes_after", len(stripped))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tirc", description="Compile and run small tensor programs.")
    p.add_argument("--version", action="version", version=f"tirc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a .tir program to a .tirm module")
    c.add_argument("input")
    c.add_argument("-o", "--output", help="module path (default: input with .tirm suffix)")
    c.add_argument("--host", choices=("bytecode", "emitc"), default="bytecode")
    c.add_argument("--strip-debug", action="store_true", help="omit the debug-names section")
    c.add_argument("--tile", action="append", metavar="[ROOT:]I,J", help="tile sizes for the outer parallel dims")
    c.add_argument("--no-vectorize", action="store_true")
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("run", help="run a compiled module")
    r.add_argument("module")
    r.add_argument("inputs", nargs="*")
    r.add_argument("-o", "--out-dir", default=".")
    r.add_argument("--scheduler", choices=SCHEDULERS, default="sync")
    r.add_argument("--workers", type=int, default=2)
    r.add_argument("--host-mode", choices=HOST_MODES, default="auto")
    r.add_argument("--stats", action="store_true", help="print every runtime counter")
    r.set_defaults(func=cmd_run)

    i = sub.add_parser("interpret", help="evaluate a .tir program with the reference interpreter")
    i.add_argument("program")
    i.add_argument("inputs", nargs="*")
    i.add_argument("-o", "--out-dir", default=".")
    i.set_defaults(func=cmd_interpret)

    s = sub.add_parser("inspect", help="print the section table of a module")
    s.add_argument("module")
    s.set_defaults(func=cmd_inspect)

    t = sub.add_parser("strip", help="remove debug names from a module")
    t.add_argument("module")
    t.add_argument("-o", "--output")
    t.set_defaults(func=cmd_strip)
    return p


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=err)
        return EXIT_USAGE
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    except Exception as exc:
        for kinds, code in _EXIT_FOR:
            if isinstance(exc, kinds):
                print(f"error: {type(exc).__name__}: {exc}", file=err)
                return code
        raise


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
