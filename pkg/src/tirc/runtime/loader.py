"""Load kernel bytecode from a module and check host/kernel linkage."""

from __future__ import annotations

from ..codegen.bytecode import deserialize_kernel
from ..errors import MalformedBytecode, MissingKernel
from ..module_format import ModuleFile
from ..transforms import host as H
from .interp import PreparedKernel


def load_kernel_library(mf: ModuleFile) -> dict[int, PreparedKernel]:
    """Deserialize every kernel; raises MalformedBytecode on bad input."""
    library = {}
    for ordinal, code in mf.kernels:
        kernel = deserialize_kernel(code)
        name = mf.kernel_name(ordinal)
        if name is not None:
            kernel = type(kernel)(kernel.bindings, kernel.num_push, kernel.consts, kernel.instrs, kernel.num_regs, name)
        library[ordinal] = PreparedKernel(kernel)
    return library


def check_links(program: H.HostProgram, library: dict[int, PreparedKernel], num_constants: int, num_results: int) -> None:
    """Every dispatch names a loaded kernel with matching binding and push
    counts, and constant indices are in range."""
    for idx, op in enumerate(program.ops):
        if isinstance(op, H.Dispatch):
            pk = library.get(op.region)
            if pk is None:
                raise MissingKernel(f"host op {idx} dispatches kernel {op.region}, which the module does not contain")
            if len(op.bindings) != len(pk.dtypes):
                raise MalformedBytecode(
                    f"host op {idx}: {len(op.bindings)} bindings for a kernel that takes {len(pk.dtypes)}"
                )
            if len(op.push) != pk.kernel.num_push:
                raise MalformedBytecode(
                    f"host op {idx}: {len(op.push)} push constants for a kernel that takes {pk.kernel.num_push}"
                )
        elif isinstance(op, H.BindConst) and op.index >= num_constants:
            raise MalformedBytecode(f"host op {idx}: constant {op.index} out of range")
        elif isinstance(op, H.Return) and len(op.values) != num_results:
            raise MalformedBytecode(f"return yields {len(op.values)} values, the signature declares {num_results}")
