"""End-to-end compilation: frontend module -> ``.tirm`` bytes."""

from __future__ import annotations

from dataclasses import dataclass, field

from .codegen.bytecode import generate_host_bytecode, serialize_kernel
from .codegen.emitc import emit_host_c
from .codegen.kernel import LoopNestKernel
from .codegen.loops import lower_dispatch_to_loops
from .codegen.vectorize import vectorize as vectorize_kernel
from .errors import VerificationFailed
from .ir.affine import IteratorKind
from .ir.core import ProgramModule
from .ir.verify import verify_module
from .linalg.lowering import lower_to_linalg
from .module_format import ModuleFile, Signature, read_module, write_module
from .text import parse_module
from .transforms import host as H
from .transforms.cse import cse
from .transforms.dce import dce
from .transforms.dispatch import DEFAULT_TILE, DispatchRegion, dim_constraints, form_dispatch_regions
from .transforms.fusion import fuse_elementwise

HOST_FORMATS = ("bytecode", "emitc")


@dataclass
class CompileOptions:
    host: str = "bytecode"
    debug: bool = True
    vectorize: bool = True
    fuse: bool = True
    default_tiles: tuple[int, ...] = (DEFAULT_TILE, DEFAULT_TILE)
    tile_specs: dict | None = None
    interchange: dict = field(default_factory=dict)
    module_name: str = "model"

    def __post_init__(self):
        if self.host not in HOST_FORMATS:
            raise ValueError(f"host format must be one of {HOST_FORMATS}, got {self.host!r}")


@dataclass
class CompiledModule:
    data: bytes
    linalg: ProgramModule
    host: H.HostProgram
    regions: list[DispatchRegion]
    kernels: list[LoopNestKernel]
    signature: Signature
    c_source: str | None = None

    @property
    def module_file(self) -> ModuleFile:
        return read_module(self.data)


def kernel_debug_name(region: DispatchRegion) -> str:
    iters = "".join("p" if k is IteratorKind.PARALLEL else "r" for k in region.iterator_types)
    name = f"main_dispatch_{region.id}_{iters}"
    if region.fused_ops:
        name += f"_fused{len(region.fused_ops)}"
    loc = region.root.location
    if loc is not None:
        name += f" ({loc})"
    return name


def signature_of(module: ProgramModule, host: H.HostProgram) -> Signature:
    func = module.main
    dynamic = sorted({(op.arg, op.axis) for op in host.ops if isinstance(op, H.Dim)})
    return Signature(
        args=tuple(func.arg_types),
        results=tuple(func.result_types),
        dynamic_dims=tuple(dynamic),
        constraints=tuple(dim_constraints(func)),
    )


def optimize(module: ProgramModule, fuse: bool = True) -> ProgramModule:
    """Verify, lower to linalg and run the clean-up and fusion passes."""
    diags = verify_module(module)
    if diags:
        raise VerificationFailed(diags)
    out = dce(cse(lower_to_linalg(module)))
    if fuse:
        out = fuse_elementwise(out)
    return out


def compile_module(module: ProgramModule, options: CompileOptions | None = None) -> CompiledModule:
    options = options or CompileOptions()
    lowered = optimize(module, options.fuse)
    host, regions = form_dispatch_regions(lowered, options.tile_specs, options.default_tiles)
    kernels = []
    for region in regions:
        k = lower_dispatch_to_loops(region, options.interchange.get(region.id))
        if options.vectorize:
            k = vectorize_kernel(k)
        kernels.append(k)
    signature = signature_of(lowered, host)
    c_source = None
    if options.host == "emitc":
        c_source = emit_host_c(host, options.module_name)
        host_payload = c_source
    else:
        host_payload = generate_host_bytecode(host)
    data = write_module(
        host_payload,
        [serialize_kernel(k) for k in kernels],
        lowered.constants(),
        signature,
        debug=options.debug,
        names=[kernel_debug_name(r) for r in regions],
    )
    return CompiledModule(data, lowered, host, regions, kernels, signature, c_source)


def compile_source(text, options: CompileOptions | None = None) -> CompiledModule:
    return compile_module(parse_module(text), options)
