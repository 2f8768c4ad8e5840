"""Dispatch-region formation, tiling, and host-program generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from ..errors import InvalidTileSpec, NotSupported
from ..ir.affine import AffineMap, IteratorKind
from ..ir.core import FuncOp, Operation, ProgramModule, ScalarBody, Value
from ..ir.types import ElementType
from ..linalg.generic import GenericOp
from . import host as H

DEFAULT_TILE = 32
AXES = "xyz"

READ = "read"
WRITE = "write"
READ_WRITE = "read-write"


@dataclass(frozen=True)
class TileSpec:
    """Per-iteration-dim tile sizes (0 = untiled) and the dims driving each
    grid axis: ``grid_mapping[0]`` is x (fastest), then y, then z."""

    tile_sizes: tuple[int, ...]
    grid_mapping: tuple[int, ...]

    def validate(self, iterator_types) -> None:
        n = len(iterator_types)
        if len(self.tile_sizes) != n:
            raise InvalidTileSpec(f"{len(self.tile_sizes)} tile sizes for {n} iteration dims")
        if len(self.grid_mapping) > 3:
            raise InvalidTileSpec(f"{len(self.grid_mapping)} dims mapped, at most 3 grid axes exist")
        if len(set(self.grid_mapping)) != len(self.grid_mapping):
            raise InvalidTileSpec("a dim is mapped to two grid axes")
        for d, t in enumerate(self.tile_sizes):
            if t < 0:
                raise InvalidTileSpec(f"negative tile size for dim {d}")
            if t and iterator_types[d] is IteratorKind.REDUCTION:
                raise InvalidTileSpec(f"dim {d} is a reduction and cannot be tiled")
            if t and d not in self.grid_mapping:
                raise InvalidTileSpec(f"dim {d} is tiled but not mapped to a grid axis")
        for d in self.grid_mapping:
            if not 0 <= d < n:
                raise InvalidTileSpec(f"mapped dim {d} out of range")
            if self.tile_sizes[d] <= 0:
                raise InvalidTileSpec(f"mapped dim {d} needs a positive tile size")

    @classmethod
    def outer(cls, iterator_types, tiles=(DEFAULT_TILE, DEFAULT_TILE)) -> TileSpec:
        """Tile the outermost parallel dims; the outermost maps to the
        highest used axis, so the innermost tiled dim is x."""
        parallel = [d for d, k in enumerate(iterator_types) if k is IteratorKind.PARALLEL]
        sizes = [0] * len(iterator_types)
        chosen = []
        for d, t in zip(parallel, tiles):
            if t > 0:
                sizes[d] = t
                chosen.append(d)
        return cls(tuple(sizes), tuple(reversed(chosen)))

    @classmethod
    def untiled(cls, n: int) -> TileSpec:
        return cls((0,) * n, ())


@dataclass(frozen=True)
class OperandRef:
    """Where a stage operand comes from.

    ``kind`` is "binding" (index = binding slot), "value" (index = stage
    value id computed earlier in the kernel) or "zero" (an empty init).
    ``amap`` is expressed over the root's iteration dims.
    """

    kind: str
    index: int
    amap: AffineMap


@dataclass(frozen=True)
class Stage:
    body: ScalarBody
    num_ins: int
    operands: tuple[OperandRef, ...]
    results: tuple[int, ...]


@dataclass(frozen=True)
class StoreSpec:
    value: int
    binding: int
    amap: AffineMap


@dataclass(frozen=True)
class BindingSlot:
    element: ElementType
    access: str
    rank: int


@dataclass
class DispatchRegion:
    id: int
    root: Operation
    fused_ops: list[Operation]
    tile_spec: TileSpec
    iterator_types: tuple[IteratorKind, ...]
    stages: list[Stage]
    stores: list[StoreSpec]
    bindings: list[BindingSlot]
    binding_values: list[Value] = field(default_factory=list, repr=False)
    memory_accumulate: bool = False

    @property
    def num_dims(self) -> int:
        return len(self.iterator_types)

    @property
    def grid_dims(self) -> tuple[int | None, int | None, int | None]:
        """Iteration dim driving each of x, y, z (None = count 1)."""
        m = list(self.tile_spec.grid_mapping) + [None] * 3
        return tuple(m[:3])

    def grid_expr(self) -> list[str]:
        out = []
        for d in self.grid_dims:
            if d is None:
                out.append("1")
            else:
                out.append(f"ceildiv(size{d}, {self.tile_spec.tile_sizes[d]})")
        return out

    def grid_counts(self, sizes) -> tuple[int, int, int]:
        counts = []
        for d in self.grid_dims:
            if d is None:
                counts.append(1)
            else:
                t = self.tile_spec.tile_sizes[d]
                counts.append(-(-sizes[d] // t))
        return tuple(counts)

    @property
    def num_push(self) -> int:
        return 2 * self.num_dims


# ---------------------------------------------------------------------------
# symbolic dims
# ---------------------------------------------------------------------------


class Reg(NamedTuple):
    """A runtime dim held in a host scalar register."""

    r: int


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def dim_classes(func: FuncOp) -> _UnionFind:
    """Union (value, axis) atoms that must have equal extents at runtime."""
    uf = _UnionFind()
    for op in func.ops:
        if op.opcode == "linalg.generic":
            g = GenericOp(op)
            first: dict[int, tuple] = {}
            for v, m in zip(op.operands, g.indexing_maps):
                for pos, d in enumerate(m.results):
                    if d in first:
                        uf.union(first[d], (v, pos))
                    else:
                        first[d] = (v, pos)
            for r, m in zip(op.results, g.output_maps):
                for pos, d in enumerate(m.results):
                    uf.union(first[d], (r, pos))
        elif op.opcode == "linalg.empty":
            pairs = op.attributes["dims"]
            for i in range(0, len(pairs), 2):
                uf.union((op.operands[pairs[i]], pairs[i + 1]), (op.result, i // 2))
        elif op.opcode in ("linalg.collapse", "fe.collapse"):
            pos = 0
            for out, g in enumerate(op.attributes["groups"]):
                if g == 1:
                    uf.union((op.operands[0], pos), (op.result, out))
                pos += g
        elif op.opcode in ("linalg.expand", "fe.expand"):
            ref_dims = op.attributes["ref_dims"]
            pos = 0
            for src, g in enumerate(op.attributes["groups"]):
                for k in range(g):
                    r = ref_dims[pos + k]
                    if r != -1:
                        uf.union((op.operands[1], r), (op.result, pos + k))
                    elif g == 1:
                        uf.union((op.operands[0], src), (op.result, pos + k))
                pos += g
    return uf


def dim_constraints(func: FuncOp) -> list[tuple[tuple[tuple[int, int], ...], int]]:
    """Runtime checks on argument dims: groups of (arg, axis) that must be
    equal, with the static extent they must take (-1 when unconstrained)."""
    uf = dim_classes(func)
    members: dict = {}
    statics: dict = {}
    for atom in list(uf.parent):
        root = uf.find(atom)
        v, axis = atom
        if v.is_argument:
            members.setdefault(root, []).append((v.index, axis))
        extent = v.type.shape[axis]
        if extent is not None:
            statics[root] = extent
    for arg in func.args:
        for axis in range(arg.type.rank):
            uf.find((arg, axis))
    out = []
    for root, atoms in members.items():
        atoms = sorted(set(atoms))
        static = statics.get(root, -1)
        dynamic = [a for a in atoms if func.args[a[0]].type.shape[a[1]] is None]
        if len(atoms) > 1 or (dynamic and static != -1):
            if dynamic:
                out.append((tuple(atoms), static))
    out.sort()
    return out


class _HostBuilder:
    def __init__(self, num_args: int):
        self.program = H.HostProgram(num_args)
        self.next_reg = 0
        self.next_buf = num_args
        self._consts: dict[int, int] = {}
        self._dims: dict[tuple[int, int], int] = {}
        self._binops: dict[tuple, int] = {}

    def _reg(self) -> int:
        r = self.next_reg
        if r >= H.MAX_REGISTERS:
            raise NotSupported("host program needs more than 256 scalar registers")
        self.next_reg += 1
        return r

    def buf(self) -> int:
        b = self.next_buf
        if b >= H.MAX_REGISTERS:
            raise NotSupported("host program needs more than 256 buffer registers")
        self.next_buf += 1
        return b

    def emit(self, op):
        self.program.ops.append(op)

    def const(self, value: int) -> int:
        if value not in self._consts:
            r = self._reg()
            self.emit(H.ConstI64(r, value))
            self._consts[value] = r
        return self._consts[value]

    def dim(self, arg: int, axis: int) -> Reg:
        key = (arg, axis)
        if key not in self._dims:
            r = self._reg()
            self.emit(H.Dim(r, arg, axis))
            self._dims[key] = r
        return Reg(self._dims[key])

    def reg(self, d) -> int:
        return d.r if isinstance(d, Reg) else self.const(d)

    def _binop(self, kind, a, b):
        key = (kind, a, b)
        if key not in self._binops:
            ra, rb = self.reg(a), self.reg(b)
            r = self._reg()
            cls = H.Mul if kind == "mul" else H.CeilDiv
            self.emit(cls(r, ra, rb))
            self._binops[key] = r
        return Reg(self._binops[key])

    def mul(self, a, b):
        if isinstance(a, int) and isinstance(b, int):
            return a * b
        if a == 1:
            return b
        if b == 1:
            return a
        return self._binop("mul", a, b)

    def ceildiv(self, a, b):
        if isinstance(a, int) and isinstance(b, int):
            return -(-a // b)
        if b == 1:
            return a
        return self._binop("ceildiv", a, b)


# ---------------------------------------------------------------------------
# region formation
# ---------------------------------------------------------------------------


def _tile_spec_for(region_id: int, iterator_types, tile_specs, default_tiles) -> TileSpec:
    spec = None
    if tile_specs is not None:
        spec = tile_specs.get(region_id)
    if spec is None:
        spec = TileSpec.outer(iterator_types, default_tiles)
    elif not isinstance(spec, TileSpec):
        spec = TileSpec.outer(iterator_types, tuple(spec))
    spec.validate(iterator_types)
    return spec


class _Former:
    def __init__(self, func: FuncOp, constants, tile_specs, default_tiles):
        self.func = func
        self.tile_specs = tile_specs
        self.default_tiles = default_tiles
        self.position = {op: i for i, op in enumerate(func.ops)}
        # Data users only: an empty or the reference operand of an expand
        # reads nothing but the shape.
        self.users: dict[Value, list[Operation]] = {}
        for op in func.ops:
            if op.opcode == "linalg.empty":
                continue
            operands = op.operands[:1] if op.opcode == "linalg.expand" else op.operands
            for v in operands:
                self.users.setdefault(v, []).append(op)
        self.const_index = {id(c): i for i, c in enumerate(constants)}
        self.hb = _HostBuilder(len(func.args))
        self.buffers: dict[Value, int] = {a: a.index for a in func.args}
        self.zero: set[Value] = set()
        self.dims: dict[Value, list] = {}
        self.uf = dim_classes(func)
        self.class_dim: dict = {}
        self.grouped: set[Operation] = set()
        self.regions: list[DispatchRegion] = []
        # A reshape aliases its source, so returning it returns the source.
        self.returned = set()
        for v in func.returned:
            while True:
                self.returned.add(v)
                op = v.defining_op
                if op is None or op.opcode not in ("linalg.collapse", "linalg.expand"):
                    break
                v = op.operands[0]
        self._const_seen: dict = {}

    # dims ------------------------------------------------------------------
    def _class_value(self, value: Value, axis: int, compute):
        key = self.uf.find((value, axis))
        if key not in self.class_dim:
            extent = value.type.shape[axis]
            self.class_dim[key] = extent if extent is not None else compute()
        return self.class_dim[key]

    def _set_dims(self, value: Value, computes) -> None:
        self.dims[value] = [self._class_value(value, a, c) for a, c in enumerate(computes)]

    def _arg_dims(self) -> None:
        # Seed every class that contains a static extent first so that
        # dynamic dims unified with a static one resolve statically.
        for atom in list(self.uf.parent):
            v, axis = atom
            extent = v.type.shape[axis]
            if extent is not None:
                self.class_dim.setdefault(self.uf.find(atom), extent)
        for arg in self.func.args:
            self._set_dims(arg, [lambda a=arg, k=k: self.hb.dim(a.index, k) for k in range(arg.type.rank)])

    # main walk -------------------------------------------------------------
    def run(self) -> tuple[H.HostProgram, list[DispatchRegion]]:
        self._arg_dims()
        for op in self.func.ops:
            if op in self.grouped:
                continue
            handler = {
                "fe.constant": self._constant,
                "linalg.empty": self._empty,
                "linalg.collapse": self._reshape,
                "linalg.expand": self._reshape,
                "linalg.generic": self._root,
                "return": self._return,
            }.get(op.opcode)
            if handler is None:
                raise NotSupported(f"{op.opcode} cannot be placed in a dispatch region")
            handler(op)
        return self.hb.program, self.regions

    def _constant(self, op: Operation) -> None:
        value = op.attributes["value"]
        b = self.hb.buf()
        self.hb.emit(H.BindConst(b, self.const_index[id(value)]))
        self.buffers[op.result] = b
        self._set_dims(op.result, [None] * op.result.type.rank)

    def _empty(self, op: Operation) -> None:
        pairs = op.attributes["dims"]
        computes = [
            lambda i=i: self.dims[op.operands[pairs[i]]][pairs[i + 1]] for i in range(0, len(pairs), 2)
        ]
        self._set_dims(op.result, computes)
        self.zero.add(op.result)

    def _reshape(self, op: Operation) -> None:
        src = op.operands[0]
        sdims = self.dims[src]
        groups = op.attributes["groups"]
        computes = []
        if op.opcode.endswith("collapse"):
            pos = 0
            for g in groups:
                def prod(lo=pos, hi=pos + g):
                    out = 1
                    for d in sdims[lo:hi]:
                        out = self.hb.mul(out, d)
                    return out

                computes.append(prod)
                pos += g
        else:
            rdims = self.dims[op.operands[1]]
            ref_dims = op.attributes["ref_dims"]
            pos = 0
            for s, g in enumerate(groups):
                sel = ref_dims[pos : pos + g]
                for r in sel:
                    if r != -1:
                        computes.append(lambda r=r: rdims[r])
                    else:
                        def inferred(s=s, sel=sel):
                            known = 1
                            for q in sel:
                                if q != -1:
                                    known = self.hb.mul(known, rdims[q])
                            return self.hb.ceildiv(sdims[s], known)

                        computes.append(inferred)
                pos += g
        self._set_dims(op.result, computes)
        if src in self.zero:
            self.zero.add(op.result)
        else:
            self.buffers[op.result] = self.buffers[src]

    def _return(self, op: Operation) -> None:
        values = []
        for v in op.operands:
            if v not in self.buffers:
                # A returned empty tensor: materialize it zero-filled.
                b = self.hb.buf()
                self.hb.emit(H.AllocTransient(b, self.hb.reg(self._byte_size(v)), H.LIFETIME_RESULT))
                self.buffers[v] = b
            values.append(H.ReturnValue(self.buffers[v], tuple(self.hb.reg(d) for d in self.dims[v])))
        self.hb.emit(H.Return(tuple(values)))

    def _byte_size(self, v: Value):
        size = v.type.element.width
        for d in self.dims[v]:
            size = self.hb.mul(size, d)
        return size

    # regions ---------------------------------------------------------------
    def _is_zero(self, v: Value) -> bool:
        op = v.defining_op
        return v in self.zero or (op is not None and op.opcode == "linalg.empty")

    def _available_before(self, v: Value, limit: int) -> bool:
        op = v.defining_op
        return op is None or self.position[op] < limit or self._is_zero(v)

    def _epilogue_candidate(self, op: Operation, tail: Value, limit: int):
        """Return (read map, external operand indices) when ``op`` can join."""
        if op.opcode != "linalg.generic" or op in self.grouped:
            return None
        g = GenericOp(op)
        if not g.is_all_parallel or len(op.results) != 1:
            return None
        read_maps = {g.map_for(i) for i, v in enumerate(op.operands) if v is tail and i < g.num_ins}
        if any(v is tail for v in g.outs) or len(read_maps) != 1:
            return None
        (m,) = read_maps
        if not m.is_permutation or m.num_dims != tail.type.rank:
            return None
        for v in op.operands:
            if v is not tail and not self._available_before(v, limit):
                return None
        return m

    def _root(self, root_op: Operation) -> None:
        g = GenericOp(root_op)
        rid = len(self.regions)
        iters = tuple(g.iterator_types)
        spec = _tile_spec_for(rid, iters, self.tile_specs, self.default_tiles)
        limit = self.position[root_op]
        mem_acc = not g.reductions_innermost

        # Stage value bookkeeping: id -> (IR value, data-pos -> root dim)
        value_ids: dict[Value, int] = {}
        data_dims: dict[int, tuple[int, ...]] = {}
        for k, (r, m) in enumerate(zip(root_op.results, g.output_maps)):
            value_ids[r] = k
            data_dims[k] = m.results
        fused: list[Operation] = []
        epi_info = []
        if not mem_acc and len(root_op.results) == 1:
            tail = root_op.result
            while True:
                chosen = None
                for user in self.users.get(tail, []):
                    m = self._epilogue_candidate(user, tail, limit)
                    if m is not None:
                        chosen = (user, m)
                        break
                if chosen is None:
                    break
                user, m = chosen
                ug = GenericOp(user)
                t2r = data_dims[value_ids[tail]]
                psi = [0] * ug.num_dims
                for pos, c in enumerate(m.results):
                    psi[c] = t2r[pos]
                nid = len(value_ids)
                value_ids[user.result] = nid
                data_dims[nid] = tuple(psi[c] for c in ug.output_maps[0].results)
                fused.append(user)
                epi_info.append((user, psi, tail))
                self.grouped.add(user)
                tail = user.result

        region_ops = [root_op] + fused
        region_set = set(region_ops)

        # Bindings: reads first in encounter order, then writes.
        reads: list[Value] = []

        def read_ref(v: Value, amap: AffineMap) -> OperandRef:
            if v in value_ids:
                return OperandRef("value", value_ids[v], amap)
            if self._is_zero(v):
                return OperandRef("zero", 0, amap)
            if v not in reads:
                reads.append(v)
            return OperandRef("binding", reads.index(v), amap)

        stages: list[Stage] = []
        root_refs = tuple(
            read_ref(v, m) for v, m in zip(root_op.operands, g.indexing_maps)
        )
        stages.append(Stage(g.body, g.num_ins, root_refs, tuple(range(len(root_op.results)))))
        for user, psi, tail in epi_info:
            ug = GenericOp(user)
            refs = tuple(
                read_ref(v, m.remap(psi, g.num_dims)) for v, m in zip(user.operands, ug.indexing_maps)
            )
            stages.append(Stage(ug.body, ug.num_ins, refs, (value_ids[user.result],)))

        writes: list[Value] = []
        for v, vid in value_ids.items():
            outside = any(u not in region_set for u in self.users.get(v, []))
            # Memory accumulation keeps every root result in a buffer.
            if outside or v in self.returned or mem_acc:
                writes.append(v)
        n_reads = len(reads)
        stores = [
            StoreSpec(value_ids[v], n_reads + i, AffineMap(g.num_dims, data_dims[value_ids[v]]))
            for i, v in enumerate(writes)
        ]
        write_access = READ_WRITE if mem_acc else WRITE
        slots = [BindingSlot(v.type.element, READ, v.type.rank) for v in reads]
        slots += [BindingSlot(v.type.element, write_access, v.type.rank) for v in writes]

        region = DispatchRegion(
            id=rid,
            root=root_op,
            fused_ops=fused,
            tile_spec=spec,
            iterator_types=iters,
            stages=stages,
            stores=stores,
            bindings=slots,
            binding_values=reads + writes,
            memory_accumulate=mem_acc,
        )
        self.regions.append(region)

        # Host side: result dims, allocations, grid, dispatch.
        sizes = []
        for d in range(g.num_dims):
            for v, m in zip(root_op.operands, g.indexing_maps):
                if d in m.results:
                    sizes.append(self.dims[v][m.results.index(d)])
                    break
        for v, vid in value_ids.items():
            self._set_dims(v, [lambda d=d: sizes[d] for d in data_dims[vid]])
        for v in writes:
            b = self.hb.buf()
            lifetime = H.LIFETIME_RESULT if v in self.returned else H.LIFETIME_TRANSIENT
            self.hb.emit(H.AllocTransient(b, self.hb.reg(self._byte_size(v)), lifetime))
            self.buffers[v] = b
        grid = []
        for d in region.grid_dims:
            if d is None:
                grid.append(self.hb.const(1))
            else:
                grid.append(self.hb.reg(self.hb.ceildiv(sizes[d], spec.tile_sizes[d])))
        push = [self.hb.reg(s) for s in sizes] + [self.hb.const(t) for t in spec.tile_sizes]
        bindings = tuple(self.buffers[v] for v in reads + writes)
        self.hb.emit(H.Dispatch(rid, tuple(grid), bindings, tuple(push)))


def form_dispatch_regions(
    module: ProgramModule,
    tile_specs: dict | None = None,
    default_tiles: tuple[int, ...] = (DEFAULT_TILE, DEFAULT_TILE),
) -> tuple[H.HostProgram, list[DispatchRegion]]:
    """Group each root generic with its downstream element-wise consumers
    and build the host program that sizes, allocates and dispatches them.

    ``tile_specs`` maps a region ordinal to a TileSpec (or to a tuple of tile
    sizes for the outermost parallel dims); other roots get ``default_tiles``.
    """
    func = module.main
    former = _Former(func, module.constants(), tile_specs, default_tiles)
    program, regions = former.run()
    H.verify_host_program(program, len(regions))
    return program, regions
