"""The ``.tirm`` container: a sectioned little-endian binary module.

Layout::

    magic "TIRM" | version u16 | flags u16 | section count u32
    section table: {kind u32, offset u64, size u64} per section
    payloads, each starting on an 8-byte boundary, zero padded

Flags: bit 0 = host program is C source (kind 5 instead of kind 1),
bit 1 = debug names present (kind 4).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    BadMagic,
    CorruptSectionTable,
    MalformedSection,
    TruncatedPayload,
    UnsupportedVersion,
)
from .ir.core import DenseElements
from .ir.types import ElementType, TensorType

MAGIC = b"TIRM"
VERSION = 1
HEADER = struct.Struct("<4sHHI")
ENTRY = struct.Struct("<IQQ")

FLAG_EMITC = 1
FLAG_DEBUG = 2
KNOWN_FLAGS = FLAG_EMITC | FLAG_DEBUG

HOST_BYTECODE = 1
KERNEL_TABLE = 2
CONSTANT_POOL = 3
DEBUG_NAMES = 4
HOST_C_SOURCE = 5
SIGNATURE = 6

SECTION_NAMES = {
    HOST_BYTECODE: "host_bytecode",
    KERNEL_TABLE: "kernel_table",
    CONSTANT_POOL: "constant_pool",
    DEBUG_NAMES: "debug_names",
    HOST_C_SOURCE: "host_c_source",
    SIGNATURE: "signature",
}

# Sanity limits applied while decoding untrusted bytes.
MAX_COUNT = 1 << 16


def _align8(n: int) -> int:
    return (n + 7) & ~7


@dataclass(frozen=True)
class Signature:
    """Entry-point types plus the runtime checks on dynamic dims.

    ``dynamic_dims`` lists the (argument, axis) pairs whose extents are read
    at runtime. ``constraints`` groups (argument, axis) pairs that must be
    equal; the second item is the static extent they must take, or -1.
    """

    args: tuple[TensorType, ...] = ()
    results: tuple[TensorType, ...] = ()
    dynamic_dims: tuple[tuple[int, int], ...] = ()
    constraints: tuple[tuple[tuple[tuple[int, int], ...], int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "results", tuple(self.results))
        object.__setattr__(self, "dynamic_dims", tuple(tuple(p) for p in self.dynamic_dims))
        object.__setattr__(
            self,
            "constraints",
            tuple((tuple(tuple(p) for p in group), int(s)) for group, s in self.constraints),
        )


@dataclass(frozen=True)
class ModuleFile:
    signature: Signature
    kernels: tuple[tuple[int, bytes], ...]
    constants: tuple[DenseElements, ...] = ()
    host_bytecode: bytes | None = None
    host_c: str | None = None
    debug_names: tuple[tuple[int, str], ...] | None = None
    version: int = VERSION

    @property
    def is_emitc(self) -> bool:
        return self.host_c is not None

    @property
    def has_debug(self) -> bool:
        return self.debug_names is not None

    @property
    def flags(self) -> int:
        return (FLAG_EMITC if self.is_emitc else 0) | (FLAG_DEBUG if self.has_debug else 0)

    def to_bytes(self) -> bytes:
        return encode_module(self)

    def kernel_name(self, ordinal: int) -> str | None:
        for o, name in self.debug_names or ():
            if o == ordinal:
                return name
        return None


@dataclass(frozen=True)
class SectionEntry:
    kind: int
    offset: int
    size: int

    @property
    def name(self) -> str:
        return SECTION_NAMES.get(self.kind, f"kind{self.kind}")


# ---------------------------------------------------------------------------
# payload encoders
# ---------------------------------------------------------------------------


def _encode_type(t: TensorType) -> bytes:
    out = struct.pack("<II", t.element.code, t.rank)
    out += b"".join(struct.pack("<q", -1 if d is None else d) for d in t.shape)
    return out


def _encode_signature(sig: Signature) -> bytes:
    out = bytearray(struct.pack("<I", len(sig.args)))
    for t in sig.args:
        out += _encode_type(t)
    out += struct.pack("<I", len(sig.results))
    for t in sig.results:
        out += _encode_type(t)
    out += struct.pack("<I", len(sig.dynamic_dims))
    for arg, axis in sig.dynamic_dims:
        out += struct.pack("<II", arg, axis)
    out += struct.pack("<I", len(sig.constraints))
    for group, static in sig.constraints:
        out += struct.pack("<qI", static, len(group))
        for arg, axis in group:
            out += struct.pack("<II", arg, axis)
    return bytes(out)


def _encode_kernels(kernels) -> bytes:
    out = bytearray(struct.pack("<I", len(kernels)))
    for ordinal, code in kernels:
        out += struct.pack("<II", ordinal, len(code)) + code
    return bytes(out)


def _encode_constants(constants) -> bytes:
    out = bytearray(struct.pack("<I", len(constants)))
    for c in constants:
        arr = c.array
        out += struct.pack("<II", c.element.code, arr.ndim)
        out += b"".join(struct.pack("<Q", d) for d in arr.shape)
        payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        out += struct.pack("<Q", len(payload)) + payload
        out += bytes(_align8(len(out)) - len(out))
    return bytes(out)


def _encode_names(names) -> bytes:
    out = bytearray(struct.pack("<I", len(names)))
    for ordinal, name in names:
        raw = name.encode("utf-8")
        out += struct.pack("<II", ordinal, len(raw)) + raw
    return bytes(out)


def module_sections(mf: ModuleFile) -> list[tuple[int, bytes]]:
    sections = []
    if mf.host_bytecode is not None:
        sections.append((HOST_BYTECODE, mf.host_bytecode))
    sections.append((KERNEL_TABLE, _encode_kernels(mf.kernels)))
    sections.append((CONSTANT_POOL, _encode_constants(mf.constants)))
    if mf.debug_names is not None:
        sections.append((DEBUG_NAMES, _encode_names(mf.debug_names)))
    if mf.host_c is not None:
        sections.append((HOST_C_SOURCE, mf.host_c.encode("utf-8")))
    sections.append((SIGNATURE, _encode_signature(mf.signature)))
    return sections


def encode_module(mf: ModuleFile) -> bytes:
    if (mf.host_bytecode is None) == (mf.host_c is None):
        raise ValueError("a module carries exactly one of host bytecode and C source")
    sections = module_sections(mf)
    table_end = HEADER.size + ENTRY.size * len(sections)
    offset = _align8(table_end)
    entries, payload = [], bytearray()
    for kind, data in sections:
        entries.append(ENTRY.pack(kind, offset, len(data)))
        payload += data + bytes(_align8(len(data)) - len(data))
        offset += _align8(len(data))
    head = HEADER.pack(MAGIC, mf.version, mf.flags, len(sections)) + b"".join(entries)
    head += bytes(_align8(len(head)) - len(head))
    return bytes(head + payload)


def write_module(host, kernels, constants, signature: Signature, debug: bool = True, names=None) -> bytes:
    """Serialize a module.

    ``host`` is host bytecode (bytes) or emitted C source (str). ``kernels``
    is a list of kernel bytecode blobs, stored under ordinals 0..n-1.
    ``names`` gives one debug name per kernel; it is written only when
    ``debug`` is true.
    """
    kernels = tuple((i, bytes(k)) for i, k in enumerate(kernels))
    if debug:
        names = names or [f"kernel{i}" for i in range(len(kernels))]
        debug_names = tuple((i, n) for i, n in enumerate(names))
    else:
        debug_names = None
    constants = tuple(c if isinstance(c, DenseElements) else DenseElements(c) for c in constants)
    mf = ModuleFile(
        signature=signature,
        kernels=kernels,
        constants=constants,
        host_bytecode=host if isinstance(host, (bytes, bytearray)) else None,
        host_c=host if isinstance(host, str) else None,
        debug_names=debug_names,
    )
    return encode_module(mf)


def strip_debug(mf: ModuleFile) -> ModuleFile:
    if mf.debug_names is None:
        return mf
    return replace(mf, debug_names=None)


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------


class _Cursor:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedSection(f"{self.what}: payload ends early at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def count(self) -> int:
        (n,) = self.unpack("<I")
        if n > MAX_COUNT:
            raise MalformedSection(f"{self.what}: implausible count {n}")
        return n

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise MalformedSection(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _element(code: int, what: str) -> ElementType:
    try:
        return ElementType.from_code(code)
    except (KeyError, ValueError):
        raise MalformedSection(f"{what}: unknown element type code {code}") from None


def _decode_type(cur: _Cursor) -> TensorType:
    code, rank = cur.unpack("<II")
    element = _element(code, cur.what)
    if rank > 4:
        raise MalformedSection(f"{cur.what}: rank {rank} exceeds 4")
    dims = []
    for _ in range(rank):
        (d,) = cur.unpack("<q")
        if d < -1:
            raise MalformedSection(f"{cur.what}: bad extent {d}")
        dims.append(None if d == -1 else d)
    return TensorType(tuple(dims), element)


def _decode_signature(data: bytes) -> Signature:
    cur = _Cursor(data, "signature")
    args = [_decode_type(cur) for _ in range(cur.count())]
    results = [_decode_type(cur) for _ in range(cur.count())]
    dyn = [cur.unpack("<II") for _ in range(cur.count())]
    constraints = []
    for _ in range(cur.count()):
        static, n = cur.unpack("<qI")
        if n > MAX_COUNT:
            raise MalformedSection("signature: implausible constraint size")
        constraints.append((tuple(cur.unpack("<II") for _ in range(n)), static))
    cur.finish()
    for arg, axis in dyn + [p for g, _ in constraints for p in g]:
        if arg >= len(args) or axis >= args[arg].rank:
            raise MalformedSection(f"signature: dim ({arg}, {axis}) does not exist")
    return Signature(tuple(args), tuple(results), tuple(dyn), tuple(constraints))


def _decode_kernels(data: bytes) -> tuple[tuple[int, bytes], ...]:
    cur = _Cursor(data, "kernel table")
    out = []
    for _ in range(cur.count()):
        ordinal, length = cur.unpack("<II")
        out.append((ordinal, cur.take(length)))
    cur.finish()
    if len({o for o, _ in out}) != len(out):
        raise MalformedSection("kernel table: duplicate ordinal")
    return tuple(out)


def _decode_constants(data: bytes) -> tuple[DenseElements, ...]:
    cur = _Cursor(data, "constant pool")
    out = []
    for _ in range(cur.count()):
        code, rank = cur.unpack("<II")
        element = _element(code, cur.what)
        if rank > 4:
            raise MalformedSection(f"constant pool: rank {rank} exceeds 4")
        shape = tuple(cur.unpack("<Q")[0] for _ in range(rank))
        (nbytes,) = cur.unpack("<Q")
        count = 1
        for d in shape:
            count *= d
        if count * element.width != nbytes:
            raise MalformedSection(f"constant pool: {nbytes} bytes for shape {shape} of {element}")
        raw = cur.take(nbytes)
        arr = np.frombuffer(raw, dtype=element.dtype.newbyteorder("<")).astype(element.dtype).reshape(shape)
        pad = cur.take(_align8(cur.pos) - cur.pos)
        if any(pad):
            raise MalformedSection("constant pool: nonzero padding")
        out.append(DenseElements(arr))
    cur.finish()
    return tuple(out)


def _decode_names(data: bytes) -> tuple[tuple[int, str], ...]:
    cur = _Cursor(data, "debug names")
    out = []
    for _ in range(cur.count()):
        ordinal, length = cur.unpack("<II")
        try:
            out.append((ordinal, cur.take(length).decode("utf-8")))
        except UnicodeDecodeError:
            raise MalformedSection("debug names: invalid UTF-8") from None
    cur.finish()
    return tuple(out)


def read_section_table(data: bytes) -> tuple[int, int, list[SectionEntry]]:
    """Validate header and table; returns (version, flags, entries)."""
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {data[:4]!r}")
    if len(data) < HEADER.size:
        raise TruncatedPayload(f"header needs {HEADER.size} bytes, file has {len(data)}")
    _, version, flags, count = HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersion(f"module version {version}, this reader supports {VERSION}")
    if flags & ~KNOWN_FLAGS:
        raise CorruptSectionTable(f"unknown flag bits 0x{flags & ~KNOWN_FLAGS:x}")
    if count > len(SECTION_NAMES):
        raise CorruptSectionTable(f"{count} sections declared, at most {len(SECTION_NAMES)} exist")
    table_end = HEADER.size + ENTRY.size * count
    if table_end > len(data):
        raise CorruptSectionTable(f"section table needs {table_end} bytes, file has {len(data)}")
    if any(data[table_end : _align8(table_end)]):
        raise CorruptSectionTable("nonzero padding after the section table")
    entries = []
    cursor = _align8(table_end)
    for i in range(count):
        kind, offset, size = ENTRY.unpack_from(data, HEADER.size + ENTRY.size * i)
        if kind not in SECTION_NAMES:
            raise CorruptSectionTable(f"entry {i}: unknown section kind {kind}")
        if any(e.kind == kind for e in entries):
            raise CorruptSectionTable(f"entry {i}: duplicate {SECTION_NAMES[kind]} section")
        if offset % 8:
            raise CorruptSectionTable(f"entry {i}: offset {offset} is not 8-byte aligned")
        if offset != cursor:
            raise CorruptSectionTable(f"entry {i}: offset {offset}, expected {cursor} (sections must be packed in order)")
        if offset + size > len(data):
            raise TruncatedPayload(
                f"{SECTION_NAMES[kind]} section ends at byte {offset + size}, file has {len(data)}"
            )
        entries.append(SectionEntry(kind, offset, size))
        cursor = _align8(offset + size)
    if cursor > len(data):
        raise TruncatedPayload("padding of the last section runs past the end of the file")
    if cursor != len(data):
        raise CorruptSectionTable(f"{len(data) - cursor} bytes after the last section")
    for e in entries:
        if any(data[e.offset + e.size : _align8(e.offset + e.size)]):
            raise CorruptSectionTable(f"{e.name} section has nonzero padding")
    kinds = {e.kind for e in entries}
    if (HOST_BYTECODE in kinds) == (HOST_C_SOURCE in kinds):
        raise CorruptSectionTable("exactly one of host_bytecode and host_c_source must be present")
    if bool(flags & FLAG_EMITC) != (HOST_C_SOURCE in kinds):
        raise CorruptSectionTable("emitc flag disagrees with the sections present")
    if bool(flags & FLAG_DEBUG) != (DEBUG_NAMES in kinds):
        raise CorruptSectionTable("debug flag disagrees with the sections present")
    for required in (KERNEL_TABLE, CONSTANT_POOL, SIGNATURE):
        if required not in kinds:
            raise CorruptSectionTable(f"missing {SECTION_NAMES[required]} section")
    return version, flags, entries


def read_module(data: bytes) -> ModuleFile:
    """Parse and fully validate a module. Raises one of BadMagic,
    UnsupportedVersion, CorruptSectionTable, TruncatedPayload or
    MalformedSection."""
    data = bytes(data)
    version, flags, entries = read_section_table(data)
    payload = {e.kind: data[e.offset : e.offset + e.size] for e in entries}
    host_c = None
    if HOST_C_SOURCE in payload:
        try:
            host_c = payload[HOST_C_SOURCE].decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedSection("host C source is not valid UTF-8") from None
    host_bytecode = payload.get(HOST_BYTECODE)
    if host_bytecode is not None and len(host_bytecode) % 4:
        raise MalformedSection("host bytecode is not a whole number of words")
    return ModuleFile(
        signature=_decode_signature(payload[SIGNATURE]),
        kernels=_decode_kernels(payload[KERNEL_TABLE]),
        constants=_decode_constants(payload[CONSTANT_POOL]),
        host_bytecode=host_bytecode,
        host_c=host_c,
        debug_names=_decode_names(payload[DEBUG_NAMES]) if DEBUG_NAMES in payload else None,
        version=version,
    )


def describe(data: bytes) -> str:
    """Stable text report: section table, kernel sizes, total size."""
    mf = read_module(data)
    _, flags, entries = read_section_table(data)
    lines = [
        f"format=TIRM version={mf.version} flags=0x{flags:x} sections={len(entries)}",
    ]
    for e in entries:
        lines.append(f"section kind={e.kind} name={e.name} offset={e.offset} size={e.size}")
    for ordinal, code in mf.kernels:
        name = mf.kernel_name(ordinal)
        suffix = f" name={name}" if name is not None else ""
        lines.append(f"kernel ordinal={ordinal} bytes={len(code)}{suffix}")
    const_bytes = sum(c.array.nbytes for c in mf.constants)
    lines.append(f"constants count={len(mf.constants)} bytes={const_bytes}")
    lines.append(f"total bytes={len(data)}")
    return "\n".join(lines) + "\n"
