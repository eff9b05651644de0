"""Dalvik executable (DEX) parsing and opcode-frequency extraction.

Parses the DEX container natively (no external disassembler) and counts
how often each of the 256 opcode bytes occurs in the instruction
streams of all methods.  Only the primary instruction stream is walked;
debug info, annotations, and try/catch tables are ignored, and switch /
fill-array payload blocks are skipped without being counted.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

from .errors import DexParseError

HEADER_SIZE = 0x70
ENDIAN_TAG = 0x12345678
_MAGIC_PREFIX = b"dex\n"
_SUPPORTED_VERSIONS = range(35, 41)

# Payload pseudo-instruction identifiers (full 16-bit code unit).
PACKED_SWITCH_IDENT = 0x0100
SPARSE_SWITCH_IDENT = 0x0200
FILL_ARRAY_IDENT = 0x0300

# Instruction formats per opcode range, from the Dalvik bytecode format
# tables.  The leading digit of a format name is the instruction width in
# 16-bit code units.  Ranges not listed are unused opcode values.
_FORMAT_RANGES = (
    (0x00, 0x00, "10x"),
    (0x01, 0x01, "12x"),
    (0x02, 0x02, "22x"),
    (0x03, 0x03, "32x"),
    (0x04, 0x04, "12x"),
    (0x05, 0x05, "22x"),
    (0x06, 0x06, "32x"),
    (0x07, 0x07, "12x"),
    (0x08, 0x08, "22x"),
    (0x09, 0x09, "32x"),
    (0x0A, 0x0D, "11x"),
    (0x0E, 0x0E, "10x"),
    (0x0F, 0x11, "11x"),
    (0x12, 0x12, "11n"),
    (0x13, 0x13, "21s"),
    (0x14, 0x14, "31i"),
    (0x15, 0x15, "21h"),
    (0x16, 0x16, "21s"),
    (0x17, 0x17, "31i"),
    (0x18, 0x18, "51l"),
    (0x19, 0x19, "21h"),
    (0x1A, 0x1A, "21c"),
    (0x1B, 0x1B, "31c"),
    (0x1C, 0x1C, "21c"),
    (0x1D, 0x1E, "11x"),
    (0x1F, 0x1F, "21c"),
    (0x20, 0x20, "22c"),
    (0x21, 0x21, "12x"),
    (0x22, 0x22, "21c"),
    (0x23, 0x23, "22c"),
    (0x24, 0x24, "35c"),
    (0x25, 0x25, "3rc"),
    (0x26, 0x26, "31t"),
    (0x27, 0x27, "11x"),
    (0x28, 0x28, "10t"),
    (0x29, 0x29, "20t"),
    (0x2A, 0x2A, "30t"),
    (0x2B, 0x2C, "31t"),
    (0x2D, 0x31, "23x"),
    (0x32, 0x37, "22t"),
    (0x38, 0x3D, "21t"),
    (0x44, 0x51, "23x"),
    (0x52, 0x5F, "22c"),
    (0x60, 0x6D, "21c"),
    (0x6E, 0x72, "35c"),
    (0x74, 0x78, "3rc"),
    (0x7B, 0x8F, "12x"),
    (0x90, 0xAF, "23x"),
    (0xB0, 0xCF, "12x"),
    (0xD0, 0xD7, "22s"),
    (0xD8, 0xE2, "22b"),
    (0xFA, 0xFA, "45cc"),
    (0xFB, 0xFB, "4rcc"),
    (0xFC, 0xFC, "35c"),
    (0xFD, 0xFD, "3rc"),
    (0xFE, 0xFF, "21c"),
)


def _build_width_table() -> tuple[int | None, ...]:
    widths: list[int | None] = [None] * 256
    for lo, hi, fmt in _FORMAT_RANGES:
        for op in range(lo, hi + 1):
            widths[op] = int(fmt[0])
    return tuple(widths)


OPCODE_WIDTHS: tuple[int | None, ...] = _build_width_table()


@dataclass(frozen=True)
class DexHeader:
    checksum: int
    signature: bytes
    file_size: int
    header_size: int
    endian_tag: int
    link_size: int
    link_off: int
    map_off: int
    string_ids_size: int
    string_ids_off: int
    type_ids_size: int
    type_ids_off: int
    proto_ids_size: int
    proto_ids_off: int
    field_ids_size: int
    field_ids_off: int
    method_ids_size: int
    method_ids_off: int
    class_defs_size: int
    class_defs_off: int
    data_size: int
    data_off: int


@dataclass(frozen=True)
class ClassDef:
    class_idx: int
    access_flags: int
    superclass_idx: int
    interfaces_off: int
    source_file_idx: int
    annotations_off: int
    class_data_off: int
    static_values_off: int


@dataclass(frozen=True)
class DexFile:
    version: int
    header: DexHeader
    class_defs: tuple[ClassDef, ...]
    data: bytes = field(repr=False)


@dataclass(frozen=True)
class CodeItem:
    registers_size: int
    insns_size: int
    insns: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.insns) != self.insns_size:
            raise DexParseError(
                f"code item holds {len(self.insns)} code units, "
                f"declared insns_size is {self.insns_size}"
            )


@dataclass(frozen=True)
class OpcodeHistogram:
    """Counts of each of the 256 opcode bytes, plus their sum."""

    counts: tuple[int, ...]
    total: int

    def __post_init__(self) -> None:
        if len(self.counts) != 256:
            raise ValueError(f"expected 256 opcode columns, got {len(self.counts)}")
        if any(c < 0 for c in self.counts):
            raise ValueError("negative opcode count")
        if self.total != sum(self.counts):
            raise ValueError("total does not equal the sum of counts")

    @classmethod
    def from_counts(cls, counts) -> "OpcodeHistogram":
        counts = tuple(int(c) for c in counts)
        return cls(counts=counts, total=sum(counts))

    def __add__(self, other: "OpcodeHistogram") -> "OpcodeHistogram":
        merged = tuple(a + b for a, b in zip(self.counts, other.counts))
        return OpcodeHistogram(counts=merged, total=self.total + other.total)


def read_uleb128(data: bytes, offset: int) -> tuple[int, int]:
    """Decode one unsigned LEB128 value.

    Returns ``(value, next_offset)``.  The encoding must terminate within
    five bytes and before the end of the buffer.
    """
    if offset < 0 or offset >= len(data):
        raise DexParseError(f"uleb128 read at offset {offset} is out of bounds")
    value = 0
    shift = 0
    for i in range(5):
        pos = offset + i
        if pos >= len(data):
            raise DexParseError(f"uleb128 at offset {offset} runs past end of buffer")
        byte = data[pos]
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos + 1
        shift += 7
    raise DexParseError(f"uleb128 at offset {offset} exceeds 5 bytes")


def _check_magic(data: bytes) -> int:
    if data[:4] != _MAGIC_PREFIX or len(data) < 8 or data[7] != 0:
        raise DexParseError("bad magic: not a DEX file")
    try:
        version = int(data[4:7].decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise DexParseError("bad magic: unreadable version digits") from None
    if version not in _SUPPORTED_VERSIONS:
        raise DexParseError(f"bad magic: unsupported DEX version {version:03d}")
    return version


def _check_section(name: str, off: int, count: int, item_size: int, limit: int) -> None:
    if count == 0:
        return
    if off < HEADER_SIZE or off + count * item_size > limit:
        raise DexParseError(
            f"{name} section (offset {off:#x}, {count} items) is out of bounds"
        )


def parse_dex(data: bytes, verify_checksum: bool = False) -> DexFile:
    """Parse and validate a DEX buffer.

    Checks the magic, header geometry, and that every table the walker
    needs lies inside the buffer.  The adler32 checksum is verified only
    when ``verify_checksum`` is set; real-world samples often carry stale
    checksums.
    """
    version = _check_magic(data)
    if len(data) < HEADER_SIZE:
        raise DexParseError(
            f"truncated header: {len(data)} bytes, need {HEADER_SIZE:#x}"
        )
    fields = struct.unpack_from("<I20s20I", data, 8)
    header = DexHeader(*fields)

    if header.header_size != HEADER_SIZE:
        raise DexParseError(f"header_size {header.header_size:#x}, expected 0x70")
    if header.endian_tag != ENDIAN_TAG:
        raise DexParseError(f"endian_tag {header.endian_tag:#x} not supported")
    if header.file_size < HEADER_SIZE:
        raise DexParseError(f"file_size {header.file_size} smaller than the header")
    if header.file_size > len(data):
        raise DexParseError(
            f"truncated file: header declares {header.file_size} bytes, "
            f"buffer holds {len(data)}"
        )
    if verify_checksum:
        actual = zlib.adler32(data[12 : header.file_size])
        if actual != header.checksum:
            raise DexParseError(
                f"checksum mismatch: header {header.checksum:#010x}, "
                f"computed {actual:#010x}"
            )

    limit = header.file_size
    _check_section("string_ids", header.string_ids_off, header.string_ids_size, 4, limit)
    _check_section("type_ids", header.type_ids_off, header.type_ids_size, 4, limit)
    _check_section("proto_ids", header.proto_ids_off, header.proto_ids_size, 12, limit)
    _check_section("field_ids", header.field_ids_off, header.field_ids_size, 8, limit)
    _check_section("method_ids", header.method_ids_off, header.method_ids_size, 8, limit)
    _check_section("class_defs", header.class_defs_off, header.class_defs_size, 32, limit)
    if header.data_size and header.data_off + header.data_size > limit:
        raise DexParseError("data section is out of bounds")
    if header.map_off and header.map_off >= limit:
        raise DexParseError("map_off is out of bounds")

    class_defs = []
    for i in range(header.class_defs_size):
        raw = struct.unpack_from("<8I", data, header.class_defs_off + 32 * i)
        class_defs.append(ClassDef(*raw))
    return DexFile(version=version, header=header, class_defs=tuple(class_defs), data=data)


def instruction_width(code_units, index: int) -> int:
    """Width in 16-bit code units of the instruction at ``index``.

    Payload pseudo-instructions (packed-switch, sparse-switch,
    fill-array-data) report the width of the whole data block, computed
    from the payload header.
    """
    n = len(code_units)
    if index < 0 or index >= n:
        raise DexParseError(f"instruction index {index} out of range")
    unit = code_units[index]
    opcode = unit & 0xFF
    if opcode == 0x00 and unit in (PACKED_SWITCH_IDENT, SPARSE_SWITCH_IDENT, FILL_ARRAY_IDENT):
        return _payload_width(code_units, index, unit)
    width = OPCODE_WIDTHS[opcode]
    if width is None:
        raise DexParseError(f"unknown opcode {opcode:#04x} at code unit {index}")
    return width


def _payload_width(code_units, index: int, ident: int) -> int:
    n = len(code_units)
    if ident == PACKED_SWITCH_IDENT:
        if index + 2 > n:
            raise DexParseError("packed-switch payload header runs past end of code")
        return code_units[index + 1] * 2 + 4
    if ident == SPARSE_SWITCH_IDENT:
        if index + 2 > n:
            raise DexParseError("sparse-switch payload header runs past end of code")
        return code_units[index + 1] * 4 + 2
    if index + 4 > n:
        raise DexParseError("fill-array-data payload header runs past end of code")
    element_width = code_units[index + 1]
    size = code_units[index + 2] | (code_units[index + 3] << 16)
    return (size * element_width + 1) // 2 + 4


def _read_code_item(data: bytes, offset: int) -> CodeItem:
    if offset + 16 > len(data):
        raise DexParseError(f"code item at {offset:#x} is out of bounds")
    registers_size = struct.unpack_from("<H", data, offset)[0]
    insns_size = struct.unpack_from("<I", data, offset + 12)[0]
    end = offset + 16 + insns_size * 2
    if end > len(data):
        raise DexParseError(
            f"code item at {offset:#x} declares {insns_size} code units "
            "past end of buffer"
        )
    insns = struct.unpack_from(f"<{insns_size}H", data, offset + 16)
    return CodeItem(registers_size=registers_size, insns_size=insns_size, insns=insns)


def _walk_code_units(code_units, counts: list[int]) -> int:
    """Count one opcode per instruction; skip payload data regions.

    Consumes exactly ``len(code_units)`` units or raises.  Returns the
    number of instructions counted.
    """
    n = len(code_units)
    i = 0
    stepped = 0
    while i < n:
        unit = code_units[i]
        opcode = unit & 0xFF
        is_payload = opcode == 0x00 and unit in (
            PACKED_SWITCH_IDENT,
            SPARSE_SWITCH_IDENT,
            FILL_ARRAY_IDENT,
        )
        width = instruction_width(code_units, i)
        if i + width > n:
            raise DexParseError(
                f"instruction at code unit {i} (width {width}) overruns the stream"
            )
        if not is_payload:
            counts[opcode] += 1
            stepped += 1
        i += width
    return stepped


def _iter_code_offsets(data: bytes, class_data_off: int):
    """Yield code_item offsets from one class_data item."""
    if class_data_off >= len(data):
        raise DexParseError(f"class_data offset {class_data_off:#x} is out of bounds")
    off = class_data_off
    static_fields, off = read_uleb128(data, off)
    instance_fields, off = read_uleb128(data, off)
    direct_methods, off = read_uleb128(data, off)
    virtual_methods, off = read_uleb128(data, off)
    for _ in range(static_fields + instance_fields):
        _, off = read_uleb128(data, off)  # field_idx_diff
        _, off = read_uleb128(data, off)  # access_flags
    for _ in range(direct_methods + virtual_methods):
        _, off = read_uleb128(data, off)  # method_idx_diff
        _, off = read_uleb128(data, off)  # access_flags
        code_off, off = read_uleb128(data, off)
        if code_off:
            yield code_off


def opcode_histogram(dex: DexFile) -> OpcodeHistogram:
    """Opcode-frequency histogram over every method of every class.

    A file without code items yields an all-zero histogram.
    """
    counts = [0] * 256
    total = 0
    for class_index, class_def in enumerate(dex.class_defs):
        if class_def.class_data_off == 0:
            continue
        try:
            for code_off in _iter_code_offsets(dex.data, class_def.class_data_off):
                code = _read_code_item(dex.data, code_off)
                total += _walk_code_units(code.insns, counts)
        except DexParseError as exc:
            raise DexParseError(f"class_def {class_index}: {exc}") from None
    return OpcodeHistogram(counts=tuple(counts), total=total)


def extract_histogram(data: bytes, verify_checksum: bool = False) -> OpcodeHistogram:
    """Parse a DEX buffer and return its opcode histogram."""
    return opcode_histogram(parse_dex(data, verify_checksum=verify_checksum))
