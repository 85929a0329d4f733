from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .types import LINE, RegionDecl

ZERO_LINE = bytes(LINE)


class MemoryFault(Exception):
    """Access outside every declared region or straddling a line boundary."""

    def __init__(self, address: int, size: int, reason: str):
        self.address = address
        self.size = size
        self.reason = reason
        super().__init__(f"{reason} at {address:#x} (size {size})")


def line_of(addr: int) -> int:
    return addr - addr % LINE


@dataclass
class MemoryImage:
    """Sparse byte-addressable memory of 64-byte lines.

    Unpopulated lines inside a region read as zeros. The image is mutable so
    that simulators can apply stores; use :meth:`copy` for isolation.
    """

    regions: tuple[RegionDecl, ...] = ()
    lines: dict[int, bytes] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.regions = tuple(self.regions)
        for addr, payload in self.lines.items():
            self._check_line(addr, payload)

    def _check_line(self, addr: int, payload: bytes) -> None:
        if addr % LINE:
            raise ValueError(f"line address {addr:#x} is not 64-byte aligned")
        if len(payload) != LINE:
            raise ValueError(f"line {addr:#x} payload is {len(payload)} bytes")
        if self.region_of(addr) is None:
            raise ValueError(f"line {addr:#x} lies outside every region")

    def copy(self) -> MemoryImage:
        return MemoryImage(self.regions, dict(self.lines))

    def region_of(self, addr: int) -> RegionDecl | None:
        for region in self.regions:
            if region.contains(addr):
                return region
        return None

    def check_access(self, addr: int, size: int) -> RegionDecl:
        if size <= 0 or size > LINE:
            raise MemoryFault(addr, size, "bad access size")
        if addr % LINE + size > LINE:
            raise MemoryFault(addr, size, "access straddles a line")
        region = self.region_of(addr)
        if region is None or addr + size > region.end:
            raise MemoryFault(addr, size, "out-of-region access")
        return region

    def read_line(self, line_addr: int) -> bytes:
        return self.lines.get(line_addr, ZERO_LINE)

    def write_line(self, line_addr: int, payload: bytes) -> None:
        self._check_line(line_addr, payload)
        self.lines[line_addr] = bytes(payload)

    def read(self, addr: int, size: int) -> int:
        self.check_access(addr, size)
        return extract(self.read_line(line_of(addr)), addr, size)

    def write(self, addr: int, value: int, size: int) -> bytes:
        """Store ``value`` little-endian; returns the stored bytes."""
        self.check_access(addr, size)
        base = line_of(addr)
        data = encode(value, size)
        line = bytearray(self.read_line(base))
        line[addr - base:addr - base + size] = data
        self.lines[base] = bytes(line)
        return data

    def set_word(self, addr: int, value: int, size: int = 8) -> None:
        self.write(addr, value, size)

    # text format: one populated line per row, "0xADDR: 4 x 16-byte hex"
    def to_text(self) -> str:
        rows = []
        for addr in sorted(self.lines):
            payload = self.lines[addr]
            if payload == ZERO_LINE:
                continue
            chunks = " ".join(payload[i:i + 16].hex() for i in range(0, LINE, 16))
            rows.append(f"{addr:#010x}: {chunks}")
        return "\n".join(rows) + ("\n" if rows else "")

    @classmethod
    def from_text(cls, text: str, regions: Iterable[RegionDecl]) -> MemoryImage:
        image = cls(tuple(regions))
        for lineno, raw in enumerate(text.splitlines(), 1):
            row = raw.split("#", 1)[0].strip()
            if not row:
                continue
            m = re.fullmatch(r"(0x[0-9a-fA-F]+|\d+)\s*:\s*((?:[0-9a-fA-F]{32}\s*){4})", row)
            if not m:
                raise ValueError(f"memory image line {lineno}: malformed row")
            addr = int(m.group(1), 0)
            payload = bytes.fromhex("".join(m.group(2).split()))
            try:
                image.write_line(addr, payload)
            except ValueError as exc:
                raise ValueError(f"memory image line {lineno}: {exc}") from None
        return image

    def populated(self) -> Mapping[int, bytes]:
        return self.lines


def extract(line: bytes, addr: int, size: int) -> int:
    off = addr % LINE
    return int.from_bytes(line[off:off + min(size, 8)], "little")


def encode(value: int, size: int) -> bytes:
    value &= (1 << 64) - 1
    head = value.to_bytes(8, "little")[:min(size, 8)]
    return head + bytes(size - len(head))
