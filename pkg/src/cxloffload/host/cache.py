from __future__ import annotations

from collections import OrderedDict

from ..ir.types import LINE


class L1Cache:
    """Set-associative, LRU, write-through/no-allocate data cache of 64-byte lines."""

    def __init__(self, size: int = 32768, assoc: int = 8):
        if size <= 0 or assoc <= 0 or size % (LINE * assoc):
            raise ValueError(f"L1 size {size} is not a multiple of {LINE}*{assoc}")
        self.size = size
        self.assoc = assoc
        self.num_sets = size // (LINE * assoc)
        self.sets: list[OrderedDict[int, bytes]] = [OrderedDict() for _ in range(self.num_sets)]

    def set_of(self, line: int) -> int:
        return (line // LINE) % self.num_sets

    def lookup(self, line: int) -> bytes | None:
        """Payload of a resident line (marks it most recently used)."""
        s = self.sets[self.set_of(line)]
        if line in s:
            s.move_to_end(line)
            return s[line]
        return None

    def contains(self, line: int) -> bool:
        return line in self.sets[self.set_of(line)]

    def fill(self, line: int, payload: bytes) -> int | None:
        """Insert as most recently used; returns the evicted line, if any."""
        s = self.sets[self.set_of(line)]
        victim = None
        if line in s:
            s.move_to_end(line)
        elif len(s) >= self.assoc:
            victim, _ = s.popitem(last=False)
        s[line] = bytes(payload)
        return victim

    def update(self, line: int, payload: bytes) -> None:
        s = self.sets[self.set_of(line)]
        if line in s:
            s[line] = bytes(payload)
            s.move_to_end(line)

    def invalidate(self, line: int) -> None:
        self.sets[self.set_of(line)].pop(line, None)

    def resident(self) -> list[int]:
        return sorted(line for s in self.sets for line in s)

    def occupancy(self) -> int:
        return sum(len(s) for s in self.sets)
