"""Simulated arena and the in-band block header layout.

Every block is a 16-byte header followed by its addressable bytes.  The
header lives inside the arena's byte region as two little-endian words::

    bytes 0..7    size (addressable bytes, header excluded)
    bytes 8..11   owner id (0 = unowned)
    byte  12      free flag
    bytes 13..15  offset of the previous header, in 8-byte units

Blocks are referred to by the byte offset of their header (``int``);
``None`` stands for "no block".
"""
from typing import Iterator, Optional

from .config import AllocatorConfig, ConfigError, Layout

HEADER_SIZE = 16
ALIGNMENT = 8

_PREV_NONE = 0xFFFFFF
_OWNER_MASK = 0xFFFFFFFF
# largest offset the 24-bit back-link can encode
MAX_CAPACITY = _PREV_NONE * ALIGNMENT


class CorruptionError(RuntimeError):
    """The block chain no longer satisfies its structural invariants."""


class Arena:
    def __init__(self, capacity: int, base_address: int = 0):
        if capacity <= 0 or capacity % ALIGNMENT:
            raise ConfigError(f"capacity {capacity} must be a positive multiple of {ALIGNMENT}")
        if capacity > MAX_CAPACITY:
            raise ConfigError(f"capacity {capacity} exceeds {MAX_CAPACITY}")
        self.capacity = capacity
        self.base_address = base_address
        self.storage = bytearray(capacity)
        self._words = memoryview(self.storage).cast("Q")

    # header access

    def size(self, off: int) -> int:
        return self._words[off >> 3]

    def is_free(self, off: int) -> bool:
        return bool((self._words[(off >> 3) + 1] >> 32) & 0xFF)

    def owner(self, off: int) -> int:
        return self._words[(off >> 3) + 1] & _OWNER_MASK

    def prev_offset(self, off: int) -> Optional[int]:
        units = self._words[(off >> 3) + 1] >> 40
        return None if units == _PREV_NONE else units << 3

    def write_header(self, off: int, size: int, free: bool, owner: int, prev: Optional[int]):
        units = _PREV_NONE if prev is None else prev >> 3
        w = off >> 3
        self._words[w] = size
        self._words[w + 1] = (owner & _OWNER_MASK) | (int(free) << 32) | (units << 40)

    def set_size(self, off: int, size: int):
        self._words[off >> 3] = size

    def set_prev(self, off: int, prev: Optional[int]):
        units = _PREV_NONE if prev is None else prev >> 3
        w = (off >> 3) + 1
        self._words[w] = (self._words[w] & 0xFF_FFFFFFFF) | (units << 40)

    def set_state(self, off: int, free: bool, owner: int):
        w = (off >> 3) + 1
        self._words[w] = (self._words[w] & ~0xFF_FFFFFFFF) | (owner & _OWNER_MASK) | (int(free) << 32)

    # navigation

    def user_address(self, off: int) -> int:
        return self.base_address + off + HEADER_SIZE

    def next_block(self, off: int) -> Optional[int]:
        nxt = off + HEADER_SIZE + self._words[off >> 3]
        if nxt == self.capacity:
            return None
        if nxt > self.capacity - HEADER_SIZE:
            raise CorruptionError(f"block at {off} overruns the arena (next header at {nxt})")
        return nxt

    def prev_block(self, off: int) -> Optional[int]:
        prev = self.prev_offset(off)
        if prev is None:
            return None
        if prev >= off or prev > self.capacity - HEADER_SIZE:
            raise CorruptionError(f"block at {off} has invalid back-link {prev}")
        return prev

    def blocks(self) -> Iterator[int]:
        """Walk the chain from the first header to the end of the arena."""
        off = 0
        while off is not None:
            yield off
            off = self.next_block(off)

    def last_block(self) -> int:
        off = 0
        for off in self.blocks():
            pass
        return off

    def find_block_by_user_address(self, addr: Optional[int]) -> Optional[int]:
        if addr is None:
            return None
        target = addr - self.base_address - HEADER_SIZE
        if target < 0 or target % ALIGNMENT or target > self.capacity - HEADER_SIZE:
            return None
        words = self._words
        off = 0
        cap = self.capacity
        while off < target:
            off += HEADER_SIZE + words[off >> 3]
        if off == target and off < cap:
            return off
        return None


def two_block_sizes(capacity: int):
    half = capacity // 2
    return half - 2 * HEADER_SIZE + ALIGNMENT, half - ALIGNMENT


def init_arena(config: AllocatorConfig) -> Arena:
    capacity = config.capacity
    if capacity < 2 * HEADER_SIZE + 16:
        raise ConfigError(f"capacity {capacity} is below the minimum of {2 * HEADER_SIZE + 16}")
    arena = Arena(capacity, config.base_address)
    if config.layout is Layout.SINGLE_BLOCK:
        arena.write_header(0, capacity - HEADER_SIZE, True, 0, None)
    elif config.layout is Layout.TWO_BLOCK:
        if capacity % (2 * ALIGNMENT):
            raise ConfigError("two-block layout needs a capacity that is a multiple of 16")
        first, second = two_block_sizes(capacity)
        arena.write_header(0, first, True, 0, None)
        arena.write_header(HEADER_SIZE + first, second, True, 0, 0)
    else:
        raise ConfigError(f"unknown layout {config.layout!r}")
    return arena
