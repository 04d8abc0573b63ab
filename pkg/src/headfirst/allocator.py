"""Best-fit allocation with space-fitting over a simulated :class:`Arena`.

The free functions here operate on an arena directly and are not
synchronized.  :class:`Allocator` is the thread-safe entry point that
everything outside this module should use.
"""
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .arena import ALIGNMENT, HEADER_SIZE, Arena, init_arena
from .config import AllocatorConfig, Mode
from .inspector import check_invariants, fragmentation, snapshot


class AllocStatus(Enum):
    OK = "ok"
    OUT_OF_MEMORY = "out-of-memory"
    INVALID_REQUEST = "invalid-request"


class FreeStatus(Enum):
    FREED = "FREED"
    UNALLOCATED = "UNALLOCATED"
    SEGFAULT = "SEGFAULT"


@dataclass(frozen=True)
class AllocResult:
    status: AllocStatus
    block: Optional[int] = None
    user_addr: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.status is AllocStatus.OK


def double_align(n: int) -> int:
    return (n + ALIGNMENT - 1) & ~(ALIGNMENT - 1)


def find_best_fit(arena: Arena, req: int) -> Optional[int]:
    """Smallest free block with at least ``req`` bytes; lowest offset wins ties."""
    words = arena._words
    cap = arena.capacity
    best = None
    best_size = None
    off = 0
    while off < cap:
        w = off >> 3
        size = words[w]
        if (words[w + 1] >> 32) & 0xFF and size >= req and (best is None or size < best_size):
            best, best_size = off, size
            if size == req:
                break
        off += HEADER_SIZE + size
    return best


def find_head_region(arena: Arena, req: int) -> Optional[int]:
    """The free block nearest the head of the chain, if it can hold ``req``."""
    words = arena._words
    cap = arena.capacity
    off = 0
    while off < cap:
        w = off >> 3
        if (words[w + 1] >> 32) & 0xFF:
            return off if words[w] >= req else None
        off += HEADER_SIZE + words[w]
    return None


def stitch(arena: Arena, req: int) -> Optional[int]:
    """Coalesce every run of adjacent free blocks, walking from the last
    block back to the first, then retry the best-fit search."""
    off = arena.last_block()
    while True:
        prev = arena.prev_block(off)
        if prev is None:
            break
        if arena.is_free(off) and arena.is_free(prev):
            nxt = arena.next_block(off)
            arena.set_size(prev, arena.size(prev) + HEADER_SIZE + arena.size(off))
            if nxt is not None:
                arena.set_prev(nxt, prev)
        off = prev
    return find_best_fit(arena, req)


def chunk_up(arena: Arena, block: int, req: int) -> int:
    """Split a free block in two halves when the first half still fits ``req``."""
    if not arena.is_free(block):
        return block
    size = arena.size(block)
    half = ((size - HEADER_SIZE) // 2) & ~(ALIGNMENT - 1)
    if half < req or half < ALIGNMENT:
        return block
    nxt = arena.next_block(block)
    second = block + HEADER_SIZE + half
    arena.set_size(block, half)
    arena.write_header(second, size - HEADER_SIZE - half, True, 0, block)
    if nxt is not None:
        arena.set_prev(nxt, second)
    return block


def space_fit(arena: Arena, block: int, req: int, threshold_multiplier: int = 3) -> int:
    """Hand the bytes of ``block`` beyond ``req`` to a free neighbour, or carve
    them into a new free block below it.  Returns the (possibly moved) block."""
    size = arena.size(block)
    extra = size - req
    if extra <= 0:
        return block
    free = arena.is_free(block)
    owner = arena.owner(block)
    prev = arena.prev_block(block)
    nxt = arena.next_block(block)

    if nxt is not None and arena.is_free(nxt):
        after = arena.next_block(nxt)
        moved = nxt - extra
        arena.write_header(moved, arena.size(nxt) + extra, True, 0, block)
        arena.set_size(block, req)
        if after is not None:
            arena.set_prev(after, moved)
        return block

    if prev is not None and arena.is_free(prev):
        arena.set_size(prev, arena.size(prev) + extra)
        moved = block + extra
        arena.write_header(moved, req, free, owner, prev)
        if nxt is not None:
            arena.set_prev(nxt, moved)
        return moved

    if extra > threshold_multiplier * HEADER_SIZE:
        shrunk = block + extra
        arena.write_header(block, extra - HEADER_SIZE, True, 0, prev)
        arena.write_header(shrunk, req, free, owner, block)
        if nxt is not None:
            arena.set_prev(nxt, shrunk)
        return shrunk

    return block


def release(arena: Arena, user_addr: Optional[int], caller: int, is_forced: bool = False) -> FreeStatus:
    if user_addr is None:
        return FreeStatus.UNALLOCATED
    block = arena.find_block_by_user_address(user_addr)
    if block is None or arena.is_free(block):
        return FreeStatus.UNALLOCATED
    if arena.owner(block) != caller and not is_forced:
        return FreeStatus.SEGFAULT

    arena.set_state(block, True, 0)
    prev = arena.prev_block(block)
    if prev is not None and arena.is_free(prev):
        nxt = arena.next_block(block)
        arena.set_size(prev, arena.size(prev) + HEADER_SIZE + arena.size(block))
        if nxt is not None:
            arena.set_prev(nxt, prev)
        block = prev
    nxt = arena.next_block(block)
    if nxt is not None and arena.is_free(nxt):
        after = arena.next_block(nxt)
        arena.set_size(block, arena.size(block) + HEADER_SIZE + arena.size(nxt))
        if after is not None:
            arena.set_prev(after, block)
    return FreeStatus.FREED


class Allocator:
    """Thread-safe front end over one arena.

    ``mode`` picks between the two ``Create`` variants: non-head-first runs
    a full best-fit search and splits the chosen block with :func:`chunk_up`
    before space-fitting; head-first takes the free region at the head of
    the chain when it fits and space-fits it directly, so allocations are
    carved from its high end and the free region stays at the head.
    """

    def __init__(self, config: AllocatorConfig = AllocatorConfig(), arena: Optional[Arena] = None):
        self.config = config
        self.mode = config.mode
        self.arena = arena if arena is not None else init_arena(config)
        self.lock = threading.Lock()

    def find(self, req: int) -> Optional[int]:
        if self.mode is Mode.HEAD_FIRST:
            block = find_head_region(self.arena, req)
            if block is not None:
                return block
        return find_best_fit(self.arena, req)

    def create(self, req_size: int, owner: int) -> AllocResult:
        if req_size < 1 or not 0 < owner <= 0xFFFFFFFF:
            return AllocResult(AllocStatus.INVALID_REQUEST)
        req = double_align(req_size)
        arena = self.arena
        with self.lock:
            block = self.find(req)
            if block is None:
                block = stitch(arena, req)
            if block is None:
                return AllocResult(AllocStatus.OUT_OF_MEMORY)
            if arena.size(block) > req:
                if self.mode is Mode.NON_HEAD_FIRST:
                    block = chunk_up(arena, block, req)
                block = space_fit(arena, block, req, self.config.carve_threshold_multiplier)
            arena.set_state(block, False, owner)
            return AllocResult(AllocStatus.OK, block, arena.user_address(block))

    def free(self, user_addr: Optional[int], caller: int, is_forced: bool = False) -> FreeStatus:
        with self.lock:
            return release(self.arena, user_addr, caller, is_forced)

    def stitch(self, req: int = ALIGNMENT) -> Optional[int]:
        with self.lock:
            return stitch(self.arena, double_align(req))

    def snapshot(self):
        with self.lock:
            return snapshot(self.arena)

    def fragmentation(self):
        with self.lock:
            return fragmentation(self.arena)

    def check(self):
        with self.lock:
            return check_invariants(self.arena)
