"""Block-table snapshots, fragmentation metrics and the invariant checker."""
import csv
import io
from dataclasses import dataclass
from typing import Iterable, List, Optional

from .arena import ALIGNMENT, HEADER_SIZE, MAX_CAPACITY, Arena
from .config import ConfigError

CSV_HEADER = ("i", "address", "left_addr", "free", "size")


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class SnapshotRow:
    i: int
    address: int
    left_addr: int
    free: bool
    size: int

    def cells(self):
        return (str(self.i), hex(self.address), hex(self.left_addr),
                "yes" if self.free else "no", str(self.size))


@dataclass(frozen=True)
class FragReport:
    total_free_bytes: int
    largest_free_block: int
    external_fragmentation: int
    free_block_count: int


@dataclass(frozen=True)
class Violation:
    kind: str  # TILING | LINK_SYMMETRY | ALIGNMENT | STATE
    offset: int
    detail: str


def snapshot(arena: Arena) -> List[SnapshotRow]:
    rows = []
    left = 0
    for off in arena.blocks():
        addr = arena.user_address(off)
        rows.append(SnapshotRow(off, addr, left, arena.is_free(off), arena.size(off)))
        left = addr
    return rows


def load_snapshot(rows: Iterable[SnapshotRow], base: int, capacity: int, owner: int = 1) -> Arena:
    """Build an arena whose :func:`snapshot` equals ``rows``.

    Allocated blocks are all given ``owner``, since the table format does
    not record ownership.
    """
    rows = list(rows)
    if not rows:
        raise SnapshotError("snapshot has no rows")
    expected_i = 0
    left = 0
    for n, row in enumerate(rows):
        if row.i != expected_i:
            raise SnapshotError(f"row {n}: i={row.i}, expected {expected_i} (blocks must tile the arena)")
        if row.i % ALIGNMENT or row.size % ALIGNMENT or row.size < 0:
            raise SnapshotError(f"row {n}: offset {row.i} / size {row.size} not {ALIGNMENT}-byte aligned")
        if row.address != base + row.i + HEADER_SIZE:
            raise SnapshotError(f"row {n}: address {row.address:#x} != base + i + {HEADER_SIZE}")
        if row.left_addr != left:
            raise SnapshotError(f"row {n}: left_addr {row.left_addr:#x}, expected {left:#x}")
        expected_i = row.i + HEADER_SIZE + row.size
        left = row.address
        if expected_i > capacity:
            raise SnapshotError(f"row {n}: block ends at {expected_i}, beyond capacity {capacity}")
    if expected_i != capacity:
        raise SnapshotError(f"rows cover {expected_i} bytes, capacity is {capacity}")
    try:
        arena = Arena(capacity, base)
    except ConfigError as exc:
        raise SnapshotError(str(exc)) from exc
    prev = None
    for row in rows:
        arena.write_header(row.i, row.size, row.free, 0 if row.free else owner, prev)
        prev = row.i
    return arena


def fragmentation(arena: Arena) -> FragReport:
    total = largest = count = 0
    for off in arena.blocks():
        if arena.is_free(off):
            size = arena.size(off)
            total += size
            largest = max(largest, size)
            count += 1
    return FragReport(total, largest, total - largest, count)


def check_invariants(arena: Arena) -> List[Violation]:
    """Return every structural violation found; an empty list means ok.

    Unlike :meth:`Arena.blocks` this never raises, so it can be pointed at
    a corrupted arena.
    """
    found = []
    cap = arena.capacity
    if cap % ALIGNMENT or cap > MAX_CAPACITY:
        found.append(Violation("ALIGNMENT", 0, f"capacity {cap} invalid"))
        return found
    off = 0
    expected_prev: Optional[int] = None
    while True:
        if off > cap - HEADER_SIZE:
            found.append(Violation("TILING", off, f"header at {off} does not fit in capacity {cap}"))
            break
        size = arena.size(off)
        if off % ALIGNMENT or size % ALIGNMENT:
            found.append(Violation("ALIGNMENT", off, f"offset {off} size {size}"))
        stored_prev = arena.prev_offset(off)
        if stored_prev != expected_prev:
            found.append(Violation(
                "LINK_SYMMETRY", off,
                f"block {off} links back to {stored_prev}, previous block is {expected_prev}"))
        free_byte = (arena._words[(off >> 3) + 1] >> 32) & 0xFF
        owner = arena.owner(off)
        if free_byte > 1 or (free_byte == 1 and owner != 0):
            found.append(Violation("STATE", off, f"free flag {free_byte} with owner {owner}"))
        elif free_byte == 0 and owner == 0:
            found.append(Violation("STATE", off, "allocated block has no owner"))
        nxt = off + HEADER_SIZE + size
        if nxt > cap:
            found.append(Violation("TILING", off, f"block {off} of size {size} overruns capacity {cap}"))
            break
        if nxt == cap:
            break
        expected_prev = off
        off = nxt
    return found


def format_csv(rows: Iterable[SnapshotRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.cells())
    return buf.getvalue()


def format_table(rows: Iterable[SnapshotRow]) -> str:
    cells = [("i", "Address", "Left Addr.", "Free?", "Size")] + [r.cells() for r in rows]
    widths = [max(len(c[k]) for c in cells) for k in range(5)]
    return "".join(" | ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip() + "\n" for line in cells)


def parse_csv(text: str) -> List[SnapshotRow]:
    rows = []
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    for n, rec in enumerate(csv.reader(lines), start=1):
        if tuple(c.strip() for c in rec) == CSV_HEADER:
            continue
        if len(rec) != 5:
            raise SnapshotError(f"snapshot line {n}: expected 5 columns, got {len(rec)}")
        i, address, left, free, size = (c.strip() for c in rec)
        if free not in ("yes", "no"):
            raise SnapshotError(f"snapshot line {n}: free must be yes/no, got {free!r}")
        try:
            rows.append(SnapshotRow(int(i), int(address, 0), int(left, 0), free == "yes", int(size)))
        except ValueError as exc:
            raise SnapshotError(f"snapshot line {n}: {exc}") from exc
    return rows
