"""Simulated-heap best-fit allocator with space-fitting, in head-first and
non-head-first modes."""
from .allocator import (
    AllocResult,
    AllocStatus,
    Allocator,
    FreeStatus,
    chunk_up,
    double_align,
    find_best_fit,
    find_head_region,
    release,
    space_fit,
    stitch,
)
from .arena import ALIGNMENT, HEADER_SIZE, Arena, CorruptionError, init_arena
from .config import AllocatorConfig, ConfigError, Layout, Mode
from .inspector import (
    FragReport,
    SnapshotError,
    SnapshotRow,
    Violation,
    check_invariants,
    format_csv,
    format_table,
    fragmentation,
    load_snapshot,
    parse_csv,
    snapshot,
)

__version__ = "0.1.0"
