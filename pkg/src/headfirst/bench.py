"""Randomized allocate/free workloads and the head-first vs non-head-first
timing comparison."""
import csv
import gc
import io
import random
import threading
import time
from dataclasses import dataclass, field, replace
from statistics import mean
from typing import List, Optional, Sequence, Tuple, Union

from .allocator import Allocator, FreeStatus
from .arena import init_arena
from .config import AllocatorConfig, ConfigError, Mode
from .inspector import FragReport

REPORT_FIELDS = ("mode", "requests", "t_sec", "malloc_pct", "free_pct", "ext_frag")
COMPARE_FIELDS = REPORT_FIELDS + ("t_imp_pct",)


@dataclass(frozen=True)
class WorkloadConfig:
    requests: int = 10000
    max_alloc_bytes: int = 1024
    alloc_probability: float = 0.5
    workers: int = 1
    seed: int = 0
    repetitions: int = 5
    arena: AllocatorConfig = AllocatorConfig()
    # False: every repetition replays ``seed``, so spread across repetitions
    # is timing noise only
    reseed_repetitions: bool = True

    def __post_init__(self):
        if self.requests < 1:
            raise ConfigError("requests must be >= 1")
        if self.max_alloc_bytes < 1:
            raise ConfigError("max_alloc_bytes must be >= 1")
        if not 0 < self.alloc_probability < 1:
            raise ConfigError("alloc_probability must be in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")


@dataclass(frozen=True)
class Alloc:
    size: int
    owner: int


@dataclass(frozen=True)
class Free:
    # (user address, recorded owner) or None when nothing was live
    target: Optional[Tuple[int, int]]


Request = Union[Alloc, Free]


class LiveRegistry:
    """Live allocations shared by all workers; O(1) add and random removal."""

    def __init__(self):
        self._items: List[Tuple[int, int]] = []
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._items)

    def add(self, addr: int, owner: int):
        with self._lock:
            self._items.append((addr, owner))

    def pop_random(self, rng: random.Random) -> Optional[Tuple[int, int]]:
        with self._lock:
            items = self._items
            if not items:
                return None
            k = rng.randrange(len(items))
            items[k], items[-1] = items[-1], items[k]
            return items.pop()


class RequestStream:
    """Seeded source of requests shared by all workers."""

    def __init__(self, seed: int, alloc_probability: float = 0.5, max_alloc_bytes: int = 1024):
        self.rng = random.Random(seed)
        self.alloc_probability = alloc_probability
        self.max_alloc_bytes = max_alloc_bytes
        self.lock = threading.Lock()

    def generate_request(self, registry: LiveRegistry, owner: int = 1) -> Request:
        with self.lock:
            rng = self.rng
            if rng.random() < self.alloc_probability:
                return Alloc(rng.randint(1, self.max_alloc_bytes), owner)
            return Free(registry.pop_random(rng))


@dataclass(frozen=True)
class RepetitionResult:
    seed: int
    wall_time_seconds: float
    allocs: int
    allocs_ok: int
    frees: int
    frees_ok: int
    fragmentation: FragReport
    violations: int


@dataclass(frozen=True)
class BenchReport:
    mode: Mode
    requests: int
    wall_time_seconds: float
    malloc_success_pct: float
    free_success_pct: float
    external_fragmentation_bytes: float
    repetitions: List[RepetitionResult] = field(default_factory=list)

    @classmethod
    def aggregate(cls, mode: Mode, requests: int, reps: Sequence[RepetitionResult]) -> "BenchReport":
        allocs = sum(r.allocs for r in reps)
        frees = sum(r.frees for r in reps)
        return cls(
            mode=mode,
            requests=requests,
            wall_time_seconds=mean(r.wall_time_seconds for r in reps),
            malloc_success_pct=100.0 * sum(r.allocs_ok for r in reps) / allocs if allocs else 100.0,
            free_success_pct=100.0 * sum(r.frees_ok for r in reps) / frees if frees else 100.0,
            external_fragmentation_bytes=mean(r.fragmentation.external_fragmentation for r in reps),
            repetitions=list(reps),
        )


@dataclass(frozen=True)
class ComparisonRow:
    requests: int
    non_head_first: BenchReport
    head_first: BenchReport

    @property
    def t_imp_pct(self) -> float:
        t_nhf = self.non_head_first.wall_time_seconds
        return 100.0 * (t_nhf - self.head_first.wall_time_seconds) / t_nhf


@dataclass(frozen=True)
class ComparisonReport:
    rows: List[ComparisonRow]

    @property
    def mean_t_imp_pct(self) -> float:
        return mean(row.t_imp_pct for row in self.rows)

    @property
    def total_time_imp_pct(self) -> float:
        t_nhf = sum(row.non_head_first.wall_time_seconds for row in self.rows)
        t_hf = sum(row.head_first.wall_time_seconds for row in self.rows)
        return 100.0 * (t_nhf - t_hf) / t_nhf


def _worker(allocator, stream, registry, counter, owner, tally):
    allocs = allocs_ok = frees = frees_ok = 0
    while True:
        with counter["lock"]:
            if counter["left"] == 0:
                break
            counter["left"] -= 1
        req = stream.generate_request(registry, owner)
        if isinstance(req, Alloc):
            allocs += 1
            res = allocator.create(req.size, req.owner)
            if res.ok:
                allocs_ok += 1
                registry.add(res.user_addr, req.owner)
        else:
            frees += 1
            if req.target is None:
                status = allocator.free(None, owner)
            else:
                addr, recorded_owner = req.target
                status = allocator.free(addr, recorded_owner)
            if status is FreeStatus.FREED:
                frees_ok += 1
    tally.append((allocs, allocs_ok, frees, frees_ok))


def _timed_run(allocator, stream, registry, counter, workers, tally) -> float:
    if workers == 1:
        start = time.perf_counter()
        _worker(allocator, stream, registry, counter, 1, tally)
        return time.perf_counter() - start
    threads = [
        threading.Thread(target=_worker, args=(allocator, stream, registry, counter, k + 1, tally))
        for k in range(workers)
    ]
    start = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return time.perf_counter() - start


def run_repetition(mode: Mode, config: WorkloadConfig, rep: int = 0) -> RepetitionResult:
    """One fresh arena and ``config.requests`` requests.

    The seed is ``config.seed + rep`` unless reseeding is turned off.  The
    garbage collector is suspended while timing, as :mod:`timeit` does.
    """
    seed = config.seed + rep if config.reseed_repetitions else config.seed
    allocator = Allocator(replace(config.arena, mode=mode))
    stream = RequestStream(seed, config.alloc_probability, config.max_alloc_bytes)
    registry = LiveRegistry()
    counter = {"lock": threading.Lock(), "left": config.requests}
    tally: list = []

    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        elapsed = _timed_run(allocator, stream, registry, counter, config.workers, tally)
    finally:
        if gc_was_enabled:
            gc.enable()

    allocs, allocs_ok, frees, frees_ok = (sum(col) for col in zip(*tally))
    return RepetitionResult(
        seed=seed,
        wall_time_seconds=elapsed,
        allocs=allocs,
        allocs_ok=allocs_ok,
        frees=frees,
        frees_ok=frees_ok,
        fragmentation=allocator.fragmentation(),
        violations=len(allocator.check()),
    )


def _validate(config: WorkloadConfig):
    # raises ConfigError before any timing starts
    init_arena(config.arena)


def run_workload(mode: Mode, config: WorkloadConfig) -> BenchReport:
    _validate(config)
    reps = [run_repetition(mode, config, k) for k in range(config.repetitions)]
    return BenchReport.aggregate(mode, config.requests, reps)


def compare_modes(config: WorkloadConfig, request_counts: Sequence[int]) -> ComparisonReport:
    """Run both modes on identical seeds for every request count.

    Repetitions of the two modes are interleaved so slow drift in machine
    load hits both sides alike.
    """
    _validate(config)
    rows = []
    for n in request_counts:
        cfg = replace(config, requests=n)
        nhf, hf = [], []
        for k in range(cfg.repetitions):
            nhf.append(run_repetition(Mode.NON_HEAD_FIRST, cfg, k))
            hf.append(run_repetition(Mode.HEAD_FIRST, cfg, k))
        rows.append(ComparisonRow(
            n,
            BenchReport.aggregate(Mode.NON_HEAD_FIRST, n, nhf),
            BenchReport.aggregate(Mode.HEAD_FIRST, n, hf),
        ))
    return ComparisonReport(rows)


def _report_cells(report: BenchReport, with_time: bool):
    return [
        report.mode.value,
        report.requests,
        f"{report.wall_time_seconds:.3f}" if with_time else "",
        f"{report.malloc_success_pct:.2f}",
        f"{report.free_success_pct:.2f}",
        f"{report.external_fragmentation_bytes:.2f}",
    ]


def reports_csv(reports: Sequence[BenchReport], with_time: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for report in reports:
        writer.writerow(_report_cells(report, with_time))
    return buf.getvalue()


def comparison_csv(comparison: ComparisonReport, with_time: bool = True) -> str:
    """Two rows per request count; ``t_imp_pct`` sits on the head-first row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARE_FIELDS)
    for row in comparison.rows:
        writer.writerow(_report_cells(row.non_head_first, with_time) + [""])
        imp = f"{row.t_imp_pct:.2f}" if with_time else ""
        writer.writerow(_report_cells(row.head_first, with_time) + [imp])
    return buf.getvalue()
