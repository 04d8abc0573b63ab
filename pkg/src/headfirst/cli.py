"""Command-line front end: trace replay, fresh snapshots and benchmarks.

Exit codes: 0 success, 1 usage or parse error, 2 invariant violation.
"""
import argparse
import csv
import re
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional

from .allocator import Allocator, FreeStatus
from .arena import CorruptionError
from .bench import WorkloadConfig, compare_modes, comparison_csv, reports_csv, run_workload
from .config import AllocatorConfig, ConfigError, Layout, Mode
from .inspector import SnapshotError, format_csv, format_table, load_snapshot, parse_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2

_SIZE_RE = re.compile(r"^\s*(\d+)\s*(b|k|kb|kib|m|mb|mib|g|gb|gib)?\s*$", re.IGNORECASE)
_UNITS = {"b": 1, "k": 1 << 10, "kb": 1 << 10, "kib": 1 << 10,
          "m": 1 << 20, "mb": 1 << 20, "mib": 1 << 20,
          "g": 1 << 30, "gb": 1 << 30, "gib": 1 << 30}


class UsageError(Exception):
    pass


class TraceError(Exception):
    pass


def parse_size(text: str) -> int:
    m = _SIZE_RE.match(text)
    if not m:
        raise ValueError(f"bad size {text!r}")
    return int(m.group(1)) * _UNITS[(m.group(2) or "b").lower()]


def _size_arg(text):
    try:
        return parse_size(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _hex_arg(text):
    try:
        return int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad hex address {text!r}")


def _counts_arg(text):
    try:
        counts = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad request list {text!r}")
    if not counts or min(counts) < 1:
        raise argparse.ArgumentTypeError("request counts must be positive")
    return counts


# trace commands

@dataclass(frozen=True)
class AllocCmd:
    line: int
    tag: str
    size: int
    owner: int


@dataclass(frozen=True)
class FreeCmd:
    line: int
    tag: Optional[str]
    owner: int
    forced: bool


@dataclass(frozen=True)
class LoadCmd:
    line: int
    path: str
    base: int
    capacity: int


@dataclass(frozen=True)
class DumpCmd:
    line: int


@dataclass(frozen=True)
class CheckCmd:
    line: int


def parse_trace(text: str) -> list:
    commands = []
    for n, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        op, args = tokens[0].lower(), tokens[1:]
        try:
            if op == "alloc" and len(args) == 3:
                commands.append(AllocCmd(n, args[0], int(args[1]), int(args[2])))
            elif op == "free" and len(args) in (2, 3):
                if len(args) == 3 and args[2].lower() != "force":
                    raise ValueError(f"expected 'force', got {args[2]!r}")
                tag = None if args[0].lower() == "null" else args[0]
                commands.append(FreeCmd(n, tag, int(args[1]), len(args) == 3))
            elif op == "load" and len(args) == 3:
                commands.append(LoadCmd(n, args[0], int(args[1], 16), parse_size(args[2])))
            elif op == "dump" and not args:
                commands.append(DumpCmd(n))
            elif op == "check" and not args:
                commands.append(CheckCmd(n))
            else:
                raise ValueError(f"cannot parse {raw.strip()!r}")
        except ValueError as exc:
            raise TraceError(f"line {n}: {exc}") from None
    return commands


class Replayer:
    def __init__(self, config: AllocatorConfig, out, err, fmt: str = "csv",
                 load_owner: int = 1, trace_dir: Path = Path(".")):
        self.config = config
        self.allocator = Allocator(config)
        self.out = out
        self.err = err
        self.fmt = fmt
        self.load_owner = load_owner
        self.trace_dir = trace_dir
        self.addresses = {}  # tag -> user address (None after a failed alloc)
        self.live = set()

    def run(self, commands) -> int:
        for cmd in commands:
            code = self.execute(cmd)
            if code != EXIT_OK:
                return code
        return EXIT_OK

    def execute(self, cmd) -> int:
        if isinstance(cmd, AllocCmd):
            if cmd.tag in self.live:
                raise TraceError(f"line {cmd.line}: tag {cmd.tag!r} is already live")
            res = self.allocator.create(cmd.size, cmd.owner)
            self.addresses[cmd.tag] = res.user_addr
            if res.ok:
                self.live.add(cmd.tag)
                self.err.write(f"line {cmd.line}: alloc {cmd.tag} {cmd.size} -> {res.status.value} "
                               f"i={res.block} {res.user_addr:#x}\n")
            else:
                self.err.write(f"line {cmd.line}: alloc {cmd.tag} {cmd.size} -> {res.status.value}\n")
        elif isinstance(cmd, FreeCmd):
            if cmd.tag is None:
                addr = None
            elif cmd.tag in self.addresses:
                addr = self.addresses[cmd.tag]
            else:
                raise TraceError(f"line {cmd.line}: unknown tag {cmd.tag!r}")
            status = self.allocator.free(addr, cmd.owner, cmd.forced)
            if status is FreeStatus.FREED:
                self.live.discard(cmd.tag)
            self.err.write(f"line {cmd.line}: free {cmd.tag or 'null'} -> {status.value}\n")
        elif isinstance(cmd, LoadCmd):
            path = Path(cmd.path)
            if not path.is_absolute():
                path = self.trace_dir / path
            try:
                rows = parse_csv(path.read_text(encoding="utf-8"))
                arena = load_snapshot(rows, cmd.base, cmd.capacity, self.load_owner)
            except (OSError, SnapshotError) as exc:
                raise TraceError(f"line {cmd.line}: {exc}") from None
            self.config = replace(self.config, capacity=cmd.capacity, base_address=cmd.base)
            self.allocator = Allocator(self.config, arena)
            self.addresses.clear()
            self.live.clear()
        elif isinstance(cmd, DumpCmd):
            try:
                rows = self.allocator.snapshot()
            except CorruptionError as exc:
                self.err.write(f"line {cmd.line}: {exc}\n")
                return EXIT_INVARIANT
            self.out.write(format_table(rows) if self.fmt == "table" else format_csv(rows))
        elif isinstance(cmd, CheckCmd):
            violations = self.allocator.check()
            for v in violations:
                self.err.write(f"line {cmd.line}: {v.kind} at {v.offset}: {v.detail}\n")
            if violations:
                return EXIT_INVARIANT
        return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_arena_flags(p, mode_default: Optional[str] = "non-head-first"):
    p.add_argument("--mode", choices=[m.value for m in Mode], default=mode_default)
    p.add_argument("--arena-size", type=_size_arg, default=16 << 20, metavar="N[KiB|MiB]")
    p.add_argument("--layout", choices=[lay.value for lay in Layout], default=Layout.SINGLE_BLOCK.value)
    p.add_argument("--base", type=_hex_arg, default=0, metavar="HEX")
    p.add_argument("--format", choices=["csv", "table"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="headfirst", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("replay", help="replay an alloc/free trace file")
    p.add_argument("trace", help="trace file, or - for stdin")
    p.add_argument("--load-owner", type=int, default=1,
                   help="owner id given to allocated blocks of loaded snapshots")
    _add_arena_flags(p)

    p = sub.add_parser("init", help="print the snapshot of a freshly initialized arena")
    _add_arena_flags(p)

    p = sub.add_parser("bench", help="run the randomized workload benchmark")
    _add_arena_flags(p, mode_default=None)
    p.add_argument("--requests", type=_counts_arg, default=[10000], metavar="N[,N...]")
    p.add_argument("--max-alloc", type=int, default=1024)
    p.add_argument("--alloc-probability", type=float, default=0.5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--compare", action="store_true", help="run both modes and report t_imp_pct")
    p.add_argument("--same-seed", action="store_true", help="replay the same seed in every repetition")
    p.add_argument("--omit-time", action="store_true",
                   help="leave timing columns empty so output is reproducible")
    return parser


def _arena_config(args, mode: Mode) -> AllocatorConfig:
    return AllocatorConfig(mode=mode, capacity=args.arena_size, layout=Layout(args.layout),
                           base_address=args.base)


def _cmd_replay(args, out, err) -> int:
    config = _arena_config(args, Mode(args.mode))
    if args.trace == "-":
        text, trace_dir = sys.stdin.read(), Path(".")
    else:
        path = Path(args.trace)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(str(exc))
        trace_dir = path.parent
    commands = parse_trace(text)
    return Replayer(config, out, err, args.format, args.load_owner, trace_dir).run(commands)


def _cmd_init(args, out, err) -> int:
    rows = Allocator(_arena_config(args, Mode(args.mode))).snapshot()
    out.write(format_table(rows) if args.format == "table" else format_csv(rows))
    return EXIT_OK


def _bench_table(csv_text: str) -> str:
    rows = list(csv.reader(csv_text.splitlines()))
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    return "".join(" | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


def _cmd_bench(args, out, err) -> int:
    if args.compare and args.mode is not None:
        raise UsageError("--compare runs both modes; drop --mode")
    base = _arena_config(args, Mode(args.mode or Mode.NON_HEAD_FIRST.value))
    try:
        config = WorkloadConfig(
            requests=args.requests[0],
            max_alloc_bytes=args.max_alloc,
            alloc_probability=args.alloc_probability,
            workers=args.workers,
            seed=args.seed,
            repetitions=args.reps,
            arena=base,
            reseed_repetitions=not args.same_seed,
        )
    except ConfigError as exc:
        raise UsageError(str(exc))
    with_time = not args.omit_time
    if args.compare:
        text = comparison_csv(compare_modes(config, args.requests), with_time)
    else:
        mode = Mode(args.mode or Mode.NON_HEAD_FIRST.value)
        reports = []
        for n in args.requests:
            reports.append(run_workload(mode, replace(config, requests=n)))
        text = reports_csv(reports, with_time)
    out.write(_bench_table(text) if args.format == "table" else text)
    return EXIT_OK


def main(argv: Optional[List[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    handler = {"replay": _cmd_replay, "init": _cmd_init, "bench": _cmd_bench}[args.command]
    try:
        return handler(args, out, err)
    except (UsageError, TraceError, ConfigError) as exc:
        err.write(f"headfirst: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
