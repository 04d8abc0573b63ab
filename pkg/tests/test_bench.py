import csv
import random
from dataclasses import replace

import pytest

from headfirst import AllocatorConfig, ConfigError, Mode
from headfirst.bench import (
    COMPARE_FIELDS,
    REPORT_FIELDS,
    Alloc,
    BenchReport,
    ComparisonReport,
    ComparisonRow,
    Free,
    LiveRegistry,
    RequestStream,
    WorkloadConfig,
    compare_modes,
    comparison_csv,
    reports_csv,
    run_repetition,
    run_workload,
)

SMALL = WorkloadConfig(requests=2000, repetitions=2, seed=3, arena=AllocatorConfig(capacity=256 * 1024))


def draw(stream, registry, k):
    return [stream.generate_request(registry) for _ in range(k)]


def test_same_seed_same_stream():
    a = draw(RequestStream(42), LiveRegistry(), 200)
    b = draw(RequestStream(42), LiveRegistry(), 200)
    assert a == b
    assert a != draw(RequestStream(43), LiveRegistry(), 200)


def test_alloc_sizes_in_range():
    reqs = draw(RequestStream(1, max_alloc_bytes=17), LiveRegistry(), 2000)
    sizes = {r.size for r in reqs if isinstance(r, Alloc)}
    assert sizes == set(range(1, 18))


def test_free_on_empty_registry_has_null_target():
    stream = RequestStream(0, alloc_probability=0.01)
    reqs = draw(stream, LiveRegistry(), 50)
    assert any(r == Free(None) for r in reqs)


def test_null_free_counts_as_failed():
    # free-heavy stream: most frees find the registry empty
    config = WorkloadConfig(requests=400, alloc_probability=0.05, repetitions=1)
    rep = run_repetition(Mode.NON_HEAD_FIRST, config)
    assert rep.allocs_ok == rep.allocs and rep.frees_ok <= rep.allocs_ok
    assert rep.frees > rep.allocs
    report = BenchReport.aggregate(Mode.NON_HEAD_FIRST, 400, [rep])
    assert report.free_success_pct == pytest.approx(100.0 * rep.frees_ok / rep.frees)
    assert report.free_success_pct < 20.0


def test_alloc_free_balance():
    stream, registry = RequestStream(7), LiveRegistry()
    n = 100_000
    allocs = sum(isinstance(r, Alloc) for r in draw(stream, registry, n))
    assert abs(allocs / n - 0.5) <= 0.01


def test_registry_pops_each_item_once():
    registry, rng = LiveRegistry(), random.Random(0)
    for k in range(100):
        registry.add(k, 1)
    popped = [registry.pop_random(rng) for _ in range(100)]
    assert sorted(addr for addr, _ in popped) == list(range(100))
    assert registry.pop_random(rng) is None


@pytest.mark.parametrize("mode", list(Mode))
def test_accounting_and_final_invariants(mode):
    report = run_workload(mode, SMALL)
    for rep in report.repetitions:
        assert rep.allocs + rep.frees == SMALL.requests
        assert rep.violations == 0
        assert rep.wall_time_seconds > 0
    assert 0 <= report.malloc_success_pct <= 100 and 0 <= report.free_success_pct <= 100
    assert [rep.seed for rep in report.repetitions] == [3, 4]


def test_single_worker_reproducible_on_tiny_arena():
    config = WorkloadConfig(requests=10, workers=1, seed=5, repetitions=1, arena=AllocatorConfig(capacity=160))
    a = run_repetition(Mode.NON_HEAD_FIRST, config)
    b = run_repetition(Mode.NON_HEAD_FIRST, config)
    assert (a.allocs, a.allocs_ok, a.frees, a.frees_ok, a.fragmentation) == \
           (b.allocs, b.allocs_ok, b.frees, b.frees_ok, b.fragmentation)


def test_fixed_seed_repeats_identically():
    config = replace(SMALL, reseed_repetitions=False, repetitions=3)
    reps = run_workload(Mode.HEAD_FIRST, config).repetitions
    assert len({(r.seed, r.allocs_ok, r.frees_ok, r.fragmentation) for r in reps}) == 1


@pytest.mark.parametrize("mode", list(Mode))
def test_multiple_workers(mode):
    config = replace(SMALL, workers=4, repetitions=1)
    rep = run_workload(mode, config).repetitions[0]
    assert rep.allocs + rep.frees == config.requests
    assert rep.violations == 0


def _report(mode, t):
    return BenchReport(mode, 100, t, 100.0, 50.0, 0.0)


def test_t_imp_arithmetic():
    row = ComparisonRow(100, _report(Mode.NON_HEAD_FIRST, 2.0), _report(Mode.HEAD_FIRST, 1.5))
    assert row.t_imp_pct == pytest.approx(25.0)
    other = ComparisonRow(200, _report(Mode.NON_HEAD_FIRST, 4.0), _report(Mode.HEAD_FIRST, 1.0))
    report = ComparisonReport([row, other])
    assert report.mean_t_imp_pct == pytest.approx(50.0)
    assert report.total_time_imp_pct == pytest.approx(100 * 3.5 / 6.0)


def test_self_comparison_near_zero():
    config = replace(SMALL, requests=4000, repetitions=5, reseed_repetitions=False)
    a, b = [], []
    for k in range(config.repetitions):
        a.append(run_repetition(Mode.NON_HEAD_FIRST, config, k))
        b.append(run_repetition(Mode.NON_HEAD_FIRST, config, k))
    row = ComparisonRow(config.requests,
                        BenchReport.aggregate(Mode.NON_HEAD_FIRST, config.requests, a),
                        BenchReport.aggregate(Mode.NON_HEAD_FIRST, config.requests, b))
    assert abs(row.t_imp_pct) < 30.0


def test_compare_modes_pairs_rows():
    report = compare_modes(replace(SMALL, repetitions=1), [500, 1000])
    assert [row.requests for row in report.rows] == [500, 1000]
    for row in report.rows:
        assert row.non_head_first.mode is Mode.NON_HEAD_FIRST and row.head_first.mode is Mode.HEAD_FIRST
        assert row.non_head_first.repetitions[0].seed == row.head_first.repetitions[0].seed


def test_report_csv_columns():
    text = reports_csv([_report(Mode.HEAD_FIRST, 1.25)])
    rows = list(csv.reader(text.splitlines()))
    assert tuple(rows[0]) == REPORT_FIELDS
    assert rows[1] == ["head-first", "100", "1.250", "100.00", "50.00", "0.00"]
    assert list(csv.reader(reports_csv([_report(Mode.HEAD_FIRST, 1.25)], with_time=False).splitlines()))[1][2] == ""


def test_comparison_csv_puts_t_imp_on_head_first_row():
    row = ComparisonRow(100, _report(Mode.NON_HEAD_FIRST, 2.0), _report(Mode.HEAD_FIRST, 1.0))
    rows = list(csv.reader(comparison_csv(ComparisonReport([row])).splitlines()))
    assert tuple(rows[0]) == COMPARE_FIELDS
    assert rows[1][0] == "non-head-first" and rows[1][-1] == ""
    assert rows[2][0] == "head-first" and rows[2][-1] == "50.00"
    quiet = list(csv.reader(comparison_csv(ComparisonReport([row]), with_time=False).splitlines()))
    assert quiet[2][2] == "" and quiet[2][-1] == ""


@pytest.mark.parametrize("kwargs", [
    {"requests": 0}, {"max_alloc_bytes": 0}, {"alloc_probability": 0.0},
    {"alloc_probability": 1.0}, {"workers": 0}, {"repetitions": 0},
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        WorkloadConfig(**kwargs)


def test_bad_arena_rejected_before_timing():
    with pytest.raises(ConfigError):
        run_workload(Mode.HEAD_FIRST, WorkloadConfig(arena=AllocatorConfig(capacity=20)))
