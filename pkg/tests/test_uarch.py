"""Tests for the cache simulator."""

from sidecheck.bir import ConcreteState, parse_program
from sidecheck.config import UarchConfig
from sidecheck.obsmodel import extract_index, extract_tag
from sidecheck.uarch import (
    CacheSimulator,
    CacheState,
    PrefetchTracker,
    cache_access,
    noise_rng,
    run_on_uarch,
)


def _tag(addr):
    return extract_tag(addr)


def test_first_access_misses_then_hits(baseline_uarch):
    """Test a miss followed by a hit on the same line."""
    sim = CacheSimulator(baseline_uarch)
    assert [e.kind for e in sim.access(0x80100000, "rd", 0)] == ["miss", "fill"]
    assert [e.kind for e in sim.access(0x80100038, "rd", 1)] == ["hit"]


def test_lru_eviction(baseline_uarch):
    """Test that the fifth line of a 4-way set evicts the least recently used one."""
    sim = CacheSimulator(baseline_uarch)
    addrs = [0x80100000 + i * 0x2000 for i in range(5)]
    for t, addr in enumerate(addrs[:4]):
        sim.access(addr, "rd", t)
    sim.access(addrs[0], "rd", 4)
    events = sim.access(addrs[4], "rd", 5)
    evicted = [e for e in events if e.kind == "evict"]
    assert [e.tag for e in evicted] == [_tag(addrs[1])]
    assert sim.cache.valid_tags(0) == {_tag(a) for a in (addrs[0], addrs[2], addrs[3], addrs[4])}


def test_lru_ranks_stay_a_permutation(baseline_uarch):
    """Test the rank invariant after a mix of hits and misses."""
    sim = CacheSimulator(baseline_uarch)
    for t, i in enumerate([0, 1, 2, 1, 3, 0, 4, 2, 5]):
        sim.access(0x80100000 + i * 0x2000, "rd", t)
    ranks = sorted(line.lru_rank for line in sim.cache.valid_lines(0))
    assert ranks == list(range(len(ranks)))


def test_stride_prefetch(stride_program, stride_inputs, prefetch_uarch):
    """Test that three misses two lines apart prefetch the next three strides."""
    low, high = stride_inputs
    low_sets = run_on_uarch(stride_program, low, prefetch_uarch).occupied_sets()
    high_sets = run_on_uarch(stride_program, high, prefetch_uarch).occupied_sets()
    assert low_sets == [2, 4, 6, 8, 10, 12]
    assert high_sets == [51, 53, 55, 57, 59, 61]


def test_prefetch_disabled(stride_program, stride_inputs, baseline_uarch):
    """Test that without the prefetcher only demand lines are cached."""
    _, high = stride_inputs
    assert run_on_uarch(stride_program, high, baseline_uarch).occupied_sets() == [51, 53, 55]


def test_prefetch_stops_at_page_boundary(stride_program, prefetch_uarch):
    """Test that prefetches never cross into the next 4 KiB page."""
    s = ConcreteState(regs={"x10": 0x80100E40})
    assert run_on_uarch(stride_program, s, prefetch_uarch).occupied_sets() == [57, 59, 61, 63]

    crossing = UarchConfig.model_validate(
        {"prefetch": {"enabled": True, "k": 3, "n_pf": 3, "respect_4k_pages": False}}
    )
    sets = run_on_uarch(stride_program, s, crossing).occupied_sets()
    assert sets == [57, 59, 61, 63, 65, 67]


def test_prefetch_tracker_resets_on_irregular_misses():
    """Test the streak counter of the stride detector."""
    tracker = PrefetchTracker()
    for addr in (0, 128, 256):
        tracker.observe_miss(addr, 256)
    assert (tracker.streak, tracker.last_delta) == (2, 128)
    tracker.observe_miss(4096, 256)
    assert (tracker.streak, tracker.last_delta) == (0, None)


def test_previction(previction_program, previction_inputs, previction_uarch, baseline_uarch):
    """Test that a settled line is dropped on the padded arm only."""
    s1, s2 = previction_inputs
    tags = {name: _tag(s1.read(name)) for name in ("x2", "x3", "x4")}
    padded = run_on_uarch(previction_program, s1, previction_uarch)
    compact = run_on_uarch(previction_program, s2, previction_uarch)
    assert padded.valid_tags(0) == {tags["x3"], tags["x4"]}
    assert compact.valid_tags(0) == set(tags.values())

    assert run_on_uarch(previction_program, s1, baseline_uarch).valid_tags(0) == set(tags.values())


def test_noise_is_reproducible(stride_program, stride_inputs):
    """Test that noise depends only on the seed, input and repetition."""
    noisy = UarchConfig.model_validate({"noise": {"enabled": True, "seed": 3, "flip_probability": 0.5}})
    s, _ = stride_inputs

    def snapshots():
        return [
            run_on_uarch(stride_program, s, noisy, input_index=0, repetition=r).snapshot()
            for r in range(8)
        ]

    assert snapshots() == snapshots()
    assert noise_rng(3, 0, 1).random() == noise_rng(3, 0, 1).random()
    assert noise_rng(3, 0, 1).random() != noise_rng(3, 1, 1).random()


def test_full_noise_empties_the_cache(stride_program, stride_inputs):
    """Test flip probability one."""
    noisy = UarchConfig.model_validate({"noise": {"enabled": True, "flip_probability": 1.0}})
    s, _ = stride_inputs
    assert run_on_uarch(stride_program, s, noisy).snapshot() == {}


def test_cache_access_is_pure(baseline_uarch):
    """Test that the functional access form leaves its inputs untouched."""
    cache = CacheState(baseline_uarch.geometry.build())
    tracker = PrefetchTracker()
    new_cache, new_tracker, events = cache_access(cache, tracker, 0x80100040, "rd", 0, baseline_uarch)
    assert cache.snapshot() == {}
    assert new_cache.snapshot() == {1: [_tag(0x80100040)]}
    assert events[0].kind == "miss"


def test_snapshot_round_trip(baseline_uarch):
    """Test the canonical dump of a cache state."""
    g = baseline_uarch.geometry.build()
    state = CacheState.from_snapshot(g, {3: [5, 1]})
    assert state.snapshot() == {3: [1, 5]}
    assert state.dump() == "3: 0x1 0x5"


def test_store_allocates(baseline_uarch):
    """Test that stores bring their line into the cache."""
    program = parse_program("str x1, [x2]")
    final = run_on_uarch(program, ConcreteState(regs={"x2": 0x80100040}), baseline_uarch)
    assert final.contains(0x80100040)
    assert extract_index(0x80100040) == 1
