"""
Deterministic L1 data-cache simulator standing in for the hardware.

Set-associative with LRU replacement, plus three optional quirks: a stride
prefetcher that respects 4 KiB pages, previction of settled lines on
clustered misses to one set, and seeded post-run noise.
"""

from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple
from dataclasses import dataclass, field
import copy
import logging

import numpy as np

from sidecheck.bir.concrete import DEFAULT_REGION, ConcreteState, MemoryRegion, concrete_step
from sidecheck.bir.isa import Instruction
from sidecheck.config import UarchConfig
from sidecheck.obsmodel import CacheGeometry

logger = logging.getLogger("sidecheck.uarch")

PAGE_BYTES = 4096


@dataclass
class CacheLine:
    valid: bool = False
    tag: int = 0
    fill_time: int = 0
    lru_rank: int = 0
    prefetched: bool = False


@dataclass(frozen=True)
class CacheEvent:
    kind: str  # hit, miss, fill, evict, prefetch, previct
    set_index: int
    tag: int
    time: int


class CacheState:
    """
    Final or intermediate cache contents: ``ways`` lines per set.

    ``lru_rank`` 0 is the most recently used line of a set; ranks of the
    valid lines of a set are always a permutation of ``0..valid-1``.
    """

    def __init__(self, geometry: CacheGeometry):
        self.geometry = geometry
        self.sets: List[List[CacheLine]] = [
            [CacheLine() for _ in range(geometry.ways)] for _ in range(geometry.sets)
        ]

    def valid_lines(self, index: int) -> List[CacheLine]:
        return [line for line in self.sets[index] if line.valid]

    def valid_tags(self, index: int) -> FrozenSet[int]:
        return frozenset(line.tag for line in self.sets[index] if line.valid)

    def find(self, index: int, tag: int) -> Optional[CacheLine]:
        for line in self.sets[index]:
            if line.valid and line.tag == tag:
                return line
        return None

    def contains(self, address: int) -> bool:
        g = self.geometry
        return self.find(g.extract_index(address), g.extract_tag(address)) is not None

    def touch(self, index: int, line: CacheLine) -> None:
        """Make ``line`` the most recently used of its set."""
        old = line.lru_rank if line.valid else len(self.valid_lines(index))
        for other in self.sets[index]:
            if other.valid and other is not line and other.lru_rank < old:
                other.lru_rank += 1
        line.lru_rank = 0

    def victim(self, index: int) -> CacheLine:
        """An invalid way if there is one, else the least recently used line."""
        for line in self.sets[index]:
            if not line.valid:
                return line
        return max(self.sets[index], key=lambda line: line.lru_rank)

    def invalidate(self, index: int, line: CacheLine) -> None:
        rank = line.lru_rank
        line.valid = False
        for other in self.sets[index]:
            if other.valid and other.lru_rank > rank:
                other.lru_rank -= 1

    def renumber(self, index: int) -> None:
        ordered = sorted(self.valid_lines(index), key=lambda line: line.lru_rank)
        for rank, line in enumerate(ordered):
            line.lru_rank = rank

    def occupied_sets(self) -> List[int]:
        return [i for i in range(self.geometry.sets) if self.valid_lines(i)]

    def snapshot(self) -> Dict[int, List[int]]:
        """Set index -> sorted valid tags, for occupied sets only."""
        return {i: sorted(self.valid_tags(i)) for i in self.occupied_sets()}

    @classmethod
    def from_snapshot(cls, geometry: CacheGeometry, snapshot: Dict[int, List[int]]) -> "CacheState":
        state = cls(geometry)
        for index, tags in snapshot.items():
            for way, tag in enumerate(tags):
                line = state.sets[int(index)][way]
                line.valid, line.tag, line.lru_rank = True, tag, way
        return state

    def dump(self) -> str:
        """Canonical text: one ``<set>: <tags>`` line per occupied set."""
        return "\n".join(
            f"{i}: " + " ".join(f"{tag:#x}" for tag in tags) for i, tags in self.snapshot().items()
        )

    def __repr__(self) -> str:
        return f"CacheState({self.snapshot()})"


@dataclass
class PrefetchTracker:
    """Stride detector fed by demand misses."""

    last_miss_addr: Optional[int] = None
    last_delta: Optional[int] = None
    streak: int = 0

    def observe_miss(self, line_addr: int, max_stride: int) -> None:
        if self.last_miss_addr is not None:
            delta = line_addr - self.last_miss_addr
            if delta != 0 and abs(delta) <= max_stride:
                self.streak = self.streak + 1 if delta == self.last_delta else 1
                self.last_delta = delta
            else:
                self.streak = 0
                self.last_delta = None
        self.last_miss_addr = line_addr


@dataclass
class _LastAccess:
    set_index: Optional[int] = None
    missed: bool = False


def _same_page(a: int, b: int) -> bool:
    return a // PAGE_BYTES == b // PAGE_BYTES


class CacheSimulator:
    """
    One simulated L1 data cache, cleared on construction.

    Example:
        >>> sim = CacheSimulator(UarchConfig())
        >>> sim.access(0x80100000, "rd", now=0)[0].kind
        'miss'
    """

    def __init__(self, config: UarchConfig, name: Optional[str] = None):
        self.name = name or "L1D"
        self.config = config
        self.geometry = config.geometry.build()
        self.cache = CacheState(self.geometry)
        self.tracker = PrefetchTracker()
        self.last = _LastAccess()

    def _fill(self, address: int, now: int, events: List[CacheEvent], prefetched: bool = False) -> None:
        g = self.geometry
        index, tag = g.extract_index(address), g.extract_tag(address)
        existing = self.cache.find(index, tag)
        if existing is not None:
            self.cache.touch(index, existing)
            return
        line = self.cache.victim(index)
        if line.valid:
            events.append(CacheEvent("evict", index, line.tag, now))
            self.cache.invalidate(index, line)
        line.valid, line.tag, line.fill_time, line.prefetched = True, tag, now, prefetched
        line.lru_rank = len(self.cache.valid_lines(index)) - 1
        self.cache.touch(index, line)
        events.append(CacheEvent("prefetch" if prefetched else "fill", index, tag, now))

    def _previct(self, index: int, now: int, events: List[CacheEvent]) -> None:
        gap = self.config.previction.settle_gap
        for line in list(self.cache.sets[index]):
            if line.valid and now - line.fill_time > gap:
                events.append(CacheEvent("previct", index, line.tag, now))
                self.cache.invalidate(index, line)

    def _prefetch(self, now: int, events: List[CacheEvent]) -> None:
        cfg = self.config.prefetch
        root, delta = self.tracker.last_miss_addr, self.tracker.last_delta
        if root is None or delta is None:
            return
        for i in range(1, cfg.n_pf + 1):
            target = root + i * delta
            if target < 0:
                break
            if cfg.respect_4k_pages and not _same_page(root, target):
                logger.debug(f"Prefetch to {target:#x} stopped at page boundary")
                break
            self._fill(target, now, events, prefetched=True)

    def access(self, address: int, op: str, now: int) -> List[CacheEvent]:
        """Demand access to ``address`` at executed-instruction index ``now``."""
        g = self.geometry
        index, tag = g.extract_index(address), g.extract_tag(address)
        events: List[CacheEvent] = []
        line = self.cache.find(index, tag)
        if line is not None:
            self.cache.touch(index, line)
            events.append(CacheEvent("hit", index, tag, now))
            self.last = _LastAccess(index, False)
            return events

        events.append(CacheEvent("miss", index, tag, now))
        if (
            self.config.previction.enabled
            and op == "rd"
            and self.last.missed
            and self.last.set_index == index
        ):
            self._previct(index, now, events)
        self._fill(address, now, events)
        self.last = _LastAccess(index, True)

        if self.config.prefetch.enabled:
            line_addr = g.line_of(address) * g.line_bytes
            self.tracker.observe_miss(line_addr, self.config.prefetch.max_stride_lines * g.line_bytes)
            if self.tracker.streak >= self.config.prefetch.k - 1:
                self._prefetch(now, events)
        return events

    def apply_noise(self, rng: np.random.Generator, probability: float) -> int:
        """Invalidate each valid line independently; returns the number dropped."""
        dropped = 0
        for index in range(self.geometry.sets):
            for line in self.cache.sets[index]:
                if line.valid and rng.random() < probability:
                    line.valid = False
                    dropped += 1
            self.cache.renumber(index)
        return dropped


def cache_access(
    cache: CacheState,
    tracker: PrefetchTracker,
    addr: int,
    op: str,
    now: int,
    cfg: UarchConfig,
    last: Optional[Tuple[Optional[int], bool]] = None,
) -> Tuple[CacheState, PrefetchTracker, List[CacheEvent]]:
    """
    Pure form of one access: inputs are left untouched.

    ``last`` is the (set index, missed) of the previous data access, needed
    by the previction rule.
    """
    sim = CacheSimulator(cfg)
    sim.cache = copy.deepcopy(cache)
    sim.tracker = copy.deepcopy(tracker)
    if last is not None:
        sim.last = _LastAccess(*last)
    events = sim.access(addr, op, now)
    return sim.cache, sim.tracker, events


def noise_rng(seed: int, input_index: int, repetition: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64([seed, input_index, repetition]))


def run_on_uarch(
    program: Sequence[Instruction],
    init: ConcreteState,
    cfg: UarchConfig,
    region: MemoryRegion = DEFAULT_REGION,
    input_index: int = 0,
    repetition: int = 0,
) -> CacheState:
    """
    Execute ``program`` from ``init`` on a cleared cache and return the final cache state.

    Time is the index of the executed instruction. Noise, when enabled, is
    drawn from a stream keyed by ``(noise.seed, input_index, repetition)``.
    """
    sim = CacheSimulator(cfg)
    state = init.copy()
    now = 0
    while state.pc < len(program):
        state, event = concrete_step(state, program, region)
        if event is not None:
            sim.access(event.address, event.op, now)
        now += 1
    if cfg.noise.enabled and cfg.noise.flip_probability > 0:
        dropped = sim.apply_noise(
            noise_rng(cfg.noise.seed, input_index, repetition), cfg.noise.flip_probability
        )
        logger.debug(f"Noise dropped {dropped} lines")
    return sim.cache
