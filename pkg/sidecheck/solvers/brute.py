"""
Exhaustive model search over a small input domain.

Only meaningful for small regions: every word symbol ranges over the
aligned addresses of the region plus 0 and 1, every flag over 0 and 1, and
all memories are zero. The answers are therefore relative to that domain.
"""

from typing import Dict, Iterator, List, Optional, Tuple
import itertools
import logging

from sidecheck.bir import ir
from sidecheck.bir.concrete import ACCESS_BYTES, MemoryRegion
from sidecheck.errors import SolverError
from sidecheck.relsynth import RelFormula
from sidecheck.solvers.base import Sat, SolverBackend, SolverResult, Unknown, Unsat

logger = logging.getLogger("sidecheck.solvers")

MAX_REGION_BYTES = 256
MAX_CANDIDATES = 1_000_000


def word_domain(region: MemoryRegion, align: int = ACCESS_BYTES) -> List[int]:
    """Candidate values for a register symbol."""
    addresses = list(range(region.base, region.end - align + 1, align))
    return [0, 1] + [a for a in addresses if a > 1]


class BruteForceSolver(SolverBackend):
    """
    Enumerates assignments in a fixed order; results are reproducible.

    A query with no solution in the domain answers Unsat, unless it reads
    memory, in which case zero-filled memory may be what rules the
    solutions out and the answer is Unknown.

    Example:
        >>> BruteForceSolver(MemoryRegion(0x100, 64)).solve(RelFormula(ir.TRUE)).verdict
        'sat'
    """

    def __init__(
        self,
        region: MemoryRegion,
        max_candidates: int = MAX_CANDIDATES,
        name: Optional[str] = None,
    ):
        super().__init__(name or "brute")
        if region.size > MAX_REGION_BYTES:
            raise SolverError(
                f"brute-force search needs a region of at most {MAX_REGION_BYTES} bytes, "
                f"got {region.size}"
            )
        self.region = region
        self.max_candidates = max_candidates
        self.domain = word_domain(region)

    def _domains(self, symbols: Dict[str, Optional[int]]) -> Tuple[List[str], List[List[int]]]:
        names, domains = [], []
        for name, width in sorted(symbols.items()):
            if width is None:
                continue
            names.append(name)
            domains.append([0, 1] if width == 1 else [v & ir.mask(width) for v in self.domain])
        return names, domains

    def candidates(self, query: RelFormula) -> Iterator[Dict[str, int]]:
        names, domains = self._domains(query.symbols())
        total = 1
        for d in domains:
            total *= len(d)
        if total > self.max_candidates:
            raise SolverError(
                f"{total} candidate assignments over {len(names)} symbols exceed "
                f"the limit of {self.max_candidates}"
            )
        for values in itertools.product(*domains):
            yield dict(zip(names, values))

    def solve(self, query: RelFormula) -> SolverResult:
        formula = query.formula
        memories = [n for n, w in query.symbols().items() if w is None]
        tried = 0
        for env in self.candidates(query):
            tried += 1
            if ir.evaluate(formula, env):
                logger.debug(f"Brute force found a model after {tried} candidates")
                return Sat(env, {name: {} for name in memories})
        if ir.loads_in(formula):
            return Unknown("no model with zero-filled memory")
        return Unsat()
