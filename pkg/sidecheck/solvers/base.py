"""
Solver results, test cases and the backend base class.
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple
from dataclasses import dataclass, field
from pathlib import Path
import logging

from sidecheck.bir import ir
from sidecheck.bir.concrete import ConcreteState
from sidecheck.errors import IncompleteModel, SolverError
from sidecheck.relsynth import RelFormula, prime_name, unprime_name

logger = logging.getLogger("sidecheck.solvers")


class SolverResult:
    """Base class of ``Sat``, ``Unsat`` and ``Unknown``."""

    verdict = "unknown"

    @property
    def is_sat(self) -> bool:
        return self.verdict == "sat"


@dataclass(frozen=True)
class Sat(SolverResult):
    """
    A model: symbol values plus, per memory symbol, the bytes the query reads.
    """

    assignment: Dict[str, int] = field(default_factory=dict)
    memories: Dict[str, Dict[int, int]] = field(default_factory=dict)
    verdict = "sat"

    def env(self) -> Dict[str, Any]:
        result: Dict[str, Any] = dict(self.assignment)
        for name, contents in self.memories.items():
            result[name] = ir.Memory(contents)
        return result


@dataclass(frozen=True)
class Unsat(SolverResult):
    verdict = "unsat"


@dataclass(frozen=True)
class Unknown(SolverResult):
    reason: str = ""
    verdict = "unknown"


@dataclass(frozen=True)
class Provenance:
    """Where a test case came from; enough to rebuild its query."""

    program_id: str = ""
    pair: Tuple[int, int] = (0, 0)
    guard: Optional[str] = None
    term: Optional[str] = None
    term_pair: Optional[Tuple[int, int]] = None
    seed: int = 0
    step: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "program_id": self.program_id,
            "pair": list(self.pair),
            "guard": self.guard,
            "term": self.term,
            "term_pair": list(self.term_pair) if self.term_pair is not None else None,
            "seed": self.seed,
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Provenance":
        term_pair = data.get("term_pair")
        return cls(
            program_id=data.get("program_id", ""),
            pair=tuple(data.get("pair", (0, 0))),  # type: ignore[arg-type]
            guard=data.get("guard"),
            term=data.get("term"),
            term_pair=tuple(term_pair) if term_pair is not None else None,  # type: ignore[arg-type]
            seed=data.get("seed", 0),
            step=data.get("step", 0),
        )


@dataclass(frozen=True)
class TestCase:
    """Two initial states that satisfy one generated query."""

    __test__ = False

    s1: ConcreteState
    s2: ConcreteState
    provenance: Provenance = Provenance()


def _split_env(result: Sat) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    copies: Tuple[Dict[str, Any], Dict[str, Any]] = ({}, {})
    for name, value in result.assignment.items():
        base, copy = unprime_name(name)
        copies[copy - 1][base] = value
    for name, contents in result.memories.items():
        base, copy = unprime_name(name)
        copies[copy - 1][base] = ir.Memory(contents)
    return copies


def model_to_testcase(
    result: Sat, query: Optional[RelFormula] = None, provenance: Optional[Provenance] = None
) -> TestCase:
    """
    Turn a model into two concrete initial states.

    Registers absent from the model are 0 and memory bytes absent from it
    read 0. When ``query`` is given, every word symbol it mentions must be
    assigned and the states must satisfy it.

    Raises:
        IncompleteModel: a symbol of ``query`` has no value.
        SolverError: the states do not satisfy ``query``.
    """
    if query is not None:
        missing = [
            name
            for name, width in sorted(query.symbols().items())
            if width is not None and name not in result.assignment
        ]
        if missing:
            raise IncompleteModel(f"model lacks {', '.join(missing)}")
    env1, env2 = _split_env(result)
    s1, s2 = ConcreteState.from_env(env1), ConcreteState.from_env(env2)
    if query is not None and not query.holds(testcase_env(s1, s2)):
        raise SolverError("model does not satisfy the query it was drawn from")
    return TestCase(s1, s2, provenance or Provenance())


def testcase_env(s1: ConcreteState, s2: ConcreteState) -> Dict[str, Any]:
    """Joint environment of both copies, copy 2 under primed names."""
    env = s1.to_env()
    for name, value in s2.to_env().items():
        env[prime_name(name)] = value
    return env


class SolverBackend:
    """Base class for satisfiability backends."""

    def __init__(
        self, name: Optional[str] = None, timeout: float = 30.0, keep_dir: Optional[Path] = None
    ):
        self.name = name or self.__class__.__name__
        self.timeout = timeout
        self.keep_dir = keep_dir
        self.queries = 0

    def keep_script(self, script: str) -> None:
        """Write ``script`` into ``keep_dir`` (when set) under the running query number."""
        self.queries += 1
        if self.keep_dir is None:
            return
        self.keep_dir.mkdir(parents=True, exist_ok=True)
        path = self.keep_dir / f"query-{self.queries:05d}.smt2"
        path.write_text(script)
        logger.debug(f"Kept query at {path}")

    def solve(self, query: RelFormula) -> SolverResult:
        """Decide ``query`` and return a model when it is satisfiable."""
        raise NotImplementedError("Subclasses must implement solve()")

    def solve_blocked(self, query: RelFormula, blocking: List[ir.Expr]) -> SolverResult:
        """Solve ``query`` conjoined with extra constraints (used for diversity blocking)."""
        if blocking:
            query = query.conjoin(RelFormula(ir.conj(*blocking)))
        return self.solve(query)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(name='{self.name}')"


def blocking_clause(result: Sat, addresses: Sequence[ir.Expr]) -> ir.Expr:
    """
    Exclude the values ``result`` gave to the registers feeding ``addresses``.

    Returns true (no restriction) when none of them is assigned.
    """
    names: Dict[str, Optional[int]] = {}
    for addr in addresses:
        names.update(ir.symbols(addr))
    diffs = [
        ir.ne(ir.var(name, width), ir.const(result.assignment[name], width))
        for name, width in sorted(names.items())
        if width is not None and name in result.assignment
    ]
    return ir.disj(*diffs) if diffs else ir.TRUE
