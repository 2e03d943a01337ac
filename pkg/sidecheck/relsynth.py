"""
Relation synthesis over two copies of the initial state.

Copy 1 uses the plain symbol names, copy 2 the primed names (``x1p``,
``zp``, ``memp``). Formulas are IR expressions, so they can be evaluated
concretely, printed in the IR syntax and lowered to SMT-LIB.
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple
from dataclasses import dataclass, field
import logging

from sidecheck.bir import ir
from sidecheck.bir.concrete import DEFAULT_REGION, MemoryRegion
from sidecheck.bir.text import format_expr, parse_expr, placeholders
from sidecheck.errors import ConfigError, RangeViolation
from sidecheck.symexec import PathSet, SymObs, SymState

logger = logging.getLogger("sidecheck")

PRIME = "p"
NO_OBSERVATIONS = "no-observations"


def prime_name(name: str) -> str:
    return name + PRIME


def unprime_name(name: str) -> Tuple[str, int]:
    """(base name, copy number) of a symbol name."""
    base = name[: -len(PRIME)]
    if name.endswith(PRIME) and (base in ("z", "n", ir.MEMORY_NAME) or base.startswith("x")):
        return base, 2
    return name, 1


def prime(node: Any) -> Any:
    """Rename every symbol of ``node`` to its copy-2 name."""
    return ir.rename(node, prime_name)


def prime_obs(obs: Sequence[SymObs]) -> List[SymObs]:
    return [(prime(c), tuple(prime(e) for e in es)) for c, es in obs]


@dataclass(frozen=True)
class RelFormula:
    """A relation body plus its well-definedness side constraints."""

    body: ir.Expr
    side: ir.Expr = ir.TRUE

    @property
    def formula(self) -> ir.Expr:
        return ir.band(self.body, self.side)

    def conjoin(self, *others: "RelFormula") -> "RelFormula":
        body, side = self.body, self.side
        for other in others:
            body, side = ir.band(body, other.body), ir.band(side, other.side)
        return RelFormula(body, side)

    def holds(self, env: Dict[str, Any]) -> bool:
        return bool(ir.evaluate(self.formula, env))

    def symbols(self) -> Dict[str, Optional[int]]:
        return ir.symbols(self.formula)

    def render(self, geometry: Any = None) -> str:
        return f"{format_expr(self.body, geometry)}\n  where {format_expr(self.side, geometry)}"


# ---------------------------------------------------------------------------
# Observation-list equivalence
# ---------------------------------------------------------------------------

def _vectors_equal(e1: Sequence[ir.Expr], e2: Sequence[ir.Expr]) -> ir.Expr:
    if len(e1) != len(e2):
        return ir.FALSE
    return ir.conj(*(ir.eq(a, b) for a, b in zip(e1, e2)))


def obs_list_eq(l1: Sequence[SymObs], l2: Sequence[SymObs]) -> ir.Expr:
    """
    Symbolic equivalence of two observation lists modulo silent observations.

    Both heads visible: equal vectors and equivalent tails. A silent head on
    either side is skipped. Against an empty list, every remaining
    observation must be silent.

    Example:
        >>> obs_list_eq([], [])
        Const(value=1, width=1)
    """
    memo: Dict[Tuple[int, int], ir.Expr] = {}
    n1, n2 = len(l1), len(l2)

    # suffixes are solved from the back so the recursion never goes deep
    for i in range(n1, -1, -1):
        for j in range(n2, -1, -1):
            if i == n1 and j == n2:
                memo[i, j] = ir.TRUE
            elif j == n2:
                memo[i, j] = ir.band(ir.bnot(l1[i][0]), memo[i + 1, j])
            elif i == n1:
                memo[i, j] = ir.band(ir.bnot(l2[j][0]), memo[i, j + 1])
            else:
                c1, e1 = l1[i]
                c2, e2 = l2[j]
                both = ir.implies(
                    ir.band(c1, c2), ir.band(_vectors_equal(e1, e2), memo[i + 1, j + 1])
                )
                skip1 = ir.implies(ir.bnot(c1), memo[i + 1, j])
                skip2 = ir.implies(ir.bnot(c2), memo[i, j + 1])
                memo[i, j] = ir.conj(both, skip1, skip2)
    return memo[0, 0]


# ---------------------------------------------------------------------------
# Well-definedness
# ---------------------------------------------------------------------------

def in_region(addr: ir.Expr, nbytes: int, region: MemoryRegion) -> ir.Expr:
    """``addr`` lies in the region with room for ``nbytes`` and is aligned to them."""
    lower = ir.ule(ir.const(region.base), addr)
    upper = ir.ule(addr, ir.const(region.end - nbytes))
    aligned = ir.eq(ir.band(addr, ir.const(nbytes - 1)), ir.const(0))
    return ir.conj(lower, upper, aligned)


def well_defined(state: SymState, region: MemoryRegion, syntactic_obs: bool = False) -> ir.Expr:
    """
    Every access of the path is mapped and aligned.

    With ``syntactic_obs`` the discarded accesses are not constrained,
    matching the observation insertion that ignores them.
    """
    parts = [
        in_region(a.addr, a.nbytes, region)
        for a in state.accesses
        if not (syntactic_obs and a.discarded)
    ]
    return ir.conj(*parts)


# ---------------------------------------------------------------------------
# Relations
# ---------------------------------------------------------------------------

def path_pairs(count: int) -> List[Tuple[int, int]]:
    """Pairs ``(i, j)`` with ``j >= i`` in lexicographic order."""
    return [(i, j) for i in range(count) for j in range(i, count)]


def synth_relation(
    paths: PathSet,
    region: MemoryRegion = DEFAULT_REGION,
    syntactic_obs: bool = False,
    symmetric: bool = True,
) -> RelFormula:
    """
    Weakest relation making every pair of paths produce equivalent observations.

    With ``symmetric`` only the pairs ``j >= i`` are built; the full
    ``Σ × Σ`` conjunction is available for cross-checks.
    """
    if not paths:
        raise ValueError("empty path set")
    primed_paths = [prime(p.path) for p in paths]
    primed_obs = [prime_obs(p.obs) for p in paths]
    if symmetric:
        pairs = path_pairs(len(paths))
    else:
        pairs = [(i, j) for i in range(len(paths)) for j in range(len(paths))]
    body_parts = []
    for i, j in pairs:
        premise = ir.band(paths[i].path, primed_paths[j])
        body_parts.append(ir.implies(premise, obs_list_eq(paths[i].obs, primed_obs[j])))
    side_parts = []
    for p, pp in zip(paths, primed_paths):
        wd = well_defined(p, region, syntactic_obs)
        side_parts.append(ir.implies(p.path, wd))
        side_parts.append(ir.implies(pp, prime(wd)))
    return RelFormula(ir.conj(*body_parts), ir.conj(*side_parts))


# ---------------------------------------------------------------------------
# Path guards
# ---------------------------------------------------------------------------

class PathGuard:
    """Restricts the inputs of one copy on a given path."""

    name = "guard"

    def constraint(self, state: SymState) -> ir.Expr:
        raise NotImplementedError("Subclasses must implement constraint()")

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(name='{self.name}')"


class NoObservationsGuard(PathGuard):
    """Only inputs whose run on the path emits no observation."""

    name = NO_OBSERVATIONS

    def constraint(self, state: SymState) -> ir.Expr:
        return ir.conj(*(ir.bnot(c) for c, _ in state.obs))


def resolve_accesses(e: ir.Expr, state: SymState) -> Optional[ir.Expr]:
    """Replace ``acc<k>`` placeholders by the path's access addresses; None if one is missing."""
    mapping: Dict[str, Any] = {}
    for k in placeholders(e):
        if k >= len(state.accesses):
            return None
        mapping[f"acc{k}"] = state.accesses[k].addr
    return ir.substitute(e, mapping) if mapping else e


class ExpressionGuard(PathGuard):
    """
    A boolean IR expression over the initial symbols and ``acc<k>``.

    Paths with fewer than ``k+1`` accesses cannot satisfy the guard.
    """

    def __init__(self, text: str, geometry: Any = None, name: Optional[str] = None):
        self.name = name or text
        self.expr = ir.as_bool(parse_expr(text, geometry))

    def constraint(self, state: SymState) -> ir.Expr:
        resolved = resolve_accesses(self.expr, state)
        return ir.FALSE if resolved is None else resolved


def make_guard(text: Optional[str], geometry: Any = None) -> Optional[PathGuard]:
    if text is None or not text.strip():
        return None
    if text.strip() == NO_OBSERVATIONS:
        return NoObservationsGuard()
    return ExpressionGuard(text, geometry)


def guard_formula(paths: PathSet, guard: PathGuard) -> ir.Expr:
    """The guard over one copy for the whole path set: ``⋀ path_i ⇒ guard_i``."""
    return ir.conj(*(ir.implies(p.path, guard.constraint(p)) for p in paths))


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def pair_query(
    s1: SymState,
    s2: SymState,
    guard: Optional[PathGuard] = None,
    region: MemoryRegion = DEFAULT_REGION,
    syntactic_obs: bool = False,
) -> RelFormula:
    """
    Inputs following ``s1`` (copy 1) and ``s2`` (copy 2) with equivalent observations.
    """
    body = ir.conj(s1.path, prime(s2.path), obs_list_eq(s1.obs, prime_obs(s2.obs)))
    if guard is not None:
        body = ir.conj(body, guard.constraint(s1), prime(guard.constraint(s2)))
    side = ir.band(
        well_defined(s1, region, syntactic_obs), prime(well_defined(s2, region, syntactic_obs))
    )
    return RelFormula(body, side)


class TermEnumeration:
    """
    Splits test generation by the value pair of a term over ``R × R``.

    Example:
        >>> enum = TermEnumeration("acc0 + 8", [0, 1])
        >>> enum.pairs()
        [(0, 0), (0, 1), (1, 0), (1, 1)]
    """

    def __init__(self, text: str, values: Sequence[int], geometry: Any = None):
        if not values:
            raise ConfigError("term enumeration needs at least one value")
        self.text = text
        self.expr = parse_expr(text, geometry)
        out_of_range = [v for v in values if not 0 <= v <= ir.mask(self.expr.width)]
        if out_of_range:
            raise ConfigError(
                f"term values {out_of_range} do not fit the {self.expr.width}-bit term '{text}'"
            )
        self.values = list(values)

    def pairs(self) -> List[Tuple[int, int]]:
        return [(a, b) for a in self.values for b in self.values]

    def term_for(self, state: SymState) -> Optional[ir.Expr]:
        return resolve_accesses(self.expr, state)

    def check(self, value: int) -> None:
        if value not in self.values:
            raise RangeViolation(f"term value {value} outside {self.values}")

    def constraints(self, s1: SymState, s2: SymState, v1: int, v2: int) -> RelFormula:
        return term_constraints(self, s1, s2, v1, v2)


def term_constraints(
    enum: TermEnumeration, s1: SymState, s2: SymState, v1: int, v2: int
) -> RelFormula:
    """Pin the term to ``v1`` on copy 1 and ``v2`` on copy 2; a copy lacking the term is not pinned."""
    enum.check(v1)
    enum.check(v2)
    parts = []
    t1, t2 = enum.term_for(s1), enum.term_for(s2)
    if t1 is not None:
        parts.append(ir.eq(t1, ir.const(v1, t1.width)))
    if t2 is not None:
        t2 = prime(t2)
        parts.append(ir.eq(t2, ir.const(v2, t2.width)))
    return RelFormula(ir.conj(*parts))


@dataclass(frozen=True)
class EnumStep:
    index: int
    pair: Tuple[int, int]
    term_pair: Optional[Tuple[int, int]]


@dataclass
class EnumCursor:
    """
    Round-robin over path pairs and term value pairs.

    Step ``k`` uses path pair ``k mod P`` and term pair ``(k div P) mod T``,
    both in lexicographic order, so every path pair meets every term pair
    within ``P * T`` steps.
    """

    paths: PathSet
    guard: Optional[PathGuard] = None
    term: Optional[TermEnumeration] = None
    region: MemoryRegion = DEFAULT_REGION
    syntactic_obs: bool = False
    position: int = 0
    pairs: List[Tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.pairs:
            self.pairs = path_pairs(len(self.paths))

    @property
    def period(self) -> int:
        return len(self.pairs) * (len(self.term.pairs()) if self.term else 1)

    def step_at(self, k: int) -> EnumStep:
        pair = self.pairs[k % len(self.pairs)]
        term_pair = None
        if self.term is not None:
            term_pairs = self.term.pairs()
            term_pair = term_pairs[(k // len(self.pairs)) % len(term_pairs)]
        return EnumStep(k, pair, term_pair)

    def next(self) -> EnumStep:
        step = self.step_at(self.position)
        self.position += 1
        return step

    def query(self, step: EnumStep) -> RelFormula:
        i, j = step.pair
        s1, s2 = self.paths[i], self.paths[j]
        formula = pair_query(s1, s2, self.guard, self.region, self.syntactic_obs)
        if self.term is not None and step.term_pair is not None:
            formula = formula.conjoin(self.term.constraints(s1, s2, *step.term_pair))
        return formula

