"""
Symbolic execution of annotated IR.

Every terminating path yields a ``SymState`` whose path condition, store,
observation list and memory accesses are expressions over the initial
symbols (registers ``x0..x30``, flags ``z``/``n`` and the memory ``mem``).
"""

from typing import Any, Dict, List, Optional, Tuple
from dataclasses import dataclass, field
import logging

from sidecheck.bir import ir
from sidecheck.bir.concrete import ConcreteState
from sidecheck.bir.text import format_expr
from sidecheck.errors import MalformedProgram, PathExplosion, PathMismatch

logger = logging.getLogger("sidecheck")

DEFAULT_MAX_PATHS = 64
FLAG_NAMES = ("z", "n")

SymObs = Tuple[ir.Expr, Tuple[ir.Expr, ...]]


@dataclass(frozen=True)
class SymAccess:
    op: str
    addr: ir.Expr
    nbytes: int
    pc: int
    discarded: bool = False


@dataclass
class SymState:
    """One symbolic execution path."""

    pc: str
    path: ir.Expr = ir.TRUE
    store: Dict[str, Any] = field(default_factory=dict)
    obs: List[SymObs] = field(default_factory=list)
    accesses: List[SymAccess] = field(default_factory=list)
    trace: List[str] = field(default_factory=list)

    def fork(self, pc: str, path: ir.Expr) -> "SymState":
        return SymState(
            pc=pc,
            path=path,
            store=dict(self.store),
            obs=list(self.obs),
            accesses=list(self.accesses),
            trace=list(self.trace),
        )

    def value(self, name: str) -> Any:
        """Final symbolic value of a variable (the initial symbol when never written)."""
        if name in self.store:
            return self.store[name]
        if name == ir.MEMORY_NAME:
            return ir.MemVar(name)
        return ir.var(name, 1 if name in FLAG_NAMES else ir.WORD)

    def eval(self, node: Any) -> Any:
        """Symbolic evaluation of ``node`` in this state."""
        return ir.substitute(node, self.store)


PathSet = List[SymState]


def _execute_block(state: SymState, blk: ir.IrBlock) -> None:
    pc = blk.pc if blk.pc is not None else len(state.trace)
    for stmt in blk.stmts:
        if isinstance(stmt, ir.Obs):
            state.obs.append((state.eval(stmt.cond), tuple(state.eval(e) for e in stmt.exprs)))
            continue
        for access in ir.statement_accesses(stmt):
            state.accesses.append(
                SymAccess(access.op, state.eval(access.addr), access.nbytes, pc, access.discarded)
            )
        value = state.eval(stmt.expr)
        state.store[stmt.var] = value


def sym_exec(program: ir.IrProgram, max_paths: int = DEFAULT_MAX_PATHS) -> PathSet:
    """
    Explore every path depth-first, taking the then-branch first.

    Forks whose condition folds to constant false are dropped; no solver is
    consulted.

    Raises:
        PathExplosion: when more than ``max_paths`` paths terminate.
        MalformedProgram: when a path revisits a block.
    """
    blocks = program.by_label()
    done: PathSet = []
    pending = [SymState(pc=program.entry)]
    while pending:
        state = pending.pop()
        while True:
            if state.pc in state.trace:
                raise MalformedProgram(f"cycle through block {state.pc}")
            blk = blocks[state.pc]
            state.trace.append(state.pc)
            _execute_block(state, blk)
            term = blk.term
            if isinstance(term, ir.Halt):
                done.append(state)
                if len(done) > max_paths:
                    raise PathExplosion(max_paths)
                break
            if isinstance(term, ir.Jmp):
                state.pc = term.target
                continue
            cond = state.eval(term.cond)
            then_path = ir.band(state.path, cond)
            else_path = ir.band(state.path, ir.bnot(cond))
            if else_path == ir.FALSE:
                state.pc, state.path = term.then, then_path
                continue
            if then_path == ir.FALSE:
                state.pc, state.path = term.other, else_path
                continue
            pending.append(state.fork(term.other, else_path))
            state.pc, state.path = term.then, then_path
    logger.debug(f"Symbolic execution found {len(done)} paths")
    return done


def concretize_obs(state: SymState, s: ConcreteState) -> List[Tuple[int, ...]]:
    """
    Observations of ``state``'s path produced from the concrete initial state ``s``.

    Silent observations (condition false) are dropped.
    """
    env = s.to_env()
    if not ir.evaluate(state.path, env):
        raise PathMismatch(f"input does not follow path ending in {state.pc}")
    result = []
    for cond, exprs in state.obs:
        if ir.evaluate(cond, env):
            result.append(tuple(ir.evaluate(e, env) for e in exprs))
    return result


def path_of(paths: PathSet, s: ConcreteState) -> Optional[int]:
    """Index of the path whose condition ``s`` satisfies, or None."""
    env = s.to_env()
    matches = [i for i, p in enumerate(paths) if ir.evaluate(p.path, env)]
    if len(matches) > 1:
        raise PathMismatch(f"input satisfies {len(matches)} path conditions")
    return matches[0] if matches else None


def dump_paths(paths: PathSet, geometry: Any = None) -> str:
    """Structured text of a path set: condition, store and observations per path."""
    lines = []
    for i, state in enumerate(paths):
        lines.append(f"path {i}: {' -> '.join(state.trace)}")
        lines.append(f"  condition: {format_expr(state.path, geometry)}")
        lines.append("  store:")
        for name in sorted(state.store):
            lines.append(f"    {name} = {format_expr(state.store[name], geometry)}")
        lines.append("  obs:")
        for cond, exprs in state.obs:
            rendered = ", ".join(format_expr(e, geometry) for e in exprs)
            lines.append(f"    ({format_expr(cond, geometry)}, [{rendered}])")
    return "\n".join(lines)
