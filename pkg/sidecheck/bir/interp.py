"""
Reference interpreter for (annotated) IR programs.
"""

from typing import Any, Dict, List, Tuple
from dataclasses import dataclass, field

from sidecheck.bir import ir
from sidecheck.bir.concrete import DEFAULT_REGION, ConcreteState, MemEvent, MemoryRegion
from sidecheck.errors import MalformedProgram

Observation = Tuple[int, ...]


@dataclass
class IrRun:
    """Outcome of interpreting an IR program on one concrete state."""

    state: ConcreteState
    events: List[MemEvent] = field(default_factory=list)
    observations: List[Observation] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)


def run_ir(
    program: ir.IrProgram,
    init: ConcreteState,
    region: MemoryRegion = DEFAULT_REGION,
) -> IrRun:
    """
    Execute the IR from its entry block to ``HALT``.

    Observation statements whose condition is false are silent and are not
    recorded. Accesses outside ``region`` raise ``UnmappedAccess``.
    """
    blocks = program.by_label()
    env: Dict[str, Any] = init.to_env()
    run = IrRun(state=init)
    current = program.entry
    while True:
        if len(run.labels) > len(blocks):
            raise MalformedProgram("IR did not terminate")
        blk = blocks[current]
        run.labels.append(current)
        pc = blk.pc if blk.pc is not None else len(run.labels) - 1
        for stmt in blk.stmts:
            if isinstance(stmt, ir.Obs):
                if ir.evaluate(stmt.cond, env):
                    run.observations.append(tuple(ir.evaluate(e, env) for e in stmt.exprs))
                continue
            for access in ir.statement_accesses(stmt):
                address = ir.evaluate(access.addr, env)
                region.check(address, access.nbytes)
                run.events.append(MemEvent(access.op, address, access.nbytes, pc))
            value = ir.evaluate(stmt.expr, env)
            if stmt.var != ir.DISCARD:
                env[stmt.var] = value
        term = blk.term
        if isinstance(term, ir.Halt):
            break
        if isinstance(term, ir.Jmp):
            current = term.target
        else:
            current = term.then if ir.evaluate(term.cond, env) else term.other
    run.state = ConcreteState.from_env(env, pc=(blk.pc + 1) if blk.pc is not None else 0)
    return run
