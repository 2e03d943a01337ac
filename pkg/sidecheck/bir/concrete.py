"""
Concrete reference semantics of the reduced ISA.
"""

from typing import Dict, List, Mapping, Optional, Sequence, Tuple
from dataclasses import dataclass, field, replace

from sidecheck.bir.isa import GENERAL_REGISTERS, MASK64, ZERO_REGISTER, Instruction, Op
from sidecheck.bir.ir import Memory
from sidecheck.errors import MalformedProgram, UnmappedAccess

MEM_BASE = 0x80000000
MEM_SIZE = 0x200000
ACCESS_BYTES = 8


@dataclass(frozen=True)
class MemoryRegion:
    """The experiment region ``[base, base + size)``; the only mapped memory."""

    base: int = MEM_BASE
    size: int = MEM_SIZE

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, address: int, width: int = ACCESS_BYTES) -> bool:
        return self.base <= address and address + width <= self.end

    def check(self, address: int, width: int = ACCESS_BYTES) -> None:
        if not self.contains(address, width):
            raise UnmappedAccess(address, width)


DEFAULT_REGION = MemoryRegion()


@dataclass(frozen=True)
class MemEvent:
    op: str  # "rd" or "wt"
    address: int
    width: int
    pc: int


@dataclass
class ConcreteState:
    """
    Register file, Z/N flags, byte memory and program counter.

    Registers that are not set read as zero; ``xzr`` is never stored.
    """

    regs: Dict[str, int] = field(default_factory=dict)
    z: bool = False
    n: bool = False
    memory: Memory = field(default_factory=Memory)
    pc: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.memory, Memory):
            self.memory = Memory(self.memory)
        self.regs = {r: v & MASK64 for r, v in self.regs.items() if r != ZERO_REGISTER}

    def read(self, reg: str) -> int:
        if reg == ZERO_REGISTER:
            return 0
        return self.regs.get(reg, 0)

    def write(self, reg: str, value: int) -> None:
        if reg != ZERO_REGISTER:
            self.regs[reg] = value & MASK64

    def copy(self) -> "ConcreteState":
        return replace(self, regs=dict(self.regs), memory=Memory(self.memory))

    def to_env(self) -> Dict[str, object]:
        """Symbol environment for the IR evaluator (registers, flags, memory)."""
        env: Dict[str, object] = {r: self.read(r) for r in GENERAL_REGISTERS}
        env["z"] = int(self.z)
        env["n"] = int(self.n)
        env["mem"] = self.memory
        return env

    @classmethod
    def from_env(cls, env: Mapping[str, object], pc: int = 0) -> "ConcreteState":
        regs = {r: int(env.get(r, 0)) for r in GENERAL_REGISTERS}  # type: ignore[arg-type]
        memory = env.get("mem") or Memory()
        return cls(
            regs=regs,
            z=bool(env.get("z", 0)),
            n=bool(env.get("n", 0)),
            memory=memory,  # type: ignore[arg-type]
            pc=pc,
        )

    def same_architectural_state(self, other: "ConcreteState") -> bool:
        """Registers, flags and non-zero memory bytes are equal."""
        return (
            all(self.read(r) == other.read(r) for r in GENERAL_REGISTERS)
            and self.z == other.z
            and self.n == other.n
            and {a: v for a, v in self.memory.items() if v}
            == {a: v for a, v in other.memory.items() if v}
        )


def _operand(state: ConcreteState, ins: Instruction) -> int:
    return state.read(ins.rm) if ins.rm is not None else (ins.imm or 0)


def concrete_step(
    state: ConcreteState,
    program: Sequence[Instruction],
    region: MemoryRegion = DEFAULT_REGION,
) -> Tuple[ConcreteState, Optional[MemEvent]]:
    """
    Execute the instruction at ``state.pc``.

    Example:
        >>> from sidecheck.bir.isa import add
        >>> s = ConcreteState(regs={"x1": 130})
        >>> s2, event = concrete_step(s, [add("x1", "x1", 8)])
        >>> s2.read("x1"), event
        (138, None)
    """
    if not 0 <= state.pc < len(program):
        raise MalformedProgram(f"pc {state.pc} outside program of length {len(program)}")
    ins = program[state.pc]
    nxt = state.copy()
    nxt.pc = state.pc + 1
    event = None
    op = ins.op

    if op == Op.LDR:
        address = (state.read(ins.rn) + ins.mem_offset) & MASK64
        region.check(address, ACCESS_BYTES)
        nxt.write(ins.rd, state.memory.read(address, ACCESS_BYTES))
        event = MemEvent("rd", address, ACCESS_BYTES, state.pc)
    elif op == Op.STR:
        address = (state.read(ins.rn) + ins.mem_offset) & MASK64
        region.check(address, ACCESS_BYTES)
        nxt.memory = state.memory.written(address, state.read(ins.rd), ACCESS_BYTES)
        event = MemEvent("wt", address, ACCESS_BYTES, state.pc)
    elif op == Op.MOV:
        nxt.write(ins.rd, state.read(ins.rn) if ins.rn is not None else (ins.imm or 0))
    elif op == Op.ADD:
        nxt.write(ins.rd, state.read(ins.rn) + _operand(state, ins))
    elif op == Op.SUB:
        nxt.write(ins.rd, state.read(ins.rn) - _operand(state, ins))
    elif op == Op.MUL:
        nxt.write(ins.rd, state.read(ins.rn) * state.read(ins.rm))
    elif op == Op.CMP:
        a, b = state.read(ins.rn), _operand(state, ins)
        nxt.z = a == b
        nxt.n = bool(((a - b) & MASK64) >> 63)
    elif op == Op.B:
        nxt.pc = state.pc + ins.target
    elif op == Op.BEQ:
        if state.z:
            nxt.pc = state.pc + ins.target
    elif op == Op.CBZ:
        if state.read(ins.rn) == 0:
            nxt.pc = state.pc + ins.target
    elif op == Op.CBNZ:
        if state.read(ins.rn) != 0:
            nxt.pc = state.pc + ins.target
    return nxt, event


def run_concrete(
    program: Sequence[Instruction],
    init: ConcreteState,
    region: MemoryRegion = DEFAULT_REGION,
) -> Tuple[ConcreteState, List[MemEvent]]:
    """Run to the end of the program and return the final state and ordered memory events."""
    state = init.copy()
    events: List[MemEvent] = []
    steps = 0
    while state.pc < len(program):
        state, event = concrete_step(state, program, region)
        if event is not None:
            events.append(event)
        steps += 1
        if steps > len(program):
            raise MalformedProgram("program did not terminate within its length")
    return state, events

