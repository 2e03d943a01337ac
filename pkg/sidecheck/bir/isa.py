"""
The reduced AArch64-flavoured instruction set and its textual assembly format.

Programs are tuples of immutable ``Instruction`` values. Branch targets are
kept as forward instruction offsets; in assembly text they are written as
byte offsets (four bytes per instruction), e.g. ``b.eq #0x14``.
"""

from typing import Iterable, List, Optional, Sequence, Tuple
from dataclasses import dataclass
from enum import Enum
import re

from sidecheck.errors import ExprSyntaxError, MalformedProgram

MASK64 = (1 << 64) - 1
INSTRUCTION_BYTES = 4
MAX_MEM_OFFSET = 4096

ZERO_REGISTER = "xzr"
GENERAL_REGISTERS: Tuple[str, ...] = tuple(f"x{i}" for i in range(31))
REGISTERS: Tuple[str, ...] = GENERAL_REGISTERS + (ZERO_REGISTER,)


class Op(Enum):
    LDR = "ldr"
    STR = "str"
    MOV = "mov"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    CMP = "cmp"
    B = "b"
    BEQ = "b.eq"
    CBZ = "cbz"
    CBNZ = "cbnz"
    NOP = "nop"


MEMORY_OPS = frozenset({Op.LDR, Op.STR})
BRANCH_OPS = frozenset({Op.B, Op.BEQ, Op.CBZ, Op.CBNZ})
ARITH_OPS = frozenset({Op.MOV, Op.ADD, Op.SUB, Op.MUL})


@dataclass(frozen=True)
class Instruction:
    """
    One instruction of the reduced ISA.

    Field usage per mnemonic:
        ldr/str   rd, [rn{, #offset}]      (str stores rd)
        mov       rd, rn | #imm
        add/sub   rd, rn, rm | #imm
        mul       rd, rn, rm
        cmp       rn, rm | #imm
        b/b.eq    #target
        cbz/cbnz  rn, #target
        nop

    ``offset`` is None when the memory operand has no immediate written;
    ``target`` is a forward offset counted in instructions.
    """

    op: Op
    rd: Optional[str] = None
    rn: Optional[str] = None
    rm: Optional[str] = None
    imm: Optional[int] = None
    offset: Optional[int] = None
    target: Optional[int] = None

    @property
    def is_memory(self) -> bool:
        return self.op in MEMORY_OPS

    @property
    def is_branch(self) -> bool:
        return self.op in BRANCH_OPS

    @property
    def mem_offset(self) -> int:
        return self.offset or 0

    def registers(self) -> Tuple[str, ...]:
        """Registers named by this instruction, in operand order."""
        return tuple(r for r in (self.rd, self.rn, self.rm) if r is not None)

    def __str__(self) -> str:
        return format_instruction(self)


Program = Tuple[Instruction, ...]


# Convenience constructors used by generators and tests.

def ldr(rd: str, rn: str, offset: Optional[int] = None) -> Instruction:
    return Instruction(Op.LDR, rd=rd, rn=rn, offset=offset)


def str_(rs: str, rn: str, offset: Optional[int] = None) -> Instruction:
    return Instruction(Op.STR, rd=rs, rn=rn, offset=offset)


def mov(rd: str, src) -> Instruction:
    if isinstance(src, int):
        return Instruction(Op.MOV, rd=rd, imm=src & MASK64)
    return Instruction(Op.MOV, rd=rd, rn=src)


def add(rd: str, rn: str, src) -> Instruction:
    if isinstance(src, int):
        return Instruction(Op.ADD, rd=rd, rn=rn, imm=src & MASK64)
    return Instruction(Op.ADD, rd=rd, rn=rn, rm=src)


def sub(rd: str, rn: str, src) -> Instruction:
    if isinstance(src, int):
        return Instruction(Op.SUB, rd=rd, rn=rn, imm=src & MASK64)
    return Instruction(Op.SUB, rd=rd, rn=rn, rm=src)


def mul(rd: str, rn: str, rm: str) -> Instruction:
    return Instruction(Op.MUL, rd=rd, rn=rn, rm=rm)


def cmp(rn: str, src) -> Instruction:
    if isinstance(src, int):
        return Instruction(Op.CMP, rn=rn, imm=src & MASK64)
    return Instruction(Op.CMP, rn=rn, rm=src)


def b(target: int) -> Instruction:
    return Instruction(Op.B, target=target)


def beq(target: int) -> Instruction:
    return Instruction(Op.BEQ, target=target)


def cbz(rn: str, target: int) -> Instruction:
    return Instruction(Op.CBZ, rn=rn, target=target)


def cbnz(rn: str, target: int) -> Instruction:
    return Instruction(Op.CBNZ, rn=rn, target=target)


def nop() -> Instruction:
    return Instruction(Op.NOP)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

_REQUIRED = {
    Op.LDR: ("rd", "rn"),
    Op.STR: ("rd", "rn"),
    Op.MOV: ("rd",),
    Op.ADD: ("rd", "rn"),
    Op.SUB: ("rd", "rn"),
    Op.MUL: ("rd", "rn", "rm"),
    Op.CMP: ("rn",),
    Op.B: ("target",),
    Op.BEQ: ("target",),
    Op.CBZ: ("rn", "target"),
    Op.CBNZ: ("rn", "target"),
    Op.NOP: (),
}


def validate_program(program: Sequence[Instruction]) -> Program:
    """
    Check the instruction invariants and return the program as a tuple.

    Raises:
        MalformedProgram: on unknown registers, missing operands, oversized
            memory offsets, or branches that are not strictly forward into
            ``(pc, len(program)]``.
    """
    n = len(program)
    for pc, ins in enumerate(program):
        for field_name in _REQUIRED[ins.op]:
            if getattr(ins, field_name) is None:
                raise MalformedProgram(f"{pc}: {ins.op.value} is missing operand '{field_name}'")
        for reg in ins.registers():
            if reg not in REGISTERS:
                raise MalformedProgram(f"{pc}: unknown register '{reg}'")
        if ins.op in (Op.ADD, Op.SUB, Op.CMP):
            if ins.rm is None and ins.imm is None:
                raise MalformedProgram(f"{pc}: {ins.op.value} needs a register or immediate")
        if ins.op == Op.MOV and ins.rn is None and ins.imm is None:
            raise MalformedProgram(f"{pc}: mov needs a register or immediate")
        if ins.is_memory and abs(ins.mem_offset) > MAX_MEM_OFFSET:
            raise MalformedProgram(f"{pc}: memory offset {ins.mem_offset} exceeds {MAX_MEM_OFFSET}")
        if ins.is_branch:
            if ins.target is None or ins.target < 1:
                raise MalformedProgram(f"{pc}: branch target must be strictly forward")
            if pc + ins.target > n:
                raise MalformedProgram(f"{pc}: branch target {pc + ins.target} is outside the program")
    return tuple(program)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

def _imm(value: int) -> str:
    return f"#{value}"


def _mem(ins: Instruction) -> str:
    if ins.offset is None:
        return f"[{ins.rn}]"
    return f"[{ins.rn}, #{ins.offset}]"


def _target(ins: Instruction) -> str:
    return f"#{ins.target * INSTRUCTION_BYTES:#x}"


def format_instruction(ins: Instruction) -> str:
    """Canonical assembly text for one instruction."""
    op = ins.op
    if op == Op.NOP:
        return "nop"
    if op in MEMORY_OPS:
        return f"{op.value} {ins.rd}, {_mem(ins)}"
    if op == Op.MOV:
        return f"mov {ins.rd}, {ins.rn if ins.rn is not None else _imm(ins.imm)}"
    if op in (Op.ADD, Op.SUB):
        src = ins.rm if ins.rm is not None else _imm(ins.imm)
        return f"{op.value} {ins.rd}, {ins.rn}, {src}"
    if op == Op.MUL:
        return f"mul {ins.rd}, {ins.rn}, {ins.rm}"
    if op == Op.CMP:
        return f"cmp {ins.rn}, {ins.rm if ins.rm is not None else _imm(ins.imm)}"
    if op in (Op.B, Op.BEQ):
        return f"{op.value} {_target(ins)}"
    return f"{op.value} {ins.rn}, {_target(ins)}"


def format_program(program: Iterable[Instruction]) -> str:
    return "\n".join(format_instruction(ins) for ins in program)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_MEM_RE = re.compile(r"^\[\s*(\w+)\s*(?:,\s*#?\s*(-?(?:0x[0-9a-f]+|\d+))\s*)?\]$", re.IGNORECASE)
_COMMENT_RE = re.compile(r"(//|;).*$")


def _parse_int(text: str, line: str) -> int:
    text = text.strip().lstrip("#").strip()
    try:
        return int(text, 0)
    except ValueError:
        raise ExprSyntaxError(f"bad immediate '{text}' in '{line}'")


def _parse_reg(text: str, line: str) -> str:
    reg = text.strip().lower()
    if reg not in REGISTERS:
        raise ExprSyntaxError(f"unknown register '{text.strip()}' in '{line}'")
    return reg


def _split_operands(rest: str) -> List[str]:
    """Split on commas that are not inside brackets."""
    parts, depth, current = [], 0, []
    for ch in rest:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    if "".join(current).strip():
        parts.append("".join(current).strip())
    return parts


def _reg_or_imm(text: str, line: str) -> Tuple[Optional[str], Optional[int]]:
    if text.strip().startswith("#") or text.strip()[:1].isdigit() or text.strip().startswith("-"):
        return None, _parse_int(text, line) & MASK64
    return _parse_reg(text, line), None


def _branch_target(text: str, line: str) -> int:
    byte_offset = _parse_int(text, line)
    if byte_offset % INSTRUCTION_BYTES:
        raise ExprSyntaxError(f"branch offset {byte_offset} is not a multiple of 4 in '{line}'")
    return byte_offset // INSTRUCTION_BYTES


def parse_instruction(line: str) -> Instruction:
    """Parse one line of assembly text."""
    text = _COMMENT_RE.sub("", line).strip()
    if not text:
        raise ExprSyntaxError("empty instruction")
    head, _, rest = text.partition(" ")
    mnemonic = head.strip().lower()
    if mnemonic == "beq":
        mnemonic = "b.eq"
    try:
        op = Op(mnemonic)
    except ValueError:
        raise ExprSyntaxError(f"unknown mnemonic '{head}' in '{line}'")
    args = _split_operands(rest)

    def expect(count: int) -> None:
        if len(args) != count:
            raise ExprSyntaxError(f"{mnemonic} takes {count} operand(s) in '{line}'")

    if op == Op.NOP:
        expect(0)
        return Instruction(op)
    if op in MEMORY_OPS:
        expect(2)
        match = _MEM_RE.match(args[1])
        if not match:
            raise ExprSyntaxError(f"bad memory operand '{args[1]}' in '{line}'")
        offset = None if match.group(2) is None else int(match.group(2), 0)
        rd, rn = _parse_reg(args[0], line), _parse_reg(match.group(1), line)
        return Instruction(op, rd=rd, rn=rn, offset=offset)
    if op == Op.MOV:
        expect(2)
        rn, imm = _reg_or_imm(args[1], line)
        return Instruction(op, rd=_parse_reg(args[0], line), rn=rn, imm=imm)
    if op in (Op.ADD, Op.SUB):
        expect(3)
        rm, imm = _reg_or_imm(args[2], line)
        rd, rn = _parse_reg(args[0], line), _parse_reg(args[1], line)
        return Instruction(op, rd=rd, rn=rn, rm=rm, imm=imm)
    if op == Op.MUL:
        expect(3)
        return Instruction(
            op, rd=_parse_reg(args[0], line), rn=_parse_reg(args[1], line), rm=_parse_reg(args[2], line)
        )
    if op == Op.CMP:
        expect(2)
        rm, imm = _reg_or_imm(args[1], line)
        return Instruction(op, rn=_parse_reg(args[0], line), rm=rm, imm=imm)
    if op in (Op.B, Op.BEQ):
        expect(1)
        return Instruction(op, target=_branch_target(args[0], line))
    expect(2)
    return Instruction(op, rn=_parse_reg(args[0], line), target=_branch_target(args[1], line))


def parse_program(text: str) -> Program:
    """
    Parse assembly text (one instruction per line, ``;`` or ``//`` comments)
    and validate it.

    Example:
        >>> program = parse_program("ldr x2, [x10, #0]\\nldr x20, [x10, #128]")
        >>> format_program(program)
        'ldr x2, [x10, #0]\\nldr x20, [x10, #128]'
    """
    instructions = []
    for raw in text.splitlines():
        if not _COMMENT_RE.sub("", raw).strip():
            continue
        instructions.append(parse_instruction(raw))
    return validate_program(instructions)
