"""
Transpilation of ISA programs into IR.
"""

from typing import List, Sequence
import logging

from sidecheck.bir import ir
from sidecheck.bir.isa import ZERO_REGISTER, Instruction, Op, validate_program

logger = logging.getLogger("sidecheck")

FLAG_Z = ir.Var("z", 1)
FLAG_N = ir.Var("n", 1)
MEMORY = ir.MemVar(ir.MEMORY_NAME)


def label(index: int) -> str:
    return f"l{index}"


def reg(name: str) -> ir.Expr:
    """Read of a register; the zero register reads as the constant 0."""
    if name == ZERO_REGISTER:
        return ir.const(0)
    return ir.var(name)


def address_of(ins: Instruction) -> ir.Expr:
    return ir.add(reg(ins.rn), ir.const(ins.mem_offset))


def _source(ins: Instruction) -> ir.Expr:
    return reg(ins.rm) if ins.rm is not None else ir.const(ins.imm or 0)


def _write(rd: str, expr: ir.Expr) -> List[ir.Stmt]:
    if rd == ZERO_REGISTER:
        return []
    return [ir.Assign(rd, expr)]


def translate_instruction(ins: Instruction) -> List[ir.Stmt]:
    """IR statements for the data effect of one instruction (control flow excluded)."""
    op = ins.op
    if op == Op.LDR:
        value = ir.load(MEMORY, address_of(ins))
        # the access happens even when the result is thrown away
        target = ir.DISCARD if ins.rd == ZERO_REGISTER else ins.rd
        return [ir.Assign(target, value)]
    if op == Op.STR:
        return [ir.Assign(ir.MEMORY_NAME, ir.store(MEMORY, address_of(ins), reg(ins.rd)))]
    if op == Op.MOV:
        return _write(ins.rd, reg(ins.rn) if ins.rn is not None else ir.const(ins.imm or 0))
    if op == Op.ADD:
        return _write(ins.rd, ir.add(reg(ins.rn), _source(ins)))
    if op == Op.SUB:
        return _write(ins.rd, ir.sub(reg(ins.rn), _source(ins)))
    if op == Op.MUL:
        return _write(ins.rd, ir.mul(reg(ins.rn), reg(ins.rm)))
    if op == Op.CMP:
        a, b = reg(ins.rn), _source(ins)
        return [
            ir.Assign("z", ir.eq(a, b)),
            ir.Assign("n", ir.extract(ir.sub(a, b), 63, 63)),
        ]
    return []


def _terminator(ins: Instruction, pc: int, length: int) -> ir.Terminator:
    fall = label(pc + 1)
    if ins.op == Op.B:
        return ir.Jmp(label(pc + ins.target))
    if ins.op == Op.BEQ:
        return ir.CJmp(FLAG_Z, label(pc + ins.target), fall)
    if ins.op == Op.CBZ:
        return ir.CJmp(ir.eq(reg(ins.rn), ir.const(0)), label(pc + ins.target), fall)
    if ins.op == Op.CBNZ:
        return ir.CJmp(ir.eq(reg(ins.rn), ir.const(0)), fall, label(pc + ins.target))
    if pc + 1 == length:
        return ir.Halt()
    return ir.Jmp(fall)


def transpile(program: Sequence[Instruction]) -> ir.IrProgram:
    """
    Translate a program into IR, one block per instruction labelled ``l<index>``.

    A statement-free ``HALT`` block ``l<len>`` is appended when some branch
    targets the end of the program.

    Example:
        >>> from sidecheck.bir.isa import parse_program
        >>> prog = transpile(parse_program("b.eq #0x8\\nmul x1, x2, x3\\nldr x2, [x1]"))
        >>> prog.blocks[0].term
        CJmp(cond=Var(name='z', width=1), then='l2', other='l1')
    """
    program = validate_program(program)
    length = len(program)
    if length == 0:
        return ir.IrProgram((ir.IrBlock(label(0), (), ir.Halt(), pc=0),))
    blocks = []
    needs_exit = False
    for pc, ins in enumerate(program):
        term = _terminator(ins, pc, length)
        blk = ir.IrBlock(label(pc), tuple(translate_instruction(ins)), term, pc=pc)
        if label(length) in blk.successors():
            needs_exit = True
        blocks.append(blk)
    if needs_exit:
        blocks.append(ir.IrBlock(label(length), (), ir.Halt(), pc=length))
    logger.debug(f"Transpiled {length} instructions into {len(blocks)} blocks")
    return ir.IrProgram(tuple(blocks))
