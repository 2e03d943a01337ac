"""
Reduced ISA, concrete semantics, IR and transpiler.
"""

from sidecheck.bir.isa import (
    Instruction,
    Op,
    Program,
    format_instruction,
    format_program,
    parse_instruction,
    parse_program,
    validate_program,
)
from sidecheck.bir.concrete import (
    DEFAULT_REGION,
    MEM_BASE,
    MEM_SIZE,
    ConcreteState,
    MemEvent,
    MemoryRegion,
    concrete_step,
    run_concrete,
)
from sidecheck.bir.ir import IrBlock, IrProgram
from sidecheck.bir.interp import IrRun, run_ir
from sidecheck.bir.text import format_expr, format_ir, parse_expr
from sidecheck.bir.transpile import transpile

__all__ = [
    "Instruction",
    "Op",
    "Program",
    "format_instruction",
    "format_program",
    "parse_instruction",
    "parse_program",
    "validate_program",
    "DEFAULT_REGION",
    "MEM_BASE",
    "MEM_SIZE",
    "ConcreteState",
    "MemEvent",
    "MemoryRegion",
    "concrete_step",
    "run_concrete",
    "IrBlock",
    "IrProgram",
    "IrRun",
    "run_ir",
    "format_expr",
    "format_ir",
    "parse_expr",
    "transpile",
]
