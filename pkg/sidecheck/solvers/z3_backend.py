"""
In-process z3 backend.
"""

from typing import Any, Dict, Optional
from pathlib import Path
import logging

from sidecheck.bir import ir
from sidecheck.errors import SolverTimeout, UnsupportedExpr
from sidecheck.relsynth import RelFormula
from sidecheck.solvers.base import Sat, SolverBackend, SolverResult, Unknown, Unsat
from sidecheck.solvers.smtlib import to_smtlib

logger = logging.getLogger("sidecheck.solvers")

try:
    import z3

    HAS_Z3 = True
except ImportError:
    HAS_Z3 = False


def _require_z3() -> None:
    if not HAS_Z3:
        raise ImportError(
            "z3-solver is required for the z3 backend. Install it with: pip install z3-solver"
        )


class Z3Translator:
    """Builds z3 terms for IR nodes, sharing repeated subterms."""

    def __init__(self) -> None:
        _require_z3()
        self.symbols: Dict[str, Any] = {}
        self._memo: Dict[int, Any] = {}
        self._keep: list = []

    def symbol(self, name: str, width: Optional[int]) -> Any:
        if name not in self.symbols:
            if width is None:
                sort = z3.ArraySort(z3.BitVecSort(ir.WORD), z3.BitVecSort(8))
                self.symbols[name] = z3.Const(name, sort)
            else:
                self.symbols[name] = z3.BitVec(name, width)
        return self.symbols[name]

    def translate(self, root: Any) -> Any:
        for node in ir.walk(root):
            if id(node) not in self._memo:
                self._memo[id(node)] = self._build(node)
                self._keep.append(node)
        return self._memo[id(root)]

    def _build(self, node: Any) -> Any:
        def sub(child: Any) -> Any:
            return self._memo[id(child)]

        one, zero = z3.BitVecVal(1, 1), z3.BitVecVal(0, 1)
        if isinstance(node, ir.Const):
            return z3.BitVecVal(node.value, node.width)
        if isinstance(node, ir.Var):
            return self.symbol(node.name, node.width)
        if isinstance(node, ir.MemVar):
            return self.symbol(node.name, None)
        if isinstance(node, ir.BinOp):
            a, b = sub(node.lhs), sub(node.rhs)
            simple = {
                "add": lambda: a + b,
                "sub": lambda: a - b,
                "mul": lambda: a * b,
                "and": lambda: a & b,
                "or": lambda: a | b,
                "xor": lambda: a ^ b,
                "shl": lambda: a << b,
                "lshr": lambda: z3.LShR(a, b),
                "eq": lambda: z3.If(a == b, one, zero),
                "ult": lambda: z3.If(z3.ULT(a, b), one, zero),
                "ule": lambda: z3.If(z3.ULE(a, b), one, zero),
            }
            if node.op in simple:
                return simple[node.op]()
        if isinstance(node, ir.UnOp):
            return ~sub(node.arg) if node.op == "not" else -sub(node.arg)
        if isinstance(node, ir.Ite):
            return z3.If(sub(node.cond) == one, sub(node.then), sub(node.other))
        if isinstance(node, ir.ZeroExt):
            extra = node.width - node.arg.width
            return sub(node.arg) if extra == 0 else z3.ZeroExt(extra, sub(node.arg))
        if isinstance(node, ir.Extract):
            return z3.Extract(node.hi, node.lo, sub(node.arg))
        if isinstance(node, ir.Load):
            mem, addr = sub(node.mem), sub(node.addr)
            parts = [z3.Select(mem, addr + i) for i in reversed(range(node.nbytes))]
            return parts[0] if node.nbytes == 1 else z3.Concat(*parts)
        if isinstance(node, ir.Store):
            mem, addr, value = sub(node.mem), sub(node.addr), sub(node.value)
            for i in range(node.nbytes):
                mem = z3.Store(mem, addr + i, z3.Extract(8 * i + 7, 8 * i, value))
            return mem
        raise UnsupportedExpr(f"cannot translate {type(node).__name__} for z3")


def _base_memory(mem: Any) -> ir.MemVar:
    while isinstance(mem, ir.Store):
        mem = mem.mem
    return mem


class Z3Backend(SolverBackend):
    """
    Decides queries with the z3 Python bindings.

    Example:
        >>> Z3Backend().solve(RelFormula(ir.TRUE)).verdict
        'sat'
    """

    def __init__(
        self, name: Optional[str] = None, timeout: float = 30.0, keep_dir: Optional[Path] = None
    ):
        super().__init__(name or "z3", timeout, keep_dir)
        _require_z3()

    def solve(self, query: RelFormula) -> SolverResult:
        self.keep_script(to_smtlib(query) if self.keep_dir is not None else "")
        formula = query.formula
        translator = Z3Translator()
        solver = z3.Solver()
        solver.set(timeout=int(self.timeout * 1000))
        solver.add(translator.translate(formula) == z3.BitVecVal(1, 1))

        answer = solver.check()
        if answer == z3.unsat:
            return Unsat()
        if answer == z3.unknown:
            reason = solver.reason_unknown()
            if "timeout" in reason or "canceled" in reason:
                logger.warning(f"z3 timed out after {self.timeout:g}s")
                raise SolverTimeout(self.timeout)
            return Unknown(reason)

        model = solver.model()
        assignment: Dict[str, int] = {}
        for name, width in sorted(ir.symbols(formula).items()):
            if width is not None:
                value = model.eval(translator.symbol(name, width), model_completion=True)
                assignment[name] = value.as_long()

        memories: Dict[str, Dict[int, int]] = {}
        for load in ir.loads_in(formula):
            base = _base_memory(load.mem)
            array = translator.symbol(base.name, None)
            addr = model.eval(translator.translate(load.addr), model_completion=True).as_long()
            for i in range(load.nbytes):
                byte_addr = (addr + i) & ir.mask(ir.WORD)
                byte = model.eval(
                    z3.Select(array, z3.BitVecVal(byte_addr, ir.WORD)), model_completion=True
                )
                memories.setdefault(base.name, {})[byte_addr] = byte.as_long()
        return Sat(assignment, memories)
