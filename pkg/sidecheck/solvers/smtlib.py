"""
SMT-LIB2 lowering of relation formulas and parsing of solver answers.

Formulas are bit-vector terms (width 1 for booleans) asserted equal to
``#b1``. Registers are 64-bit vectors, flags 1-bit vectors and each memory
an array from 64-bit addresses to bytes. Subterms used more than once are
bound once with ``define-fun`` so shared formula DAGs stay linear in size.
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
from dataclasses import dataclass
import re

from sidecheck.bir import ir
from sidecheck.errors import ModelParseError, UnsupportedExpr
from sidecheck.relsynth import RelFormula

LOGIC = "QF_ABV"
MEMORY_SORT = "(Array (_ BitVec 64) (_ BitVec 8))"

_BV_OPS = {
    "add": "bvadd",
    "sub": "bvsub",
    "mul": "bvmul",
    "and": "bvand",
    "or": "bvor",
    "xor": "bvxor",
    "shl": "bvshl",
    "lshr": "bvlshr",
}
_CMP_OPS = {"eq": "=", "ult": "bvult", "ule": "bvule"}


def bv_literal(value: int, width: int) -> str:
    return f"(_ bv{value & ir.mask(width)} {width})"


def sort_of(width: Optional[int]) -> str:
    return MEMORY_SORT if width is None else f"(_ BitVec {width})"


@dataclass(frozen=True)
class ValueRequest:
    """A term whose model value is needed to build a test case."""

    kind: str  # "symbol" or "byte"
    name: str
    term: str
    address: Optional[str] = None  # term of the byte address, for "byte"


class SmtWriter:
    """
    Lowers IR nodes to SMT-LIB terms, sharing repeated subterms.

    Example:
        >>> w = SmtWriter()
        >>> w.term(ir.add(ir.var("x1"), ir.const(8)))
        '(bvadd x1 (_ bv8 64))'
    """

    def __init__(self, name: Optional[str] = None):
        self.name = name or "smt"
        self.definitions: List[str] = []
        self._names: Dict[int, str] = {}
        self._keep: List[Any] = []

    def _uses(self, roots: Sequence[Any]) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for root in roots:
            for node in ir.walk(root):
                for child in ir.children(node):
                    counts[id(child)] = counts.get(id(child), 0) + 1
        return counts

    def lower(self, *roots: Any) -> List[str]:
        """Lower ``roots``, emitting definitions for shared composite subterms."""
        counts = self._uses(roots)
        rendered: Dict[int, str] = dict(self._names)
        for root in roots:
            for node in ir.walk(root):
                if id(node) in rendered:
                    continue
                text = self._render(node, rendered)
                if counts.get(id(node), 0) > 1 and ir.children(node):
                    label = f"_t{len(self.definitions)}"
                    self.definitions.append(
                        f"(define-fun {label} () {sort_of(_width(node))} {text})"
                    )
                    self._names[id(node)] = label
                    self._keep.append(node)
                    text = label
                rendered[id(node)] = text
        return [rendered[id(root)] for root in roots]

    def term(self, node: Any) -> str:
        return self.lower(node)[0]

    def _render(self, node: Any, done: Dict[int, str]) -> str:
        def sub(child: Any) -> str:
            return done[id(child)]

        if isinstance(node, ir.Const):
            return bv_literal(node.value, node.width)
        if isinstance(node, (ir.Var, ir.MemVar)):
            return node.name
        if isinstance(node, ir.BinOp):
            if node.op in _BV_OPS:
                return f"({_BV_OPS[node.op]} {sub(node.lhs)} {sub(node.rhs)})"
            if node.op in _CMP_OPS:
                return f"(ite ({_CMP_OPS[node.op]} {sub(node.lhs)} {sub(node.rhs)}) #b1 #b0)"
        if isinstance(node, ir.UnOp):
            return f"({'bvnot' if node.op == 'not' else 'bvneg'} {sub(node.arg)})"
        if isinstance(node, ir.Ite):
            return f"(ite (= {sub(node.cond)} #b1) {sub(node.then)} {sub(node.other)})"
        if isinstance(node, ir.ZeroExt):
            extra = node.width - node.arg.width
            return sub(node.arg) if extra == 0 else f"((_ zero_extend {extra}) {sub(node.arg)})"
        if isinstance(node, ir.Extract):
            return f"((_ extract {node.hi} {node.lo}) {sub(node.arg)})"
        if isinstance(node, ir.Load):
            return _load_term(sub(node.mem), sub(node.addr), node.nbytes)
        if isinstance(node, ir.Store):
            return _store_term(sub(node.mem), sub(node.addr), sub(node.value), node.nbytes)
        raise UnsupportedExpr(f"cannot lower {type(node).__name__} to SMT-LIB")


def _width(node: Any) -> Optional[int]:
    return None if isinstance(node, ir.MemExpr) else node.width


def _byte_address(addr: str, i: int) -> str:
    return addr if i == 0 else f"(bvadd {addr} {bv_literal(i, ir.WORD)})"


def _load_term(mem: str, addr: str, nbytes: int) -> str:
    # little-endian: the byte at the highest address is the most significant
    parts = [f"(select {mem} {_byte_address(addr, i)})" for i in reversed(range(nbytes))]
    return parts[0] if nbytes == 1 else f"(concat {' '.join(parts)})"


def _store_term(mem: str, addr: str, value: str, nbytes: int) -> str:
    term = mem
    for i in range(nbytes):
        byte = f"((_ extract {8 * i + 7} {8 * i}) {value})"
        term = f"(store {term} {_byte_address(addr, i)} {byte})"
    return term


def _base_memory(mem: Any) -> ir.MemVar:
    while isinstance(mem, ir.Store):
        mem = mem.mem
    return mem


def value_requests(query: RelFormula, writer: SmtWriter) -> List[ValueRequest]:
    """
    Terms to ask the solver for: every word symbol, then every initial-memory
    byte read by a load. ``writer`` must already have lowered the query.
    """
    formula = query.formula
    requests = [
        ValueRequest("symbol", name, name)
        for name, width in sorted(ir.symbols(formula).items())
        if width is not None
    ]
    for load in ir.loads_in(formula):
        base = _base_memory(load.mem)
        addr = writer.term(load.addr)
        for i in range(load.nbytes):
            byte_addr = _byte_address(addr, i)
            requests.append(
                ValueRequest("byte", base.name, f"(select {base.name} {byte_addr})", byte_addr)
            )
    return requests


def to_smtlib(
    query: Union[RelFormula, ir.Expr],
    requests: Optional[List[ValueRequest]] = None,
    writer: Optional[SmtWriter] = None,
) -> str:
    """
    A complete QF_ABV script for ``query``.

    Without ``requests`` the script ends with ``(check-sat)`` and
    ``(get-model)``; with them it ends with one ``(get-value ...)`` over the
    requested terms (byte requests ask for the address and the byte).

    Example:
        >>> print(to_smtlib(ir.eq(ir.var("z", 1), ir.TRUE)).splitlines()[-4])
        (assert (= (ite (= z (_ bv1 1)) #b1 #b0) #b1))
    """
    formula = query.formula if isinstance(query, RelFormula) else query
    writer = writer or SmtWriter()
    root = writer.term(formula)
    lines = ["(set-option :produce-models true)", f"(set-logic {LOGIC})"]
    for name, width in sorted(ir.symbols(formula).items()):
        lines.append(f"(declare-fun {name} () {sort_of(width)})")
    lines.extend(writer.definitions)
    lines.append(f"(assert (= {root} #b1))")
    lines.append("(check-sat)")
    if requests is None:
        lines.append("(get-model)")
    elif requests:
        terms = []
        for request in requests:
            if request.kind == "byte":
                terms.append(request.address)
            terms.append(request.term)
        lines.append(f"(get-value ({' '.join(terms)}))")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Answers
# ---------------------------------------------------------------------------

SExpr = Union[str, List[Any]]

_TOKEN_RE = re.compile(r'\s*(\(|\)|"(?:[^"]|"")*"|\|[^|]*\||[^\s()]+)')


def tokenize(text: str) -> List[str]:
    tokens = []
    pos = 0
    text = re.sub(r";[^\n]*", "", text)
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            if text[pos:].strip():
                raise ModelParseError(f"unexpected text at offset {pos}")
            break
        tokens.append(match.group(1))
        pos = match.end()
    return tokens


def parse_sexprs(text: str) -> List[SExpr]:
    """
    All top-level s-expressions of ``text``.

    Example:
        >>> parse_sexprs("sat ((x1 #x05))")
        ['sat', [['x1', '#x05']]]
    """
    result: List[SExpr] = []
    stack: List[List[Any]] = []
    for token in tokenize(text):
        if token == "(":
            stack.append([])
        elif token == ")":
            if not stack:
                raise ModelParseError("unbalanced ')' in solver output")
            done = stack.pop()
            (stack[-1] if stack else result).append(done)
        else:
            (stack[-1] if stack else result).append(token)
    if stack:
        raise ModelParseError("unterminated s-expression in solver output")
    return result


def parse_value(value: SExpr) -> int:
    """Integer value of a bit-vector literal: ``#b..``, ``#x..`` or ``(_ bvN w)``."""
    if isinstance(value, str):
        if value.startswith("#b"):
            return int(value[2:], 2)
        if value.startswith("#x"):
            return int(value[2:], 16)
    elif len(value) == 3 and value[0] == "_" and str(value[1]).startswith("bv"):
        return int(str(value[1])[2:])
    raise ModelParseError(f"not a bit-vector literal: {value!r}")


def parse_answer(
    text: str, requests: List[ValueRequest]
) -> Tuple[str, Dict[str, int], Dict[str, Dict[int, int]]]:
    """
    Verdict, symbol values and memory bytes from the output of a script
    built by ``to_smtlib(query, requests)``.

    Values are matched to requests by position.
    """
    exprs = parse_sexprs(text)
    if not exprs or exprs[0] not in ("sat", "unsat", "unknown"):
        raise ModelParseError(f"no verdict in solver output: {text[:80]!r}")
    verdict = str(exprs[0])
    assignment: Dict[str, int] = {}
    memories: Dict[str, Dict[int, int]] = {}
    if verdict != "sat" or not requests:
        return verdict, assignment, memories
    pairs = next((e for e in exprs[1:] if isinstance(e, list)), None)
    if pairs is None or pairs[:1] == ["error"]:
        raise ModelParseError("solver did not answer get-value")
    values = [parse_value(p[1]) for p in pairs if isinstance(p, list) and len(p) == 2]
    expected = sum(2 if r.kind == "byte" else 1 for r in requests)
    if len(values) != expected:
        raise ModelParseError(f"expected {expected} values, got {len(values)}")
    it = iter(values)
    for request in requests:
        if request.kind == "symbol":
            assignment[request.name] = next(it)
        else:
            address = next(it)
            memories.setdefault(request.name, {})[address] = next(it)
    return verdict, assignment, memories
