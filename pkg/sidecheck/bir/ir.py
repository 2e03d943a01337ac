"""
Block-structured intermediate representation.

Expressions are immutable trees over fixed-width bit-vectors (width 1 is the
boolean sort) and byte-addressed memories. Smart constructors fold constants
and drop the x+0, x*1 and boolean unit identities; nothing else is
simplified.
"""

from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union
from dataclasses import dataclass

from sidecheck.errors import MalformedProgram

WORD = 64
MEMORY_NAME = "mem"
DISCARD = "_"


def mask(width: int) -> int:
    return (1 << width) - 1


# ---------------------------------------------------------------------------
# Expression nodes
# ---------------------------------------------------------------------------

class Expr:
    """Base class of bit-vector expressions."""

    width: int

    @property
    def is_bool(self) -> bool:
        return self.width == 1


@dataclass(frozen=True)
class Const(Expr):
    value: int
    width: int = WORD

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", self.value & mask(self.width))


@dataclass(frozen=True)
class Var(Expr):
    name: str
    width: int = WORD


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    lhs: Expr
    rhs: Expr

    @property
    def width(self) -> int:  # type: ignore[override]
        return 1 if self.op in COMPARISONS else self.lhs.width


@dataclass(frozen=True)
class UnOp(Expr):
    op: str
    arg: Expr

    @property
    def width(self) -> int:  # type: ignore[override]
        return self.arg.width


@dataclass(frozen=True)
class Ite(Expr):
    cond: Expr
    then: Expr
    other: Expr

    @property
    def width(self) -> int:  # type: ignore[override]
        return self.then.width


@dataclass(frozen=True)
class ZeroExt(Expr):
    arg: Expr
    width: int


@dataclass(frozen=True)
class Extract(Expr):
    arg: Expr
    hi: int
    lo: int

    @property
    def width(self) -> int:  # type: ignore[override]
        return self.hi - self.lo + 1


class MemExpr:
    """Base class of memory-sorted expressions (arrays from 64-bit addresses to bytes)."""


@dataclass(frozen=True)
class MemVar(MemExpr):
    name: str = MEMORY_NAME


@dataclass(frozen=True)
class Store(MemExpr):
    mem: MemExpr
    addr: Expr
    value: Expr
    nbytes: int = 8


@dataclass(frozen=True)
class Load(Expr):
    mem: MemExpr
    addr: Expr
    nbytes: int = 8

    @property
    def width(self) -> int:  # type: ignore[override]
        return self.nbytes * 8


Node = Union[Expr, MemExpr]

ARITH = ("add", "sub", "mul", "and", "or", "xor", "shl", "lshr")
COMPARISONS = ("eq", "ult", "ule")

TRUE = Const(1, 1)
FALSE = Const(0, 1)


# ---------------------------------------------------------------------------
# Smart constructors
# ---------------------------------------------------------------------------

def const(value: int, width: int = WORD) -> Const:
    return Const(value, width)


def var(name: str, width: int = WORD) -> Var:
    return Var(name, width)


def _fold(op: str, a: int, b: int, width: int) -> int:
    m = mask(width)
    if op == "add":
        return (a + b) & m
    if op == "sub":
        return (a - b) & m
    if op == "mul":
        return (a * b) & m
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    if op == "shl":
        return (a << b) & m if b < width else 0
    if op == "lshr":
        return a >> b if b < width else 0
    if op == "eq":
        return int(a == b)
    if op == "ult":
        return int(a < b)
    if op == "ule":
        return int(a <= b)
    raise ValueError(f"unknown operator {op}")


def binop(op: str, lhs: Expr, rhs: Expr) -> Expr:
    if lhs.width != rhs.width:
        raise TypeError(f"width mismatch in {op}: {lhs.width} vs {rhs.width}")
    if isinstance(lhs, Const) and isinstance(rhs, Const):
        width = 1 if op in COMPARISONS else lhs.width
        return Const(_fold(op, lhs.value, rhs.value, lhs.width), width)
    if op in ("add", "or", "xor"):
        if isinstance(rhs, Const) and rhs.value == 0:
            return lhs
        if isinstance(lhs, Const) and lhs.value == 0:
            return rhs
    if op in ("sub", "shl", "lshr") and isinstance(rhs, Const) and rhs.value == 0:
        return lhs
    if op == "mul":
        if isinstance(rhs, Const) and rhs.value == 1:
            return lhs
        if isinstance(lhs, Const) and lhs.value == 1:
            return rhs
    if op == "and" and lhs.width == 1:
        if lhs == TRUE:
            return rhs
        if rhs == TRUE:
            return lhs
        if lhs == FALSE or rhs == FALSE:
            return FALSE
    if op == "or" and lhs.width == 1 and (lhs == TRUE or rhs == TRUE):
        return TRUE
    return BinOp(op, lhs, rhs)


def add(a: Expr, b: Expr) -> Expr:
    return binop("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    return binop("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    return binop("mul", a, b)


def band(a: Expr, b: Expr) -> Expr:
    return binop("and", a, b)


def bor(a: Expr, b: Expr) -> Expr:
    return binop("or", a, b)


def bxor(a: Expr, b: Expr) -> Expr:
    return binop("xor", a, b)


def shl(a: Expr, b: Expr) -> Expr:
    return binop("shl", a, b)


def lshr(a: Expr, b: Expr) -> Expr:
    return binop("lshr", a, b)


def eq(a: Expr, b: Expr) -> Expr:
    return binop("eq", a, b)


def ult(a: Expr, b: Expr) -> Expr:
    return binop("ult", a, b)


def ule(a: Expr, b: Expr) -> Expr:
    return binop("ule", a, b)


def bnot(a: Expr) -> Expr:
    """Bitwise complement; logical negation on booleans."""
    if isinstance(a, Const):
        return Const(~a.value, a.width)
    if isinstance(a, UnOp) and a.op == "not":
        return a.arg
    return UnOp("not", a)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value, a.width)
    return UnOp("neg", a)


def ne(a: Expr, b: Expr) -> Expr:
    return bnot(eq(a, b))


def ite(c: Expr, a: Expr, b: Expr) -> Expr:
    if c == TRUE:
        return a
    if c == FALSE:
        return b
    return Ite(c, a, b)


def zext(a: Expr, width: int) -> Expr:
    if a.width == width:
        return a
    if isinstance(a, Const):
        return Const(a.value, width)
    return ZeroExt(a, width)


def extract(a: Expr, hi: int, lo: int) -> Expr:
    if isinstance(a, Const):
        return Const(a.value >> lo, hi - lo + 1)
    return Extract(a, hi, lo)


def conj(*parts: Expr) -> Expr:
    result: Expr = TRUE
    for part in parts:
        result = binop("and", result, part)
    return result


def disj(*parts: Expr) -> Expr:
    result: Expr = FALSE
    for part in parts:
        result = binop("or", result, part)
    return result


def implies(a: Expr, b: Expr) -> Expr:
    return bor(bnot(a), b)


def as_bool(e: Expr) -> Expr:
    """Coerce a word-valued expression to a boolean (non-zero test)."""
    return e if e.is_bool else ne(e, Const(0, e.width))


def load(mem: MemExpr, addr: Expr, nbytes: int = 8) -> Load:
    return Load(mem, addr, nbytes)


def store(mem: MemExpr, addr: Expr, value: Expr, nbytes: int = 8) -> Store:
    return Store(mem, addr, value, nbytes)


# ---------------------------------------------------------------------------
# Statements and programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Assign:
    var: str
    expr: Any  # Expr, or MemExpr when var names a memory


@dataclass(frozen=True)
class Obs:
    cond: Expr
    exprs: Tuple[Expr, ...]


Stmt = Union[Assign, Obs]


@dataclass(frozen=True)
class Jmp:
    target: str


@dataclass(frozen=True)
class CJmp:
    cond: Expr
    then: str
    other: str


@dataclass(frozen=True)
class Halt:
    pass


Terminator = Union[Jmp, CJmp, Halt]


@dataclass(frozen=True)
class IrBlock:
    label: str
    stmts: Tuple[Stmt, ...]
    term: Terminator
    pc: Optional[int] = None

    def successors(self) -> Tuple[str, ...]:
        if isinstance(self.term, Jmp):
            return (self.term.target,)
        if isinstance(self.term, CJmp):
            return (self.term.then, self.term.other)
        return ()


@dataclass(frozen=True)
class IrProgram:
    blocks: Tuple[IrBlock, ...]

    def __post_init__(self) -> None:
        labels = [b.label for b in self.blocks]
        if len(set(labels)) != len(labels):
            raise MalformedProgram("duplicate block label")
        known = set(labels)
        for blk in self.blocks:
            for target in blk.successors():
                if target not in known:
                    raise MalformedProgram(f"{blk.label}: jump to unknown label '{target}'")

    @property
    def entry(self) -> str:
        return self.blocks[0].label

    def block(self, label: str) -> IrBlock:
        for blk in self.blocks:
            if blk.label == label:
                return blk
        raise KeyError(label)

    def by_label(self) -> Dict[str, IrBlock]:
        return {blk.label: blk for blk in self.blocks}


# ---------------------------------------------------------------------------
# Traversal
# ---------------------------------------------------------------------------

def children(node: Node) -> Tuple[Node, ...]:
    if isinstance(node, BinOp):
        return (node.lhs, node.rhs)
    if isinstance(node, (UnOp, ZeroExt, Extract)):
        return (node.arg,)
    if isinstance(node, Ite):
        return (node.cond, node.then, node.other)
    if isinstance(node, Load):
        return (node.mem, node.addr)
    if isinstance(node, Store):
        return (node.mem, node.addr, node.value)
    return ()


def walk(node: Node) -> Iterator[Node]:
    """Post-order traversal visiting shared subtrees once."""
    seen = set()
    stack: List[Tuple[Node, bool]] = [(node, False)]
    while stack:
        current, expanded = stack.pop()
        if id(current) in seen:
            continue
        if expanded:
            seen.add(id(current))
            yield current
            continue
        stack.append((current, True))
        for child in reversed(children(current)):
            stack.append((child, False))


def symbols(*nodes: Node) -> Dict[str, Optional[int]]:
    """Free symbols of the given nodes: name -> width (None for memories)."""
    found: Dict[str, Optional[int]] = {}
    for node in nodes:
        for sub_node in walk(node):
            if isinstance(sub_node, Var):
                found[sub_node.name] = sub_node.width
            elif isinstance(sub_node, MemVar):
                found[sub_node.name] = None
    return found


def loads_in(*nodes: Node) -> List[Load]:
    result = []
    for node in nodes:
        result.extend(n for n in walk(node) if isinstance(n, Load))
    return result


def rebuild(node: Node, parts: Sequence[Node]) -> Node:
    """Rebuild ``node`` with new children through the smart constructors."""
    if isinstance(node, BinOp):
        return binop(node.op, parts[0], parts[1])  # type: ignore[arg-type]
    if isinstance(node, UnOp):
        return bnot(parts[0]) if node.op == "not" else neg(parts[0])  # type: ignore[arg-type]
    if isinstance(node, Ite):
        return ite(*parts)  # type: ignore[arg-type]
    if isinstance(node, ZeroExt):
        return zext(parts[0], node.width)  # type: ignore[arg-type]
    if isinstance(node, Extract):
        return extract(parts[0], node.hi, node.lo)  # type: ignore[arg-type]
    if isinstance(node, Load):
        return Load(parts[0], parts[1], node.nbytes)  # type: ignore[arg-type]
    if isinstance(node, Store):
        return Store(parts[0], parts[1], parts[2], node.nbytes)  # type: ignore[arg-type]
    return node


def substitute(node: Node, mapping: Mapping[str, Node]) -> Any:
    """Replace free variables and memory symbols by name."""
    memo: Dict[int, Node] = {}
    for current in walk(node):
        if id(current) in memo:
            continue
        if isinstance(current, (Var, MemVar)):
            result = mapping.get(current.name, current)
        else:
            kids = children(current)
            new_kids = [memo[id(k)] for k in kids]
            if all(a is b for a, b in zip(kids, new_kids)):
                result = current
            else:
                result = rebuild(current, new_kids)
        memo[id(current)] = result
    return memo[id(node)]


def rename(node: Node, renamer: Callable[[str], str]) -> Any:
    """Rename every free symbol of ``node``."""
    mapping: Dict[str, Node] = {}
    for name, width in symbols(node).items():
        mapping[name] = MemVar(renamer(name)) if width is None else Var(renamer(name), width)
    return substitute(node, mapping)


# ---------------------------------------------------------------------------
# Concrete evaluation
# ---------------------------------------------------------------------------

class Memory(dict):
    """Sparse byte memory; unset bytes read as zero."""

    def read(self, addr: int, nbytes: int) -> int:
        value = 0
        for i in range(nbytes):
            value |= self.get((addr + i) & mask(WORD), 0) << (8 * i)
        return value

    def written(self, addr: int, value: int, nbytes: int) -> "Memory":
        result = Memory(self)
        for i in range(nbytes):
            result[(addr + i) & mask(WORD)] = (value >> (8 * i)) & 0xFF
        return result


def evaluate(node: Node, env: Mapping[str, Any]) -> Any:
    """
    Evaluate an expression under ``env`` (symbol name -> int, or -> byte mapping for memories).

    Unbound word symbols evaluate to 0 and unbound memories to all-zero memory.

    Example:
        >>> evaluate(add(var("x1"), const(8)), {"x1": 130})
        138
    """
    memo: Dict[int, Any] = {}
    for current in walk(node):
        if id(current) in memo:
            continue
        memo[id(current)] = _eval_node(current, env, memo)
    return memo[id(node)]


def _eval_node(node: Node, env: Mapping[str, Any], memo: Dict[int, Any]) -> Any:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return env.get(node.name, 0) & mask(node.width)
    if isinstance(node, MemVar):
        value = env.get(node.name)
        if value is None:
            return Memory()
        return value if isinstance(value, Memory) else Memory(value)
    if isinstance(node, BinOp):
        return _fold(node.op, memo[id(node.lhs)], memo[id(node.rhs)], node.lhs.width)
    if isinstance(node, UnOp):
        arg = memo[id(node.arg)]
        if node.op == "not":
            return ~arg & mask(node.width)
        return -arg & mask(node.width)
    if isinstance(node, Ite):
        return memo[id(node.then)] if memo[id(node.cond)] else memo[id(node.other)]
    if isinstance(node, ZeroExt):
        return memo[id(node.arg)]
    if isinstance(node, Extract):
        return (memo[id(node.arg)] >> node.lo) & mask(node.width)
    if isinstance(node, Load):
        return memo[id(node.mem)].read(memo[id(node.addr)], node.nbytes)
    if isinstance(node, Store):
        return memo[id(node.mem)].written(memo[id(node.addr)], memo[id(node.value)], node.nbytes)
    raise TypeError(f"cannot evaluate {type(node).__name__}")


# ---------------------------------------------------------------------------
# Memory accesses of statements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Access:
    """A memory access performed by one statement."""

    op: str  # "rd" or "wt"
    addr: Expr
    nbytes: int
    discarded: bool = False


def statement_accesses(stmt: Stmt) -> List[Access]:
    """Accesses of an assignment, loads first, in evaluation order."""
    if not isinstance(stmt, Assign):
        return []
    result = []
    writes = []
    for node in walk(stmt.expr):
        if isinstance(node, Load):
            result.append(Access("rd", node.addr, node.nbytes, stmt.var == DISCARD))
        elif isinstance(node, Store):
            writes.append(Access("wt", node.addr, node.nbytes))
    return result + writes

