"""
Textual form of IR expressions and programs.

The same syntax is used for dumps and for the path guards and term
expressions given in campaign files::

    (index(acc0) == 3) && !(x1 <u 0x80000000)

Integers are decimal or hex, ``<``/``<=``/``>``/``>=`` compare unsigned, and
operand widths are extended automatically.
"""

from typing import Any, List, Optional, Tuple
import re

from sidecheck.bir import ir
from sidecheck.bir.isa import GENERAL_REGISTERS, ZERO_REGISTER
from sidecheck.errors import ExprSyntaxError

_SYMBOLS = {
    "add": "+",
    "sub": "-",
    "mul": "*",
    "xor": "^",
    "shl": "<<",
    "lshr": ">>",
    "eq": "==",
    "ult": "<u",
    "ule": "<=u",
}


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

def _int(value: int) -> str:
    return str(value) if value < 4096 else hex(value)


def _geometry_call(e: ir.Expr, geometry: Any) -> Optional[str]:
    """Recognise the address-field extractions built by the observation models."""
    if geometry is None:
        return None
    off, idx = geometry.offset_bits, geometry.index_bits
    if isinstance(e, ir.BinOp) and isinstance(e.rhs, ir.Const):
        if e.op == "lshr" and e.rhs.value == off + idx:
            return f"tag({format_expr(e.lhs, geometry)})"
        if e.op == "and" and e.rhs.value == (1 << idx) - 1:
            inner = e.lhs
            if isinstance(inner, ir.BinOp) and inner.op == "lshr" and inner.rhs == ir.const(off):
                return f"index({format_expr(inner.lhs, geometry)})"
        if e.op == "and" and e.rhs.value == (1 << off) - 1:
            return f"offset({format_expr(e.lhs, geometry)})"
    return None


def format_expr(e: Any, geometry: Any = None) -> str:
    """
    Render an expression; with a cache geometry, tag/index/offset
    extractions print as calls.
    """
    if isinstance(e, ir.Const):
        if e.width == 1:
            return "true" if e.value else "false"
        return _int(e.value)
    if isinstance(e, (ir.Var, ir.MemVar)):
        return e.name
    call = _geometry_call(e, geometry)
    if call is not None:
        return call
    if isinstance(e, ir.BinOp):
        if e.op in ("and", "or"):
            sym = ("&&" if e.op == "and" else "||") if e.width == 1 else ("&" if e.op == "and" else "|")
        else:
            sym = _SYMBOLS[e.op]
        return f"({format_expr(e.lhs, geometry)} {sym} {format_expr(e.rhs, geometry)})"
    if isinstance(e, ir.UnOp):
        if e.op == "not":
            return ("!" if e.width == 1 else "~") + format_expr(e.arg, geometry)
        return "-" + format_expr(e.arg, geometry)
    if isinstance(e, ir.Ite):
        parts = ", ".join(format_expr(p, geometry) for p in (e.cond, e.then, e.other))
        return f"ite({parts})"
    if isinstance(e, ir.ZeroExt):
        return f"zext({format_expr(e.arg, geometry)}, {e.width})"
    if isinstance(e, ir.Extract):
        return f"extract({format_expr(e.arg, geometry)}, {e.hi}, {e.lo})"
    if isinstance(e, ir.Load):
        suffix = "" if e.nbytes == 8 else f", {e.nbytes}"
        return f"LOAD({format_expr(e.mem, geometry)}, {format_expr(e.addr, geometry)}{suffix})"
    if isinstance(e, ir.Store):
        return (
            f"STORE({format_expr(e.mem, geometry)}, {format_expr(e.addr, geometry)}, "
            f"{format_expr(e.value, geometry)})"
        )
    raise TypeError(f"cannot format {type(e).__name__}")


def format_stmt(stmt: ir.Stmt, geometry: Any = None) -> str:
    if isinstance(stmt, ir.Assign):
        return f"{stmt.var} = {format_expr(stmt.expr, geometry)}"
    exprs = ", ".join(format_expr(e, geometry) for e in stmt.exprs)
    return f"OBS({format_expr(stmt.cond, geometry)}, [{exprs}])"


def format_terminator(term: ir.Terminator, geometry: Any = None) -> str:
    if isinstance(term, ir.Jmp):
        return f"JMP {term.target}"
    if isinstance(term, ir.CJmp):
        return f"CJMP {format_expr(term.cond, geometry)} {term.then} {term.other}"
    return "HALT"


def format_ir(program: ir.IrProgram, geometry: Any = None) -> str:
    lines = []
    for blk in program.blocks:
        lines.append(f"{blk.label}:")
        lines.extend(f"    {format_stmt(s, geometry)}" for s in blk.stmts)
        lines.append(f"    {format_terminator(blk.term, geometry)}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(0x[0-9a-fA-F]+|\d+)|([A-Za-z_][A-Za-z0-9_]*)|(<=u|<u|<<|>>|==|!=|<=|>=|&&|\|\||[-+*&|^!~<>(),\[\]]))"
)

_BINARY_LEVELS: List[Tuple[str, ...]] = [
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">=", "<u", "<=u"),
    ("|",),
    ("^",),
    ("&",),
    ("<<", ">>"),
    ("+", "-"),
    ("*",),
]

_FLAGS = ("z", "n")


def _tokenize(text: str) -> List[str]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if not match or match.end() == pos:
            raise ExprSyntaxError(f"unexpected character at {pos} in '{text}'")
        tokens.append(next(g for g in match.groups() if g is not None))
        pos = match.end()
    return tokens


def _unify(a: ir.Expr, b: ir.Expr) -> Tuple[ir.Expr, ir.Expr]:
    if a.width == b.width:
        return a, b
    if isinstance(a, ir.Const) and a.value < (1 << b.width):
        return ir.const(a.value, b.width), b
    if isinstance(b, ir.Const) and b.value < (1 << a.width):
        return a, ir.const(b.value, a.width)
    width = max(a.width, b.width)
    return ir.zext(a, width), ir.zext(b, width)


def _apply(op: str, a: ir.Expr, b: ir.Expr) -> ir.Expr:
    if op in ("&&", "||"):
        a, b = ir.as_bool(a), ir.as_bool(b)
        return ir.band(a, b) if op == "&&" else ir.bor(a, b)
    a, b = _unify(a, b)
    table: dict = {
        "|": ir.bor,
        "^": ir.bxor,
        "&": ir.band,
        "<<": ir.shl,
        ">>": ir.lshr,
        "+": ir.add,
        "-": ir.sub,
        "*": ir.mul,
        "==": ir.eq,
        "!=": ir.ne,
        "<": ir.ult,
        "<u": ir.ult,
        "<=": ir.ule,
        "<=u": ir.ule,
        ">": lambda x, y: ir.ult(y, x),
        ">=": lambda x, y: ir.ule(y, x),
    }
    return table[op](a, b)


class _Parser:
    def __init__(self, text: str, geometry: Any):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.geometry = geometry

    def peek(self) -> Optional[str]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: Optional[str] = None) -> str:
        token = self.peek()
        if token is None or (expected is not None and token != expected):
            raise ExprSyntaxError(f"expected {expected or 'a token'} in '{self.text}', got {token!r}")
        self.pos += 1
        return token

    def parse(self) -> ir.Expr:
        expr = self.binary(0)
        if self.peek() is not None:
            raise ExprSyntaxError(f"trailing input '{self.peek()}' in '{self.text}'")
        return expr

    def binary(self, level: int) -> ir.Expr:
        if level == len(_BINARY_LEVELS):
            return self.unary()
        lhs = self.binary(level + 1)
        while self.peek() in _BINARY_LEVELS[level]:
            op = self.take()
            rhs = self.binary(level + 1)
            lhs = _apply(op, lhs, rhs)
        return lhs

    def unary(self) -> ir.Expr:
        token = self.peek()
        if token == "!":
            self.take()
            return ir.bnot(ir.as_bool(self.unary()))
        if token == "~":
            self.take()
            return ir.bnot(self.unary())
        if token == "-":
            self.take()
            return ir.neg(self.unary())
        return self.primary()

    def args(self) -> List[Any]:
        self.take("(")
        result = [self.binary_or_memory()]
        while self.peek() == ",":
            self.take()
            result.append(self.binary_or_memory())
        self.take(")")
        return result

    def binary_or_memory(self) -> Any:
        token = self.peek()
        if token is not None and token.lower() in ("mem", "memp"):
            self.take()
            return ir.MemVar(token.lower())
        return self.binary(0)

    def field(self, name: str, arg: ir.Expr) -> ir.Expr:
        if self.geometry is None:
            raise ExprSyntaxError(f"{name}() needs a cache geometry in '{self.text}'")
        arg = ir.zext(arg, ir.WORD)
        return getattr(self.geometry, f"{name}_expr")(arg)

    def primary(self) -> ir.Expr:
        token = self.take()
        if token == "(":
            expr = self.binary(0)
            self.take(")")
            return expr
        if token[0].isdigit():
            return ir.const(int(token, 0))
        name = token.lower()
        if name in ("true", "false"):
            return ir.TRUE if name == "true" else ir.FALSE
        if self.peek() == "(":
            return self.call(name)
        if name == ZERO_REGISTER:
            return ir.const(0)
        base = name[:-1] if name.endswith("p") else name
        if base in GENERAL_REGISTERS:
            return ir.var(name)
        if base in _FLAGS:
            return ir.var(name, 1)
        if re.fullmatch(r"acc\d+", name):
            return ir.var(name)
        raise ExprSyntaxError(f"unknown identifier '{token}' in '{self.text}'")

    def call(self, name: str) -> ir.Expr:
        args = self.args()
        if name in ("tag", "index", "offset") and len(args) == 1:
            return self.field(name, args[0])
        if name == "load" and len(args) in (2, 3):
            nbytes = args[2].value if len(args) == 3 else 8
            return ir.load(args[0], ir.zext(args[1], ir.WORD), nbytes)
        if name == "ite" and len(args) == 3:
            then, other = _unify(args[1], args[2])
            return ir.ite(ir.as_bool(args[0]), then, other)
        if name == "zext" and len(args) == 2:
            return ir.zext(args[0], args[1].value)
        if name == "extract" and len(args) == 3:
            return ir.extract(args[0], args[1].value, args[2].value)
        raise ExprSyntaxError(f"unknown function {name}/{len(args)} in '{self.text}'")


def parse_expr(text: str, geometry: Any = None) -> ir.Expr:
    """
    Parse an IR expression.

    ``acc<k>`` parses to a placeholder variable naming the address of the
    k-th memory access; callers substitute it per path. ``tag``, ``index``
    and ``offset`` require a cache geometry.

    Example:
        >>> format_expr(parse_expr("x1 + 8 == x2"))
        '((x1 + 8) == x2)'
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression")
    return _Parser(text, geometry).parse()


def access_placeholder(k: int) -> ir.Var:
    return ir.var(f"acc{k}")


def placeholders(e: ir.Expr) -> List[int]:
    """Indices of the ``acc<k>`` placeholders used by ``e``, sorted."""
    found = []
    for name in ir.symbols(e):
        match = re.fullmatch(r"acc(\d+)", name)
        if match:
            found.append(int(match.group(1)))
    return sorted(found)

