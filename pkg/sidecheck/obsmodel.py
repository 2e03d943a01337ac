"""
Cache geometry, observational models and the final-state comparators.
"""

from typing import Any, List, Optional, Tuple
from dataclasses import dataclass, replace
from enum import Enum
import logging
import re

from sidecheck.bir import ir
from sidecheck.errors import ConfigError, GeometryMismatch

logger = logging.getLogger("sidecheck")

OP_CODES = {"rd": 0, "wt": 1}


@dataclass(frozen=True)
class CacheGeometry:
    """
    Address split into ``tag | index | offset``.

    Example:
        >>> g = CacheGeometry()
        >>> g.extract_index(0x80000040), g.extract_tag(0x80100080)
        (1, 262272)
    """

    offset_bits: int = 6
    index_bits: int = 7
    ways: int = 4

    def __post_init__(self) -> None:
        if self.offset_bits < 0 or self.index_bits < 0 or self.ways < 1:
            raise ValueError(f"invalid cache geometry {self}")

    @property
    def line_bytes(self) -> int:
        return 1 << self.offset_bits

    @property
    def sets(self) -> int:
        return 1 << self.index_bits

    @property
    def size_bytes(self) -> int:
        return self.line_bytes * self.sets * self.ways

    @property
    def tag_shift(self) -> int:
        return self.offset_bits + self.index_bits

    def extract_offset(self, addr: int) -> int:
        return addr & (self.line_bytes - 1)

    def extract_index(self, addr: int) -> int:
        return (addr >> self.offset_bits) & (self.sets - 1)

    def extract_tag(self, addr: int) -> int:
        return addr >> self.tag_shift

    def line_of(self, addr: int) -> int:
        return addr >> self.offset_bits

    def compose(self, tag: int, index: int, offset: int = 0) -> int:
        return (tag << self.tag_shift) | (index << self.offset_bits) | offset

    # symbolic counterparts, also recognised by the IR printer

    def offset_expr(self, a: ir.Expr) -> ir.Expr:
        return ir.band(a, ir.const(self.line_bytes - 1, a.width))

    def index_expr(self, a: ir.Expr) -> ir.Expr:
        shifted = ir.lshr(a, ir.const(self.offset_bits, a.width))
        return ir.band(shifted, ir.const(self.sets - 1, a.width))

    def tag_expr(self, a: ir.Expr) -> ir.Expr:
        return ir.lshr(a, ir.const(self.tag_shift, a.width))


DEFAULT_GEOMETRY = CacheGeometry()


def extract_offset(addr: int, geometry: CacheGeometry = DEFAULT_GEOMETRY) -> int:
    return geometry.extract_offset(addr)


def extract_index(addr: int, geometry: CacheGeometry = DEFAULT_GEOMETRY) -> int:
    return geometry.extract_index(addr)


def extract_tag(addr: int, geometry: CacheGeometry = DEFAULT_GEOMETRY) -> int:
    return geometry.extract_tag(addr)


class ModelKind(Enum):
    MULTI_WAY_PC = "mwc-pc"
    MULTI_WAY = "mwc"
    PARTITIONED = "pmwc"
    DIRECT_MAPPED = "dc"


_MODEL_RE = re.compile(r"^(mwc-pc|mwc|dc|pmwc:(\d+)(?:-(\d+))?)$")


@dataclass(frozen=True)
class ObsModel:
    """
    An observational model: which part of each memory access the attacker sees.

    ``visible_from``/``visible_to`` bound the attacker's sets for the
    partitioned model (``visible_to`` of None means up to the last set).
    ``syntactic_obs`` skips accesses whose loaded value is discarded, which
    reproduces the zero-register observation bug.
    """

    kind: ModelKind = ModelKind.MULTI_WAY
    geometry: CacheGeometry = DEFAULT_GEOMETRY
    syntactic_obs: bool = False
    visible_from: int = 0
    visible_to: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind == ModelKind.PARTITIONED:
            if not 0 <= self.visible_from <= self.geometry.sets:
                raise ConfigError(
                    f"partition boundary {self.visible_from} outside [0, {self.geometry.sets}]"
                )
            upper = self.visible_to
            if upper is not None and not self.visible_from <= upper <= self.geometry.sets:
                raise ConfigError(f"partition upper bound {self.visible_to} out of range")

    @property
    def id(self) -> str:
        if self.kind != ModelKind.PARTITIONED:
            return self.kind.value
        if self.visible_to is None:
            return f"pmwc:{self.visible_from}"
        return f"pmwc:{self.visible_from}-{self.visible_to}"

    @property
    def upper(self) -> int:
        return self.geometry.sets if self.visible_to is None else self.visible_to

    def visible_sets(self) -> range:
        if self.kind == ModelKind.PARTITIONED:
            return range(self.visible_from, self.upper)
        return range(self.geometry.sets)

    def with_geometry(self, geometry: CacheGeometry) -> "ObsModel":
        return replace(self, geometry=geometry)

    # -- observation of one access -------------------------------------------------

    def condition(self, addr: ir.Expr) -> ir.Expr:
        if self.kind != ModelKind.PARTITIONED:
            return ir.TRUE
        if self.visible_from >= self.upper:
            return ir.FALSE
        idx = self.geometry.index_expr(addr)
        parts = []
        if self.visible_from > 0:
            parts.append(ir.ule(ir.const(self.visible_from, addr.width), idx))
        if self.upper < self.geometry.sets:
            parts.append(ir.ult(idx, ir.const(self.upper, addr.width)))
        return ir.conj(*parts)

    def projection(self, pc: int, op: str, addr: ir.Expr) -> Tuple[ir.Expr, ...]:
        g = self.geometry
        op_const = ir.const(OP_CODES[op], 1)
        if self.kind == ModelKind.MULTI_WAY_PC:
            return (ir.const(pc), op_const, g.tag_expr(addr), g.index_expr(addr))
        if self.kind == ModelKind.DIRECT_MAPPED:
            return (op_const, g.index_expr(addr))
        return (op_const, g.tag_expr(addr), g.index_expr(addr))

    def observation(self, pc: int, access: ir.Access) -> ir.Obs:
        return ir.Obs(self.condition(access.addr), self.projection(pc, access.op, access.addr))

    def observe(self, pc: int, op: str, address: int) -> Optional[Tuple[int, ...]]:
        """Concrete observation of one access, or None when it is silent."""
        g = self.geometry
        code = OP_CODES[op]
        tag, idx = g.extract_tag(address), g.extract_index(address)
        if self.kind == ModelKind.MULTI_WAY_PC:
            return (pc, code, tag, idx)
        if self.kind == ModelKind.DIRECT_MAPPED:
            return (code, idx)
        if self.kind == ModelKind.PARTITIONED and idx not in self.visible_sets():
            return None
        return (code, tag, idx)


def parse_model(
    model_id: str,
    geometry: CacheGeometry = DEFAULT_GEOMETRY,
    syntactic_obs: bool = False,
) -> ObsModel:
    """
    Build a model from its identifier: ``mwc-pc``, ``mwc``, ``pmwc:<lo>[-<hi>]`` or ``dc``.

    Example:
        >>> parse_model("pmwc:61").visible_sets()
        range(61, 128)
    """
    match = _MODEL_RE.match(model_id.strip())
    if not match:
        raise ConfigError(f"unknown observational model '{model_id}'")
    if match.group(2) is None:
        return ObsModel(ModelKind(match.group(1)), geometry, syntactic_obs)
    hi = int(match.group(3)) if match.group(3) is not None else None
    return ObsModel(ModelKind.PARTITIONED, geometry, syntactic_obs, int(match.group(2)), hi)


def annotate(program: ir.IrProgram, model: ObsModel) -> ir.IrProgram:
    """
    Insert an observation statement in front of every memory-accessing statement.

    The observation reads the address in the state before the access, so an
    instruction such as ``ldr x1, [x1]`` is observed on its original base.
    """
    blocks = []
    inserted = 0
    for blk in program.blocks:
        stmts: List[ir.Stmt] = []
        for stmt in blk.stmts:
            for access in ir.statement_accesses(stmt):
                if model.syntactic_obs and access.discarded:
                    continue
                stmts.append(model.observation(blk.pc or 0, access))
                inserted += 1
            stmts.append(stmt)
        blocks.append(replace(blk, stmts=tuple(stmts)))
    logger.debug(f"Annotated {inserted} accesses for model {model.id}")
    return ir.IrProgram(tuple(blocks))


# ---------------------------------------------------------------------------
# Final-state comparators
# ---------------------------------------------------------------------------

def _check_geometry(model: ObsModel, c1: Any, c2: Any) -> None:
    if c1.geometry != c2.geometry:
        raise GeometryMismatch(f"cache states differ in geometry: {c1.geometry} vs {c2.geometry}")
    if c1.geometry.sets != model.geometry.sets:
        raise GeometryMismatch(f"model expects {model.geometry.sets} sets, cache has {c1.geometry.sets}")


def _set_equivalent(model: ObsModel, c1: Any, c2: Any, index: int) -> bool:
    tags1, tags2 = c1.valid_tags(index), c2.valid_tags(index)
    if model.kind == ModelKind.DIRECT_MAPPED:
        return len(tags1) == len(tags2)
    return tags1 == tags2


def distinguishing_sets(model: ObsModel, c1: Any, c2: Any) -> List[int]:
    """Set indices visible under ``model`` on which the two cache states differ."""
    _check_geometry(model, c1, c2)
    return [s for s in model.visible_sets() if not _set_equivalent(model, c1, c2, s)]


def compare_final(model: ObsModel, c1: Any, c2: Any) -> bool:
    """
    True when the attacker of ``model`` cannot tell the two final cache states apart.

    Multi-way models compare the sets of valid tags per set, the partitioned
    model only on its visible sets, and the direct-mapped model the number
    of valid lines per set. Replacement order and dirty bits are ignored.
    """
    return not distinguishing_sets(model, c1, c2)
