"""
Exceptions raised by sidecheck.
"""

from typing import List, Optional


class SidecheckError(Exception):
    """Base class for all sidecheck errors."""


class MalformedProgram(SidecheckError):
    """A program violates the instruction invariants (backward branch, bad register, ...)."""


class ExprSyntaxError(SidecheckError):
    """An IR expression or assembly text could not be parsed."""


class UnmappedAccess(SidecheckError):
    """A memory access fell outside the experiment region."""

    def __init__(self, address: int, width: int = 8):
        super().__init__(f"unmapped access at {address:#x} (width {width})")
        self.address = address
        self.width = width


class PathExplosion(SidecheckError):
    """Symbolic execution produced more paths than the configured cap."""

    def __init__(self, limit: int):
        super().__init__(f"more than {limit} paths")
        self.limit = limit


class PathMismatch(SidecheckError):
    """A concrete state does not satisfy the path condition of a symbolic state."""


class GeometryMismatch(SidecheckError):
    """Two cache states (or a state and a model) disagree on the cache geometry."""


class RangeViolation(SidecheckError):
    """A term-enumeration value lies outside its declared range."""


class ConfigError(SidecheckError):
    """The campaign configuration is invalid."""


class CorruptRecord(SidecheckError):
    """A database line could not be decoded."""

    def __init__(self, line: int, reason: Optional[str] = None):
        super().__init__(f"corrupt record at line {line}" + (f": {reason}" if reason else ""))
        self.line = line


class SolverError(SidecheckError):
    """Base class for solver failures."""


class SolverCrash(SolverError):
    """The solver process died or answered something unintelligible."""


class SolverTimeout(SolverError):
    """The solver did not answer within the configured timeout."""

    def __init__(self, seconds: float):
        super().__init__(f"solver timed out after {seconds:g}s")
        self.seconds = seconds


class ModelParseError(SolverError):
    """The solver's model output could not be parsed."""


class UnsupportedExpr(SolverError):
    """An expression node has no SMT-LIB lowering."""


class IncompleteModel(SolverError):
    """A satisfying assignment does not cover every symbol of the query."""


class CampaignError(SidecheckError):
    """A campaign stage failed as a whole, so its items never reached the database."""

    def __init__(self, errors: List[str]):
        super().__init__(f"{len(errors)} stage error(s): {errors[0]}" if errors else "campaign failed")
        self.errors = errors
