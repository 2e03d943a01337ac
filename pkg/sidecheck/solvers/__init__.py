"""
Satisfiability backends for relation queries.
"""

from typing import Optional
from pathlib import Path

from sidecheck.bir.concrete import DEFAULT_REGION, MemoryRegion
from sidecheck.config import SolverConfig
from sidecheck.errors import ConfigError
from sidecheck.relsynth import RelFormula
from sidecheck.solvers.base import (
    Provenance,
    Sat,
    SolverBackend,
    SolverResult,
    TestCase,
    Unknown,
    Unsat,
    blocking_clause,
    model_to_testcase,
    testcase_env,
)
from sidecheck.solvers.brute import BruteForceSolver
from sidecheck.solvers.external import ExternalSolver
from sidecheck.solvers.smtlib import to_smtlib
from sidecheck.solvers.z3_backend import Z3Backend


def make_solver(
    config: SolverConfig,
    region: MemoryRegion = DEFAULT_REGION,
    keep_dir: Optional[Path] = None,
) -> SolverBackend:
    """Build the backend named by ``config.backend``."""
    keep = keep_dir if config.keep_queries else None
    if config.backend == "z3":
        return Z3Backend(timeout=config.timeout, keep_dir=keep)
    if config.backend == "external":
        return ExternalSolver(config.path, config.timeout, keep)
    if config.backend == "brute":
        return BruteForceSolver(region)
    raise ConfigError(f"unknown solver backend '{config.backend}'")


def solve(query: RelFormula, backend: Optional[SolverBackend] = None) -> SolverResult:
    """Decide ``query`` with ``backend`` (z3 when omitted)."""
    return (backend or Z3Backend()).solve(query)


__all__ = [
    "BruteForceSolver",
    "ExternalSolver",
    "Provenance",
    "Sat",
    "SolverBackend",
    "SolverResult",
    "TestCase",
    "Unknown",
    "Unsat",
    "Z3Backend",
    "blocking_clause",
    "make_solver",
    "model_to_testcase",
    "solve",
    "testcase_env",
    "to_smtlib",
]
