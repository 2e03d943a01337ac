"""
External SMT-LIB2 solver driven over standard input/output.
"""

from typing import Optional
from pathlib import Path
import logging
import shlex
import subprocess

from sidecheck.config import SOLVER_ENV, load_env
from sidecheck.errors import ConfigError, SolverCrash, SolverTimeout
from sidecheck.relsynth import RelFormula
from sidecheck.solvers.base import Sat, SolverBackend, SolverResult, Unknown, Unsat
from sidecheck.solvers.smtlib import SmtWriter, parse_answer, to_smtlib, value_requests

logger = logging.getLogger("sidecheck.solvers")


class ExternalSolver(SolverBackend):
    """
    Runs a solver executable once per query.

    The command comes from ``command`` or the ``SCAMV_SOLVER`` environment
    variable; it may carry arguments (e.g. ``"z3 -in"``). When
    ``keep_dir`` is set every script is written there before solving.
    """

    def __init__(
        self,
        command: Optional[str] = None,
        timeout: float = 30.0,
        keep_dir: Optional[Path] = None,
        name: Optional[str] = None,
    ):
        super().__init__(name or "external", timeout, keep_dir)
        command = command or load_env()[SOLVER_ENV]
        if not command:
            raise ConfigError(f"no external solver configured; set {SOLVER_ENV}")
        self.command = shlex.split(command)

    def run_script(self, script: str) -> str:
        """Feed ``script`` to the solver and return its standard output."""
        try:
            proc = subprocess.run(
                self.command,
                input=script,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired:
            logger.warning(f"Solver {self.command[0]} timed out after {self.timeout:g}s")
            raise SolverTimeout(self.timeout)
        except OSError as e:
            raise SolverCrash(f"cannot start solver {self.command[0]}: {e}")
        if proc.returncode != 0 and not proc.stdout.strip():
            raise SolverCrash(
                f"solver exited with status {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        return proc.stdout

    def solve(self, query: RelFormula) -> SolverResult:
        writer = SmtWriter()
        writer.term(query.formula)
        requests = value_requests(query, writer)
        script = to_smtlib(query, requests, writer)
        self.keep_script(script)

        verdict, assignment, memories = parse_answer(self.run_script(script), requests)
        if verdict == "unsat":
            return Unsat()
        if verdict == "unknown":
            return Unknown("external solver answered unknown")
        return Sat(assignment, memories)
