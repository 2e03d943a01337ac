"""
Command-line interface.

Exit codes: 0 when the command ran, 1 on I/O errors, 2 on configuration
or input errors.
"""

from typing import Any, Dict, List, Optional
from pathlib import Path
import logging
import re

import typer
from typing_extensions import Annotated

from sidecheck.bir.concrete import ConcreteState
from sidecheck.bir.ir import Memory
from sidecheck.bir.isa import format_program, parse_program
from sidecheck.bir.text import format_ir
from sidecheck.bir.transpile import transpile
from sidecheck.config import CampaignConfig, build_config, load_config, resolve_db_path
from sidecheck.database import db_append, db_scan
from sidecheck.errors import CampaignError, ConfigError, SidecheckError
from sidecheck.harness import (
    build_record,
    generate_testcases,
    inputs_related,
    program_id,
    replay as replay_record,
    run_campaign,
    run_experiment,
    symbolic_paths,
    verify_witness,
)
from sidecheck.obsmodel import annotate
from sidecheck.pipeline import console, setup_logging
from sidecheck.progen import GENERATORS, build_generator, program_seed
from sidecheck.relsynth import synth_relation
from sidecheck.report import counterexample_text, report as render_report
from sidecheck.solvers import Provenance, TestCase, make_solver
from sidecheck.symexec import dump_paths

app = typer.Typer(help="Validate side-channel observational models against a cache simulator.")
logger = logging.getLogger("sidecheck")

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_FAILED = 3

ConfigOption = Annotated[
    Optional[Path], typer.Option("--config", "-c", help="TOML campaign file")
]
SeedOption = Annotated[Optional[int], typer.Option("--seed", help="Campaign seed")]
DbOption = Annotated[Optional[str], typer.Option("--db", help="Experiment database (JSON lines)")]
TimeoutOption = Annotated[
    Optional[float], typer.Option("--solver-timeout", help="Per-query solver timeout in seconds")
]
ModelOption = Annotated[
    Optional[str], typer.Option("--model", "-m", help="mwc, mwc-pc, dc or pmwc:<lo>[-<hi>]")
]

_ASSIGN_RE = re.compile(
    r"^\s*(x\d+|z|n|mem\[(0x[0-9a-f]+|\d+)\])\s*=\s*(0x[0-9a-f]+|\d+)\s*$", re.IGNORECASE
)


@app.callback()
def main(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")] = False,
) -> None:
    setup_logging(verbose)


def _fail(error: Exception, code: int) -> None:
    console.print(f"[red]error:[/red] {error}")
    raise typer.Exit(code)


def _config(
    path: Optional[Path],
    seed: Optional[int] = None,
    db: Optional[str] = None,
    solver_timeout: Optional[float] = None,
    model: Optional[str] = None,
    **overrides: Any,
) -> CampaignConfig:
    overrides = {
        "seed": seed,
        "db": db,
        "solver.timeout": solver_timeout,
        "model": model,
        **overrides,
    }
    try:
        if path is None:
            return build_config({}, **overrides)
        return load_config(path, **overrides)
    except ConfigError as e:
        _fail(e, EXIT_CONFIG)
    except OSError as e:
        _fail(e, EXIT_IO)
    raise AssertionError("unreachable")


def _program(path: Path) -> Any:
    try:
        return parse_program(path.read_text(encoding="utf-8"))
    except OSError as e:
        _fail(e, EXIT_IO)
    except SidecheckError as e:
        _fail(e, EXIT_CONFIG)


def parse_state(text: str) -> ConcreteState:
    """
    Parse ``x10=0x80100080,z=1,mem[0x80000000]=0xff`` into an initial state.

    Example:
        >>> parse_state("x1=1, z=1").regs["x1"]
        1
    """
    regs: Dict[str, int] = {}
    flags = {"z": False, "n": False}
    memory: Dict[int, int] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        match = _ASSIGN_RE.match(part)
        if match is None:
            raise ConfigError(f"cannot parse assignment '{part}'")
        target, address, value = match.group(1).lower(), match.group(2), int(match.group(3), 0)
        if address is not None:
            memory[int(address, 0)] = value & 0xFF
        elif target in flags:
            flags[target] = bool(value)
        else:
            regs[target] = value
    return ConcreteState(regs=regs, z=flags["z"], n=flags["n"], memory=Memory(memory))


@app.command("gen")
def gen(
    config: ConfigOption = None,
    seed: SeedOption = None,
    count: Annotated[Optional[int], typer.Option("--count", "-n", min=1)] = None,
    kind: Annotated[Optional[str], typer.Option("--kind", help=", ".join(GENERATORS))] = None,
) -> None:
    """Print generated programs."""
    cfg = _config(config, seed, programs=count, **{"generator.kind": kind})
    generator = build_generator(cfg.generator)
    for index in range(cfg.programs):
        program = generator.run(program_seed(cfg.seed, index))
        typer.echo(f"; program {index} ({program_id(program)})")
        typer.echo(format_program(program))
        typer.echo("")


@app.command("relate")
def relate(
    program_file: Path,
    config: ConfigOption = None,
    model: ModelOption = None,
    ir_only: Annotated[bool, typer.Option("--ir", help="Only print the annotated IR")] = False,
) -> None:
    """Dump the annotated IR, the symbolic paths and the synthesized relation of a program."""
    cfg = _config(config, model=model)
    program = _program(program_file)
    obs_model = cfg.build_model()
    try:
        annotated = annotate(transpile(program), obs_model)
        typer.echo(format_ir(annotated, obs_model.geometry))
        if ir_only:
            return
        paths = symbolic_paths(program, obs_model, cfg.max_paths)
    except SidecheckError as e:
        _fail(e, EXIT_CONFIG)
    typer.echo("")
    typer.echo(dump_paths(paths, obs_model.geometry))
    relation = synth_relation(paths, cfg.region.build(), obs_model.syntactic_obs)
    typer.echo("relation:")
    typer.echo(relation.render(obs_model.geometry))


@app.command("testgen")
def testgen(
    program_file: Path,
    config: ConfigOption = None,
    model: ModelOption = None,
    solver_timeout: TimeoutOption = None,
    limit: Annotated[Optional[int], typer.Option("--limit", min=1)] = None,
    keep_queries: Annotated[
        Optional[Path], typer.Option("--keep-queries", help="Directory for SMT-LIB scripts")
    ] = None,
) -> None:
    """Print test cases for one program."""
    cfg = _config(
        config,
        solver_timeout=solver_timeout,
        model=model,
        **{"solver.keep_queries": True if keep_queries else None},
    )
    program = _program(program_file)
    try:
        paths = symbolic_paths(program, cfg.build_model(), cfg.max_paths)
        solver = make_solver(cfg.solver, cfg.region.build(), keep_queries)
        cases, stats = generate_testcases(paths, cfg, solver, program_id(program), cfg.seed, limit)
    except SidecheckError as e:
        _fail(e, EXIT_CONFIG)
    for case in cases:
        p = case.provenance
        typer.echo(f"; step {p.step} paths {p.pair} term {p.term_pair}")
        typer.echo(f"s1: {_regs_text(case.s1)}")
        typer.echo(f"s2: {_regs_text(case.s2)}")
    logger.info(f"{len(cases)} test cases, {stats.as_dict()}")


def _regs_text(state: ConcreteState) -> str:
    parts = [f"{r}=0x{v:x}" for r, v in state.regs.items() if v]
    parts += [f"{f}=1" for f in ("z", "n") if getattr(state, f)]
    parts += [f"mem[0x{a:x}]=0x{b:02x}" for a, b in sorted(state.memory.items()) if b]
    return ",".join(parts) or "(all zero)"


@app.command("run")
def run(
    program_file: Path,
    s1: Annotated[str, typer.Option("--s1", help="First input, e.g. x10=0x80100080")],
    s2: Annotated[str, typer.Option("--s2", help="Second input")],
    config: ConfigOption = None,
    model: ModelOption = None,
    db: DbOption = None,
) -> None:
    """Run one program on two explicit inputs and classify the experiment."""
    cfg = _config(config, db=db, model=model)
    program = _program(program_file)
    try:
        testcase = TestCase(parse_state(s1), parse_state(s2), Provenance(program_id(program)))
        obs_model = cfg.build_model()
        paths = symbolic_paths(program, obs_model, cfg.max_paths)
    except SidecheckError as e:
        _fail(e, EXIT_CONFIG)
    region = cfg.region.build()
    related = inputs_related(paths, testcase.s1, testcase.s2, region, obs_model.syntactic_obs)
    typer.echo(f"relation: {'satisfied' if related else 'violated'}")
    outcome = run_experiment(program, testcase, obs_model, cfg.uarch, cfg.repetitions, region)
    record = build_record(
        program, testcase, obs_model, cfg.uarch, outcome, cfg.repetitions, region, cfg.name
    )
    status = record.classification
    typer.echo(f"{status}: {record.reason}" if record.reason else status)
    if record.classification == "counterexample":
        typer.echo(counterexample_text(record))
    if db is not None:
        try:
            db_append(db, record)
        except OSError as e:
            _fail(e, EXIT_IO)


@app.command("campaign")
def campaign(
    config: Annotated[Path, typer.Argument(help="TOML campaign file")],
    seed: SeedOption = None,
    db: DbOption = None,
    solver_timeout: TimeoutOption = None,
    workers: Annotated[Optional[int], typer.Option("--workers", "-w", min=1)] = None,
    keep_queries: Annotated[
        Optional[Path], typer.Option("--keep-queries", help="Directory for SMT-LIB scripts")
    ] = None,
    echo: Annotated[bool, typer.Option("--echo", help="Print one line per experiment")] = False,
    programs: Annotated[
        Optional[List[Path]],
        typer.Option("--program", "-p", help="Assembly file to test instead of generating; repeatable"),
    ] = None,
) -> None:
    """Run a campaign and append its records to the database."""
    cfg = _config(
        config,
        seed,
        db,
        solver_timeout,
        workers=workers,
        **{"solver.keep_queries": True if keep_queries else None},
    )
    db_path = resolve_db_path(cfg, db)
    try:
        summary = run_campaign(
            cfg, db_path, keep_queries, show_progress=True, echo=echo, program_files=programs
        )
    except OSError as e:
        _fail(e, EXIT_IO)
    except ConfigError as e:
        _fail(e, EXIT_CONFIG)
    except CampaignError as e:
        _fail(e, EXIT_FAILED)
    typer.echo(" ".join(f"{k}={v}" for k, v in summary.as_dict().items()))


@app.command("replay")
def replay(
    record_id: Annotated[
        Optional[str], typer.Argument(help="Record id; all counterexamples when omitted")
    ] = None,
    db: DbOption = None,
) -> None:
    """Rerun stored experiments and check that they reproduce."""
    db_path = resolve_db_path(explicit=db)
    if not db_path.exists():
        _fail(FileNotFoundError(f"database not found: {db_path}"), EXIT_IO)
    if record_id is None:
        records = list(db_scan(db_path, classification="counterexample"))
    else:
        records = list(db_scan(db_path, id=record_id))
    if not records:
        _fail(ConfigError(f"no matching records in {db_path}"), EXIT_CONFIG)
    mismatches = 0
    for record in records:
        outcome = replay_record(record)
        witness = verify_witness(record)
        same = outcome.classification == record.classification
        mismatches += not (same and witness)
        typer.echo(
            f"{record.id} {record.classification} -> {outcome.classification}"
            f"{'' if same else ' MISMATCH'}{'' if witness else ' (witness invalid)'}"
        )
    logger.info(f"Replayed {len(records)} records, {mismatches} mismatches")
    if mismatches:
        raise typer.Exit(EXIT_FAILED)


@app.command("report")
def report(
    db: DbOption = None,
    format: Annotated[str, typer.Option("--format", "-f", help="text or csv")] = "text",
    campaign_name: Annotated[Optional[str], typer.Option("--campaign")] = None,
) -> None:
    """Summarize the experiment database."""
    if format not in ("text", "csv"):
        _fail(ConfigError(f"unknown report format '{format}'"), EXIT_CONFIG)
    filters = {"campaign": campaign_name} if campaign_name else {}
    try:
        text = render_report(resolve_db_path(explicit=db), format, **filters)  # type: ignore[arg-type]
        typer.echo(text.rstrip("\n"))
    except OSError as e:
        _fail(e, EXIT_IO)


if __name__ == "__main__":
    app()
