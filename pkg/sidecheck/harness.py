"""
Experiments: test-case generation for one program, simulation of both
inputs, classification, record building, witness checks and replay.

``run_campaign`` assembles the campaign pipeline from ``sources``,
``transformers`` and ``destinations``.
"""

from typing import Any, Dict, List, Optional, Tuple
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
import logging

from sidecheck.bir.concrete import DEFAULT_REGION, ConcreteState, MemoryRegion
from sidecheck.bir.isa import Program, format_program, parse_program
from sidecheck.bir.transpile import transpile
from sidecheck.config import CampaignConfig, UarchConfig
from sidecheck.database import ExperimentRecord, StateRecord, digest
from sidecheck.errors import CampaignError, SolverTimeout, UnmappedAccess
from sidecheck.obsmodel import ObsModel, annotate, distinguishing_sets, parse_model
from sidecheck.relsynth import (
    EnumCursor,
    EnumStep,
    RelFormula,
    TermEnumeration,
    make_guard,
    prime,
    synth_relation,
)
from sidecheck.solvers import (
    Provenance,
    SolverBackend,
    TestCase,
    blocking_clause,
    model_to_testcase,
    testcase_env,
)
from sidecheck.symexec import DEFAULT_MAX_PATHS, PathSet, sym_exec
from sidecheck.uarch import CacheState, run_on_uarch

logger = logging.getLogger("sidecheck")

INPUTS = ("s1", "s2")
MANUAL = "manual"
FILE = "file"


def program_id(program: Program) -> str:
    return digest(format_program(program))


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cache_digest(cache: CacheState) -> str:
    return digest({str(k): v for k, v in cache.snapshot().items()})


def symbolic_paths(
    program: Program, model: ObsModel, max_paths: int = DEFAULT_MAX_PATHS
) -> PathSet:
    """Transpile, annotate for ``model`` and execute symbolically."""
    return sym_exec(annotate(transpile(program), model), max_paths)


# ---------------------------------------------------------------------------
# Test-case generation
# ---------------------------------------------------------------------------

@dataclass
class GenerationStats:
    steps: int = 0
    sat: int = 0
    unsat: int = 0
    unknown: int = 0
    timeouts: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {
            "steps": self.steps,
            "sat": self.sat,
            "unsat": self.unsat,
            "unknown": self.unknown,
            "timeouts": self.timeouts,
        }


def make_cursor(paths: PathSet, cfg: CampaignConfig) -> EnumCursor:
    geometry = cfg.uarch.geometry.build()
    enumeration = cfg.enumeration
    term = None
    if enumeration.term is not None:
        term = TermEnumeration(enumeration.term, enumeration.values(), geometry)
    return EnumCursor(
        paths,
        guard=make_guard(enumeration.guard, geometry),
        term=term,
        region=cfg.region.build(),
        syntactic_obs=cfg.syntactic_obs,
    )


def _addresses(paths: PathSet, pair: Tuple[int, int]) -> List[Any]:
    i, j = pair
    return [a.addr for a in paths[i].accesses] + [prime(a.addr) for a in paths[j].accesses]


def generate_testcases(
    paths: PathSet,
    cfg: CampaignConfig,
    solver: SolverBackend,
    pid: str = "",
    seed: int = 0,
    limit: Optional[int] = None,
) -> Tuple[List[TestCase], GenerationStats]:
    """
    Walk the enumeration cursor and draw one model per step.

    Stops after ``limit`` test cases (default ``experiments_per_program``)
    or after one full period of the cursor. With diversity blocking on,
    the cursor keeps cycling, each path pair excluding the address
    registers of its earlier models, until a whole period finds nothing.

    Raises:
        SolverError: on solver crashes and unparsable models.
    """
    limit = limit or cfg.experiments_per_program
    cursor = make_cursor(paths, cfg)
    diversity = cfg.solver.diversity
    max_steps = cursor.period * (limit if diversity else 1)
    blocking: Dict[Tuple[int, int], List[Any]] = {}
    stats = GenerationStats()
    cases: List[TestCase] = []
    misses = 0

    while len(cases) < limit and cursor.position < max_steps and misses < cursor.period:
        step = cursor.next()
        stats.steps += 1
        query = cursor.query(step)
        try:
            result = solver.solve_blocked(query, blocking.get(step.pair, []))
        except SolverTimeout as e:
            stats.timeouts += 1
            misses += 1
            logger.warning(f"Program {pid} step {step.index} skipped: {e}")
            continue
        if not result.is_sat:
            misses += 1
            if result.verdict == "unsat":
                stats.unsat += 1
            else:
                stats.unknown += 1
            logger.debug(
                f"Program {pid} step {step.index} pair {step.pair} "
                f"term {step.term_pair}: {result.verdict}"
            )
            continue
        misses = 0
        stats.sat += 1
        provenance = Provenance(
            program_id=pid,
            pair=step.pair,
            guard=cfg.enumeration.guard,
            term=cfg.enumeration.term,
            term_pair=step.term_pair,
            seed=seed,
            step=step.index,
        )
        cases.append(model_to_testcase(result, query, provenance))  # type: ignore[arg-type]
        if diversity:
            clause = blocking_clause(result, _addresses(paths, step.pair))  # type: ignore[arg-type]
            blocking.setdefault(step.pair, []).append(clause)
    logger.debug(f"Program {pid}: {len(cases)} test cases from {stats.steps} steps")
    return cases, stats


def rebuild_query(
    program: Program,
    model: ObsModel,
    provenance: Provenance,
    region: MemoryRegion = DEFAULT_REGION,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> RelFormula:
    """The query a test case was drawn from, rebuilt from its provenance."""
    paths = symbolic_paths(program, model, max_paths)
    term = None
    if provenance.term is not None and provenance.term_pair is not None:
        term = TermEnumeration(provenance.term, sorted(set(provenance.term_pair)), model.geometry)
    cursor = EnumCursor(
        paths,
        guard=make_guard(provenance.guard, model.geometry),
        term=term,
        region=region,
        syntactic_obs=model.syntactic_obs,
    )
    return cursor.query(EnumStep(provenance.step, provenance.pair, provenance.term_pair))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentOutcome:
    classification: str
    reason: Optional[str] = None
    runs: Dict[str, List[str]] = field(default_factory=dict)
    final_states: Dict[str, Dict[int, List[int]]] = field(default_factory=dict)
    distinguishing_sets: List[int] = field(default_factory=list)


def run_experiment(
    program: Program,
    testcase: TestCase,
    model: ObsModel,
    cfg: UarchConfig,
    repetitions: int = 10,
    region: MemoryRegion = DEFAULT_REGION,
) -> ExperimentOutcome:
    """
    Run both inputs ``repetitions`` times on the simulator and classify.

    Inconclusive when the runs of one input disagree among themselves;
    otherwise the model's comparator decides between indistinguishable and
    counterexample. Unmapped accesses are reported as failures.
    """
    if cfg.geometry.build() != model.geometry:
        model = model.with_geometry(cfg.geometry.build())
    finals: Dict[str, CacheState] = {}
    outcome = ExperimentOutcome("indistinguishable")
    for input_index, (label, state) in enumerate(zip(INPUTS, (testcase.s1, testcase.s2))):
        caches = []
        for repetition in range(repetitions):
            try:
                cache = run_on_uarch(program, state, cfg, region, input_index, repetition)
            except UnmappedAccess as e:
                logger.debug(f"Input {label} faulted: {e}")
                return ExperimentOutcome("failure", reason=str(e), runs=outcome.runs)
            caches.append(cache)
        outcome.runs[label] = [cache_digest(c) for c in caches]
        outcome.final_states[label] = caches[0].snapshot()
        finals[label] = caches[0]

    if any(len(set(outcome.runs[label])) > 1 for label in INPUTS):
        outcome.classification = "inconclusive"
        return outcome
    outcome.distinguishing_sets = distinguishing_sets(model, finals["s1"], finals["s2"])
    if outcome.distinguishing_sets:
        outcome.classification = "counterexample"
    return outcome


def build_record(
    program: Program,
    testcase: TestCase,
    model: ObsModel,
    cfg: UarchConfig,
    outcome: ExperimentOutcome,
    repetitions: int,
    region: MemoryRegion = DEFAULT_REGION,
    campaign: str = "campaign",
    generator: str = MANUAL,
    started_at: Optional[str] = None,
) -> ExperimentRecord:
    record = ExperimentRecord(
        campaign=campaign,
        generator=generator,
        program_id=program_id(program),
        program=format_program(program),
        model=model.id,
        syntactic_obs=model.syntactic_obs,
        region={"base": region.base, "size": region.size},
        s1=StateRecord.from_state(testcase.s1),
        s2=StateRecord.from_state(testcase.s2),
        provenance=testcase.provenance.to_dict(),
        uarch=cfg.model_dump(mode="json"),
        uarch_digest=cfg.digest(),
        repetitions=repetitions,
        runs=outcome.runs,
        final_states=outcome.final_states,
        classification=outcome.classification,  # type: ignore[arg-type]
        reason=outcome.reason,
        distinguishing_sets=outcome.distinguishing_sets,
        started_at=started_at or now(),
        finished_at=now(),
    )
    record.id = record.content_digest()
    return record


def failure_record(
    program: Program,
    model: ObsModel,
    cfg: UarchConfig,
    reason: str,
    repetitions: int,
    region: MemoryRegion = DEFAULT_REGION,
    campaign: str = "campaign",
    generator: str = MANUAL,
    provenance: Optional[Provenance] = None,
) -> ExperimentRecord:
    """A failure that happened before any input pair existed (path explosion, solver crash)."""
    empty = TestCase(ConcreteState(), ConcreteState(), provenance or Provenance(program_id(program)))
    outcome = ExperimentOutcome("failure", reason=reason)
    return build_record(
        program, empty, model, cfg, outcome, repetitions, region, campaign, generator
    )


# ---------------------------------------------------------------------------
# Stored records
# ---------------------------------------------------------------------------

def record_inputs(
    record: ExperimentRecord,
) -> Tuple[Program, TestCase, ObsModel, UarchConfig, MemoryRegion]:
    """Everything needed to rerun a record, decoded from the record alone."""
    uarch = UarchConfig.model_validate(record.uarch)
    model = parse_model(record.model, uarch.geometry.build(), record.syntactic_obs)
    program = parse_program(record.program)
    testcase = TestCase(
        record.s1.to_state(), record.s2.to_state(), Provenance.from_dict(record.provenance)
    )
    region = MemoryRegion(record.region["base"], record.region["size"])
    return program, testcase, model, uarch, region


def replay(record: ExperimentRecord) -> ExperimentOutcome:
    """Rerun a stored experiment."""
    if record.classification == "failure" and not record.runs:
        return ExperimentOutcome("failure", reason=record.reason)
    program, testcase, model, uarch, region = record_inputs(record)
    return run_experiment(program, testcase, model, uarch, record.repetitions, region)


def inputs_related(
    paths: PathSet,
    s1: ConcreteState,
    s2: ConcreteState,
    region: MemoryRegion = DEFAULT_REGION,
    syntactic_obs: bool = False,
) -> bool:
    """Whether one concrete pair satisfies the relation, in either order."""
    relation = synth_relation(paths, region, syntactic_obs, symmetric=False)
    return relation.holds(testcase_env(s1, s2))


def verify_witness(record: ExperimentRecord, max_paths: int = DEFAULT_MAX_PATHS) -> bool:
    """
    Whether the stored inputs satisfy the query rebuilt from the record's provenance.

    Records without a test case (early failures) are vacuously valid. Inputs
    given by hand (generator ``manual``) are checked against the whole relation.
    """
    if record.classification == "failure" and not record.runs:
        return True
    program, testcase, model, _, region = record_inputs(record)
    if record.generator == MANUAL:
        paths = symbolic_paths(program, model, max_paths)
        return inputs_related(paths, testcase.s1, testcase.s2, region, model.syntactic_obs)
    query = rebuild_query(program, model, testcase.provenance, region, max_paths)
    return query.holds(testcase_env(testcase.s1, testcase.s2))


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------

@dataclass
class CampaignSummary:
    name: str
    generator: str
    model: str
    counts: Dict[str, int]
    programs: int = 0
    skipped: int = 0
    records: List[ExperimentRecord] = field(default_factory=list)

    @property
    def experiments(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "generator": self.generator,
            "model": self.model,
            "experiments": self.experiments,
            **self.counts,
            "programs": self.programs,
            "skipped": self.skipped,
        }


def _log_stage(pipeline: Any, context: Any, stage: Any) -> None:
    logger.info(f"{stage.name}: {len(context.data)} items")


def run_campaign(
    cfg: CampaignConfig,
    db_path: Optional[Path] = None,
    keep_dir: Optional[Path] = None,
    show_progress: bool = False,
    echo: bool = False,
    program_files: Optional[List[Path]] = None,
) -> CampaignSummary:
    """
    Generate, test and classify; every record is appended to ``db_path`` when given.

    With ``program_files`` the campaign tests those programs instead of
    drawing from the configured generator; their records carry generator ``file``.

    Raises:
        OSError: when a program file is missing or the database cannot be written.
        CampaignError: when any other stage failed as a whole.
    """
    from sidecheck.destinations import ConsoleDestination, DatabaseDestination
    from sidecheck.pipeline import Pipeline
    from sidecheck.solvers import make_solver
    from sidecheck.sources import FileSource, ProgramSource
    from sidecheck.transformers import (
        AnnotateTransformer,
        ExperimentTransformer,
        SymbolicExecutionTransformer,
        TestCaseTransformer,
    )

    model = cfg.build_model()
    solver = make_solver(cfg.solver, cfg.region.build(), keep_dir)
    generator = FILE if program_files else cfg.generator.kind
    pipeline = Pipeline(name=cfg.name, show_progress=show_progress)
    pipeline.add_hook("post_stage", _log_stage)
    pipeline.add_stage(FileSource(program_files) if program_files else ProgramSource(cfg))
    pipeline.add_stage(AnnotateTransformer(model))
    pipeline.add_stage(SymbolicExecutionTransformer(cfg.max_paths))
    pipeline.add_stage(TestCaseTransformer(cfg, solver))
    pipeline.add_stage(ExperimentTransformer(cfg, model, generator))
    if db_path is not None:
        pipeline.add_stage(DatabaseDestination(db_path))
    if echo:
        pipeline.add_stage(ConsoleDestination())

    context = pipeline.run()
    io_errors = [e for e in context.errors if e["stage"].startswith("DatabaseDestination")]
    if io_errors:
        raise OSError(io_errors[0]["error"])
    if context.errors:
        raise CampaignError([f"{e['stage']}: {e['error']}" for e in context.errors])

    records = [item["record"] for item in context.data if "record" in item]
    counts = {c: 0 for c in ("indistinguishable", "counterexample", "inconclusive", "failure")}
    for record in records:
        counts[record.classification] += 1
    summary = CampaignSummary(
        name=cfg.name,
        generator=generator,
        model=model.id,
        counts=counts,
        programs=context.metadata.get("programs", 0),
        skipped=context.metadata.get("skipped", 0),
        records=records,
    )
    logger.info(
        f"Campaign {cfg.name}: {summary.experiments} experiments, "
        f"{counts['counterexample']} counterexamples, {counts['inconclusive']} inconclusive, "
        f"{counts['failure']} failures"
    )
    return summary
