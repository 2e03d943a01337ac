"""
Campaign pipeline transformers: annotation, symbolic execution, test-case
generation and experiments.

Each work item is a dict. Program items carry ``program_id``, ``index``,
``seed``, ``program`` and ``text``; later stages add ``ir``, ``paths``,
``testcase`` and finally ``record``. An item that fails gets a ``failure``
reason instead and is passed through to become a failure record.
"""

from typing import Any, Dict, List, Optional, Tuple, Union
from concurrent.futures import ProcessPoolExecutor
import logging

from sidecheck.bir.transpile import transpile
from sidecheck.config import CampaignConfig, UarchConfig
from sidecheck.database import ExperimentRecord
from sidecheck.errors import MalformedProgram, PathExplosion, SolverError
from sidecheck.harness import (
    build_record,
    failure_record,
    generate_testcases,
    now,
    run_experiment,
)
from sidecheck.obsmodel import ObsModel, annotate
from sidecheck.pipeline import PipelineContext, PipelineStage
from sidecheck.solvers import SolverBackend
from sidecheck.symexec import DEFAULT_MAX_PATHS, sym_exec

logger = logging.getLogger("sidecheck")


class Transformer(PipelineStage):
    """Base class for transformers."""

    def transform(self, data: List[Dict[str, Any]], context: PipelineContext) -> List[Dict[str, Any]]:
        """Transform the work items."""
        raise NotImplementedError("Subclasses must implement transform()")

    def execute(self, context: PipelineContext) -> PipelineContext:
        initial_count = len(context.data)
        context.data = self.transform(context.data, context)
        logger.debug(f"{self.name}: {initial_count} -> {len(context.data)} items")
        return context


class ItemTransformer(Transformer):
    """
    Apply ``process`` to every item that has not failed yet.

    An exception from ``process`` marks the item failed instead of failing the stage.
    """

    def process(self, item: Dict[str, Any], context: PipelineContext) -> List[Dict[str, Any]]:
        raise NotImplementedError("Subclasses must implement process()")

    def transform(self, data: List[Dict[str, Any]], context: PipelineContext) -> List[Dict[str, Any]]:
        result = []
        for item in data:
            if "failure" in item:
                result.append(item)
                continue
            try:
                result.extend(self.process(item, context))
            except Exception as e:
                logger.warning(f"{self.name}: program {item.get('program_id')}: {e}")
                item["failure"] = f"{self.name}: {e}"
                result.append(item)
        return result


class AnnotateTransformer(ItemTransformer):
    """Transpile each program and insert the model's observations."""

    def __init__(self, model: ObsModel, name: Optional[str] = None):
        super().__init__(name or f"AnnotateTransformer({model.id})")
        self.model = model

    def process(self, item: Dict[str, Any], context: PipelineContext) -> List[Dict[str, Any]]:
        try:
            item["ir"] = annotate(transpile(item["program"]), self.model)
        except MalformedProgram as e:
            item["failure"] = str(e)
        return [item]


class SymbolicExecutionTransformer(ItemTransformer):
    """Enumerate the symbolic paths of each annotated program."""

    def __init__(self, max_paths: int = DEFAULT_MAX_PATHS, name: Optional[str] = None):
        super().__init__(name or "SymbolicExecutionTransformer")
        self.max_paths = max_paths

    def process(self, item: Dict[str, Any], context: PipelineContext) -> List[Dict[str, Any]]:
        try:
            item["paths"] = sym_exec(item["ir"], self.max_paths)
        except (PathExplosion, MalformedProgram) as e:
            logger.warning(f"Program {item['program_id']}: {e}")
            item["failure"] = str(e)
        else:
            context.count("paths", len(item["paths"]))
        return [item]


class TestCaseTransformer(ItemTransformer):
    """
    Fan each program out into one item per generated test case.

    Programs for which every query is unsatisfiable produce no items.
    Timed-out steps are counted as ``skipped``.
    """

    __test__ = False

    def __init__(self, config: CampaignConfig, solver: SolverBackend, name: Optional[str] = None):
        super().__init__(name or f"TestCaseTransformer({solver.name})")
        self.config = config
        self.solver = solver

    def process(self, item: Dict[str, Any], context: PipelineContext) -> List[Dict[str, Any]]:
        try:
            cases, stats = generate_testcases(
                item["paths"], self.config, self.solver, item["program_id"], item["index"]
            )
        except SolverError as e:
            logger.warning(f"Program {item['program_id']}: solver failed: {e}")
            item["failure"] = f"solver: {e}"
            return [item]
        context.count("skipped", stats.timeouts)
        context.count("queries", stats.steps)
        if not cases:
            context.count("no_testcases")
        base = {k: v for k, v in item.items() if k not in ("ir", "paths")}
        return [{**base, "testcase": case} for case in cases]


def _experiment_job(
    args: Tuple[Dict[str, Any], ObsModel, UarchConfig, int, Any, str, str],
) -> ExperimentRecord:
    item, model, uarch, repetitions, region, campaign, generator = args
    started_at = now()
    outcome = run_experiment(item["program"], item["testcase"], model, uarch, repetitions, region)
    return build_record(
        item["program"],
        item["testcase"],
        model,
        uarch,
        outcome,
        repetitions,
        region,
        campaign,
        generator,
        started_at,
    )


class ExperimentTransformer(Transformer):
    """
    Run every test case on the simulator and attach its ``record``.

    With ``config.workers > 1`` experiments run in a process pool; records
    keep the input order either way. An experiment that raises becomes a
    failure record.
    """

    def __init__(
        self,
        config: CampaignConfig,
        model: ObsModel,
        generator: Optional[str] = None,
        name: Optional[str] = None,
    ):
        super().__init__(name or "ExperimentTransformer")
        self.config = config
        self.model = model
        self.generator = generator or config.generator.kind
        self.region = config.region.build()

    def _failure(self, item: Dict[str, Any], reason: str) -> ExperimentRecord:
        return failure_record(
            item["program"],
            self.model,
            self.config.uarch,
            reason,
            self.config.repetitions,
            self.region,
            self.config.name,
            self.generator,
        )

    def _run(self, jobs: List[Tuple[Any, ...]]) -> List[Union[ExperimentRecord, Exception]]:
        results: List[Union[ExperimentRecord, Exception]] = []
        if self.config.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.config.workers) as pool:
                futures = [pool.submit(_experiment_job, job) for job in jobs]
                for future in futures:
                    try:
                        results.append(future.result())
                    except Exception as e:
                        results.append(e)
            return results
        for job in jobs:
            try:
                results.append(_experiment_job(job))
            except Exception as e:
                results.append(e)
        return results

    def transform(self, data: List[Dict[str, Any]], context: PipelineContext) -> List[Dict[str, Any]]:
        pending = [item for item in data if "failure" not in item]
        jobs = [
            (
                {k: item[k] for k in ("program", "testcase")},
                self.model,
                self.config.uarch,
                self.config.repetitions,
                self.region,
                self.config.name,
                self.generator,
            )
            for item in pending
        ]
        outcomes = iter(self._run(jobs))

        result = []
        for item in data:
            if "failure" in item:
                record = self._failure(item, item["failure"])
            else:
                outcome = next(outcomes)
                if isinstance(outcome, Exception):
                    logger.warning(f"Experiment on program {item['program_id']} failed: {outcome}")
                    item = {**item, "failure": f"experiment: {outcome}"}
                    record = self._failure(item, item["failure"])
                else:
                    record = outcome
            context.count(record.classification)
            result.append({**item, "record": record})
        return result
