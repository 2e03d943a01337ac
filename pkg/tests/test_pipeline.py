"""Tests for the campaign pipeline driven by its real stages."""

import logging

import pytest

from sidecheck.config import build_config
from sidecheck.database import db_scan
from sidecheck.destinations import ConsoleDestination, DatabaseDestination
from sidecheck.harness import run_campaign
from sidecheck.pipeline import Pipeline, PipelineContext
from sidecheck.solvers import Z3Backend
from sidecheck.sources import StaticSource
from sidecheck.transformers import (
    AnnotateTransformer,
    ExperimentTransformer,
    SymbolicExecutionTransformer,
    TestCaseTransformer,
)

from tests.conftest import PREVICTION_SOURCE, STRIDE_SOURCE


@pytest.fixture
def stride_config():
    return build_config(
        {
            "name": "pipeline",
            "model": "pmwc:61",
            "experiments_per_program": 2,
            "repetitions": 1,
            "uarch": {"prefetch": {"enabled": True}},
            "enumeration": {"guard": "no-observations", "term": "index(acc0)", "term_values": [2, 51]},
        }
    )


def _campaign_pipeline(cfg, db_path, fail_fast=False):
    model = cfg.build_model()
    pipeline = Pipeline("test", fail_fast=fail_fast, show_progress=False)
    pipeline.add_stage(StaticSource([STRIDE_SOURCE, PREVICTION_SOURCE]))
    pipeline.add_stage(AnnotateTransformer(model))
    pipeline.add_stage(SymbolicExecutionTransformer(cfg.max_paths))
    pipeline.add_stage(TestCaseTransformer(cfg, Z3Backend()))
    pipeline.add_stage(ExperimentTransformer(cfg, model))
    pipeline.add_stage(DatabaseDestination(db_path))
    pipeline.add_stage(ConsoleDestination())
    return pipeline


def test_pipeline_context_count():
    """Test metadata counters."""
    context = PipelineContext()
    context.count("programs")
    context.count("programs", 2)
    assert context.metadata["programs"] == 3


def test_pipeline_context_add_error():
    """Test that stage errors keep their stage and item."""
    context = PipelineContext([{"program_id": "a"}])
    context.add_error("ExperimentTransformer", KeyError("testcase"), context.data[0])
    stats = context.get_stats()
    assert stats["record_count"] == 1
    assert stats["error_count"] == 1
    assert context.errors[0]["stage"] == "ExperimentTransformer"
    assert context.errors[0]["record"] == {"program_id": "a"}


def test_campaign_stages_end_to_end(stride_config, temp_dir):
    """Test two programs through every stage into the database."""
    db = temp_dir / "runs.jsonl"
    context = _campaign_pipeline(stride_config, db).run()

    assert context.errors == []
    assert len(context.metadata["stages_completed"]) == 7
    assert context.metadata["programs"] == 2
    assert context.metadata["stages_completed"][-2] == f"DatabaseDestination({db})"
    records = [item["record"] for item in context.data]
    assert len(records) == 4
    assert [r.id for r in db_scan(db)] == [r.id for r in records]
    assert sum(context.metadata.get(c, 0) for c in ("counterexample", "indistinguishable")) == 4


def test_fail_fast_stops_at_the_database(stride_config, temp_dir):
    """Test that an unwritable database aborts a fail-fast pipeline."""
    pipeline = _campaign_pipeline(stride_config, temp_dir, fail_fast=True)
    with pytest.raises(OSError):
        pipeline.run()


def test_stage_error_is_collected(stride_config, temp_dir):
    """Test that later stages still run after a stage error."""
    context = _campaign_pipeline(stride_config, temp_dir).run()
    assert [e["stage"] for e in context.errors] == [f"DatabaseDestination({temp_dir})"]
    assert context.metadata["stages_completed"][-1] == "ConsoleDestination"
    assert len(context.data) == 4


def test_hooks_see_every_stage(stride_config, temp_dir):
    """Test hook order and item counts over the real stages."""
    pipeline = _campaign_pipeline(stride_config, temp_dir / "runs.jsonl")
    seen = []
    pipeline.add_hook("pre_run", lambda p, c: seen.append(("run", len(c.data))))
    pipeline.add_hook("post_stage", lambda p, c, s: seen.append((s.name.split("(")[0], len(c.data))))
    pipeline.add_hook("post_run", lambda p, c: seen.append(("done", len(c.errors))))
    pipeline.run()

    assert seen[0] == ("run", 0)
    assert seen[1] == ("StaticSource", 2)
    assert seen[3] == ("SymbolicExecutionTransformer", 2)
    assert seen[4] == ("TestCaseTransformer", 4)
    assert seen[5] == ("ExperimentTransformer", 4)
    assert seen[-1] == ("done", 0)


def test_pipeline_hook_invalid_type():
    """Test adding a hook with an unknown type."""
    with pytest.raises(ValueError, match="Invalid hook type"):
        Pipeline("test", show_progress=False).add_hook("mid_stage", lambda p, c: None)


def test_campaign_logs_items_per_stage(stride_config, temp_dir, caplog):
    """Test the per-stage item counts a campaign logs."""
    program_file = temp_dir / "stride.s"
    program_file.write_text(STRIDE_SOURCE)
    caplog.set_level(logging.INFO, logger="sidecheck")
    run_campaign(stride_config, program_files=[program_file])
    assert "FileSource(1): 1 items" in caplog.text
    assert "SymbolicExecutionTransformer: 1 items" in caplog.text
    assert "ExperimentTransformer: 2 items" in caplog.text
