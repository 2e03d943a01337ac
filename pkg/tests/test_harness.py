"""Tests for experiments, records, replay and whole campaigns."""

import pytest

from sidecheck.bir import ConcreteState
from sidecheck.config import UarchConfig, build_config
from sidecheck.database import db_count, db_scan
from sidecheck.errors import CampaignError
from sidecheck.harness import (
    build_record,
    failure_record,
    generate_testcases,
    inputs_related,
    program_id,
    rebuild_query,
    replay,
    run_campaign,
    run_experiment,
    symbolic_paths,
    verify_witness,
)
from sidecheck.obsmodel import parse_model
from sidecheck.solvers import TestCase, Z3Backend, testcase_env

from tests.conftest import STRIDE_SOURCE


def _stride_campaign(model="pmwc:61", **overrides):
    data = {
        "name": "variation",
        "model": model,
        "generator": {"kind": "strides", "stride_lines": 2, "steps": 3},
        "uarch": {"prefetch": {"enabled": True, "k": 3, "n_pf": 3, "respect_4k_pages": True}},
        "enumeration": {"guard": "no-observations", "term": "index(acc0)", "term_range": [48, 56]},
        "programs": 1,
        "experiments_per_program": 10,
        "repetitions": 2,
    }
    return build_config(data, **overrides)


def test_previction_counterexample(previction_program, previction_inputs, previction_uarch, baseline_uarch):
    """Test the previction pair with the quirk on and off."""
    s1, s2 = previction_inputs
    model = parse_model("mwc")
    on = run_experiment(previction_program, TestCase(s1, s2), model, previction_uarch)
    assert on.classification == "counterexample"
    assert on.distinguishing_sets == [0]
    off = run_experiment(previction_program, TestCase(s1, s2), model, baseline_uarch)
    assert off.classification == "indistinguishable"


def test_prefetch_counterexample_on_literal_inputs(stride_program, stride_inputs, prefetch_uarch):
    """Test the stride pair against both partition boundaries."""
    tc = TestCase(*stride_inputs)
    low = run_experiment(stride_program, tc, parse_model("pmwc:61"), prefetch_uarch)
    assert low.classification == "counterexample"
    assert low.distinguishing_sets == [61]
    high = run_experiment(stride_program, tc, parse_model("pmwc:64"), prefetch_uarch)
    assert high.classification == "indistinguishable"


def test_zero_register_experiment(zero_register_program, zero_register_inputs, baseline_uarch):
    """Test that the pair accepted by syntactic observations is distinguishable."""
    model = parse_model("mwc", syntactic_obs=True)
    outcome = run_experiment(zero_register_program, TestCase(*zero_register_inputs), model, baseline_uarch)
    assert outcome.classification == "counterexample"
    assert outcome.distinguishing_sets == [0, 1]


def test_identical_inputs_are_indistinguishable(previction_program, previction_inputs, previction_uarch):
    """Test that an input is never distinguishable from itself without noise."""
    s1, _ = previction_inputs
    outcome = run_experiment(previction_program, TestCase(s1, s1), parse_model("mwc"), previction_uarch)
    assert outcome.classification == "indistinguishable"
    assert len(set(outcome.runs["s1"])) == 1


def test_noise_makes_experiments_inconclusive(stride_program, stride_inputs):
    """Test that disagreeing repetitions are reported as inconclusive."""
    noisy = UarchConfig.model_validate({"noise": {"enabled": True, "seed": 1, "flip_probability": 0.5}})
    outcome = run_experiment(stride_program, TestCase(*stride_inputs), parse_model("mwc"), noisy)
    assert outcome.classification == "inconclusive"
    assert outcome.distinguishing_sets == []


def test_unmapped_input_is_a_failure(stride_program, baseline_uarch):
    """Test that a faulting input becomes a failure, not an exception."""
    inside = ConcreteState(regs={"x10": 0x80000000})
    outside = ConcreteState(regs={"x10": 0x1000})
    outcome = run_experiment(stride_program, TestCase(inside, outside), parse_model("mwc"), baseline_uarch)
    assert outcome.classification == "failure"
    assert "0x1000" in outcome.reason


def test_generate_testcases_follows_the_enumeration(stride_program):
    """Test test-case generation with a guard and a term."""
    cfg = _stride_campaign(experiments_per_program=5)
    model = cfg.build_model()
    paths = symbolic_paths(stride_program, model)
    cases, stats = generate_testcases(paths, cfg, Z3Backend(), pid="p")
    assert len(cases) == 5
    assert stats.sat == 5 and stats.steps == 5
    assert [tc.provenance.term_pair for tc in cases] == [(48, v) for v in range(48, 53)]
    for tc in cases:
        query = rebuild_query(stride_program, model, tc.provenance)
        assert query.holds(testcase_env(tc.s1, tc.s2))


def test_generate_testcases_stops_after_one_period(stride_program):
    """Test that a program whose queries are all unsatisfiable yields nothing."""
    cfg = _stride_campaign(**{"enumeration.term_range": [60, 62]})
    paths = symbolic_paths(stride_program, cfg.build_model())
    cases, stats = generate_testcases(paths, cfg, Z3Backend())
    assert cases == []
    assert stats.unsat == stats.steps == 9


def test_failure_record_replays_as_failure(stride_program):
    """Test records of failures that happened before any test case."""
    record = failure_record(stride_program, parse_model("mwc"), UarchConfig(), "path explosion", 10)
    assert record.classification == "failure"
    assert record.program_id == program_id(stride_program)
    assert replay(record).classification == "failure"
    assert verify_witness(record)


def test_inputs_related_in_either_order(previction_program, previction_inputs):
    """Test the concrete pair check with the inputs swapped."""
    paths = symbolic_paths(previction_program, parse_model("mwc"))
    s1, s2 = previction_inputs
    moved = ConcreteState(regs={**s2.regs, "x4": 0x80130000})
    assert inputs_related(paths, s1, s2)
    assert inputs_related(paths, s2, s1)
    assert not inputs_related(paths, s1, moved)
    assert not inputs_related(paths, moved, s1)


def test_manual_witness_with_swapped_inputs_is_rejected(previction_program, previction_inputs, baseline_uarch):
    """Test that hand-given inputs are checked whichever path copy 1 takes."""
    model = parse_model("mwc")
    s1, s2 = previction_inputs
    moved = ConcreteState(regs={**s2.regs, "x4": 0x80130000})
    for tc, valid in ((TestCase(s1, s2), True), (TestCase(moved, s1), False)):
        outcome = run_experiment(previction_program, tc, model, baseline_uarch, 1)
        record = build_record(previction_program, tc, model, baseline_uarch, outcome, 1)
        assert record.generator == "manual"
        assert verify_witness(record) is valid


def test_campaign_records_replay(temp_dir):
    """Test a small campaign end to end: database, replay and witnesses."""
    db = temp_dir / "runs.jsonl"
    summary = run_campaign(_stride_campaign(), db_path=db)
    assert summary.experiments == 10
    assert summary.counts["counterexample"] >= 1
    assert db_count(db) == summary.counts

    records = list(db_scan(db))
    assert len(records) == 10
    for record in records:
        assert replay(record).classification == record.classification
        assert verify_witness(record)
    cex = [r for r in records if r.classification == "counterexample"]
    assert all(min(r.distinguishing_sets) >= 61 for r in cex)


def test_campaign_is_reproducible(temp_dir):
    """Test that the same seed gives the same records."""
    first = run_campaign(_stride_campaign(experiments_per_program=3))
    second = run_campaign(_stride_campaign(experiments_per_program=3))
    assert [r.id for r in first.records] == [r.id for r in second.records]


def test_campaign_with_workers():
    """Test the process pool path of the experiment stage."""
    summary = run_campaign(_stride_campaign(workers=2, experiments_per_program=4))
    serial = run_campaign(_stride_campaign(experiments_per_program=4))
    assert [r.id for r in summary.records] == [r.id for r in serial.records]


def test_campaign_on_program_files(temp_dir, stride_program):
    """Test a campaign over assembly files instead of generated programs."""
    program_file = temp_dir / "stride.s"
    program_file.write_text(STRIDE_SOURCE)
    summary = run_campaign(_stride_campaign(experiments_per_program=3), program_files=[program_file])
    assert summary.generator == "file"
    assert summary.programs == 1
    assert summary.experiments == 3
    assert {r.generator for r in summary.records} == {"file"}
    assert {r.program_id for r in summary.records} == {program_id(stride_program)}
    assert all(verify_witness(r) for r in summary.records)


def test_campaign_missing_program_file(temp_dir):
    """Test that a missing program file is an I/O error."""
    with pytest.raises(FileNotFoundError):
        run_campaign(_stride_campaign(), program_files=[temp_dir / "missing.s"])


def test_campaign_stage_error_raises(monkeypatch):
    """Test that a stage failing as a whole is not reported as a clean campaign."""

    def broken(self, data, context):
        raise RuntimeError("pool died")

    monkeypatch.setattr("sidecheck.transformers.ExperimentTransformer.transform", broken)
    with pytest.raises(CampaignError, match="pool died"):
        run_campaign(_stride_campaign(experiments_per_program=2))


def test_campaign_path_explosion_becomes_failure():
    """Test that a program over the path limit yields a failure record."""
    cfg = build_config(
        {
            "generator": {"kind": "branch-loads", "max_len": 2},
            "programs": 1,
            "experiments_per_program": 2,
            "max_paths": 1,
            "repetitions": 1,
        }
    )
    summary = run_campaign(cfg)
    assert summary.counts["failure"] == 1
    assert "path" in summary.records[0].reason


def test_direct_mapped_campaign_finds_counterexample():
    """Test the direct-mapped model against a cache with several ways."""
    cfg = build_config(
        {
            "name": "direct-mapped",
            "model": "dc",
            "generator": {"kind": "loads", "max_len": 3},
            "enumeration": {
                "guard": "index(acc0) == index(acc1)",
                "term": "tag(acc0) == tag(acc1)",
                "term_values": [0, 1],
            },
            "programs": 10,
            "experiments_per_program": 4,
            "repetitions": 2,
        }
    )
    summary = run_campaign(cfg)
    assert summary.counts["counterexample"] >= 1
    assert summary.counts["inconclusive"] == 0


def test_partition_above_page_boundary_holds():
    """Test that prefetches stopped at the page boundary never reach set 64."""
    cfg = _stride_campaign("pmwc:64", **{"enumeration.term_range": [48, 60], "experiments_per_program": 40})
    summary = run_campaign(cfg)
    assert summary.experiments > 0
    assert summary.counts["counterexample"] == 0


@pytest.mark.slow
def test_partition_above_page_boundary_holds_long():
    """Test the upper partition over five hundred experiments."""
    cfg = _stride_campaign(
        "pmwc:64",
        **{
            "enumeration.term_range": [40, 60],
            "programs": 10,
            "experiments_per_program": 50,
            "solver.diversity": True,
        },
    )
    summary = run_campaign(cfg)
    assert summary.experiments == 500
    assert summary.counts["counterexample"] == 0


@pytest.mark.slow
def test_baseline_model_is_sound():
    """Test that the multi-way model has no counterexample on the plain simulator."""
    cfg = build_config(
        {
            "name": "baseline",
            "model": "mwc",
            "generator": {"kind": "random", "length": 5},
            "programs": 100,
            "experiments_per_program": 10,
            "repetitions": 2,
            "solver": {"diversity": True},
        }
    )
    summary = run_campaign(cfg)
    assert summary.experiments == 1000
    assert summary.counts["counterexample"] == 0
    assert summary.counts["inconclusive"] == 0


def test_baseline_model_is_sound_small():
    """Test soundness of the multi-way model on a handful of random programs."""
    cfg = build_config(
        {
            "model": "mwc",
            "generator": {"kind": "random", "length": 5},
            "programs": 5,
            "experiments_per_program": 3,
            "repetitions": 2,
        }
    )
    summary = run_campaign(cfg)
    assert summary.counts["counterexample"] == 0
    assert summary.counts["inconclusive"] == 0
