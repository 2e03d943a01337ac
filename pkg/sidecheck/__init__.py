"""
sidecheck - validate side-channel observational models against a cache simulator.

sidecheck generates programs, synthesizes pairs of inputs that a model says
an attacker cannot tell apart, runs both inputs on a configurable L1
data-cache simulator and records every pair the simulator does tell apart.
"""

__version__ = "0.1.0"

from sidecheck.bir import ConcreteState, MemoryRegion, parse_program, transpile
from sidecheck.config import CampaignConfig, UarchConfig, build_config, load_config
from sidecheck.database import ExperimentRecord, db_append, db_scan
from sidecheck.harness import (
    replay,
    run_campaign,
    run_experiment,
    verify_witness,
)
from sidecheck.obsmodel import CacheGeometry, ObsModel, annotate, parse_model
from sidecheck.pipeline import Pipeline, PipelineContext
from sidecheck.relsynth import synth_relation
from sidecheck.report import report
from sidecheck.solvers import TestCase, make_solver, solve
from sidecheck.symexec import sym_exec

__all__ = [
    "CacheGeometry",
    "CampaignConfig",
    "ConcreteState",
    "ExperimentRecord",
    "MemoryRegion",
    "ObsModel",
    "Pipeline",
    "PipelineContext",
    "TestCase",
    "UarchConfig",
    "annotate",
    "build_config",
    "db_append",
    "db_scan",
    "load_config",
    "make_solver",
    "parse_model",
    "parse_program",
    "replay",
    "report",
    "run_campaign",
    "run_experiment",
    "solve",
    "sym_exec",
    "synth_relation",
    "transpile",
    "verify_witness",
]
