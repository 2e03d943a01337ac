"""Pytest configuration and shared fixtures."""

import tempfile
from pathlib import Path

import pytest

from sidecheck.bir import ConcreteState, parse_program
from sidecheck.config import UarchConfig
from sidecheck.harness import build_record, failure_record, run_experiment
from sidecheck.obsmodel import parse_model
from sidecheck.solvers import TestCase


PREVICTION_SOURCE = """
cmp x0, x1
b.eq #0x14
ldr x9, [x2]
ldr x9, [x3]
ldr x9, [x4]
b #0x48
ldr x9, [x2]
nop
nop
nop
nop
nop
nop
nop
nop
nop
nop
nop
nop
nop
nop
ldr x9, [x3]
ldr x9, [x4]
"""

STRIDE_SOURCE = """
ldr x2, [x10, #0]
ldr x20, [x10, #128]
ldr x17, [x10, #256]
"""

PREVICTION_LINES = {"x2": 0x80100000, "x3": 0x80110000, "x4": 0x80120000}


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def previction_program():
    """Two arms loading the same three lines of set 0, one arm padded with nops."""
    return parse_program(PREVICTION_SOURCE)


@pytest.fixture
def previction_inputs():
    """x1 = 0 takes the padded arm, x1 = 1 the compact one."""
    s1 = ConcreteState(regs={"x0": 0, "x1": 0, **PREVICTION_LINES})
    s2 = ConcreteState(regs={"x0": 0, "x1": 1, **PREVICTION_LINES})
    return s1, s2


@pytest.fixture
def stride_program():
    """Three loads two lines apart from x10."""
    return parse_program(STRIDE_SOURCE)


@pytest.fixture
def stride_inputs():
    """Both inputs stay below set 61; only the second one prefetches into it."""
    return ConcreteState(regs={"x10": 0x80100080}), ConcreteState(regs={"x10": 0x80100CC0})


@pytest.fixture
def zero_register_program():
    """A load into the zero register."""
    return parse_program("ldr xzr, [x30]")


@pytest.fixture
def zero_register_inputs():
    """Addresses in set 1 and set 0."""
    return ConcreteState(regs={"x30": 0x80000040}), ConcreteState(regs={"x30": 0x80000038})


@pytest.fixture
def baseline_uarch():
    """Simulator without quirks or noise."""
    return UarchConfig()


@pytest.fixture
def prefetch_uarch():
    """Stride prefetcher on: three misses train it, three lines fetched, 4 KiB pages respected."""
    return UarchConfig.model_validate(
        {"prefetch": {"enabled": True, "k": 3, "n_pf": 3, "respect_4k_pages": True}}
    )


@pytest.fixture
def previction_uarch():
    """Previction on with the default settle gap."""
    return UarchConfig.model_validate({"previction": {"enabled": True}})


@pytest.fixture
def sample_records(
    stride_program,
    stride_inputs,
    prefetch_uarch,
    previction_program,
    previction_inputs,
    previction_uarch,
):
    """A counterexample, an indistinguishable and a failure record from two campaigns."""
    model = parse_model("pmwc:61")
    tc = TestCase(*stride_inputs)
    outcome = run_experiment(stride_program, tc, model, prefetch_uarch, 2)
    cex = build_record(
        stride_program,
        tc,
        model,
        prefetch_uarch,
        outcome,
        2,
        campaign="variation-a",
        generator="strides",
    )

    mwc = parse_model("mwc")
    same = TestCase(previction_inputs[0], previction_inputs[0])
    outcome = run_experiment(previction_program, same, mwc, previction_uarch, 2)
    quiet = build_record(
        previction_program, same, mwc, previction_uarch, outcome, 2, campaign="previction"
    )
    failed = failure_record(
        previction_program, mwc, previction_uarch, "more than 1 paths", 2, campaign="previction"
    )
    return [cex, quiet, failed]
