"""Tests for relation synthesis, path guards and term enumeration."""

import pytest

from sidecheck.bir import ConcreteState, MemoryRegion, ir, parse_program, run_ir, transpile
from sidecheck.config import ClassWeights, GeometryConfig
from sidecheck.errors import ConfigError, RangeViolation, UnmappedAccess
from sidecheck.obsmodel import annotate, parse_model
from sidecheck.progen import random_program
from sidecheck.relsynth import (
    EnumCursor,
    NoObservationsGuard,
    RelFormula,
    TermEnumeration,
    make_guard,
    obs_list_eq,
    pair_query,
    path_pairs,
    prime,
    prime_name,
    synth_relation,
    unprime_name,
)
from sidecheck.solvers import BruteForceSolver, Z3Backend, testcase_env
from sidecheck.symexec import sym_exec


def _paths(program, model):
    return sym_exec(annotate(transpile(program), model))


def test_prime_names():
    """Test the copy-2 naming scheme."""
    assert prime_name("x1") == "x1p"
    assert unprime_name("x1p") == ("x1", 2)
    assert unprime_name("memp") == ("mem", 2)
    assert unprime_name("zp") == ("z", 2)
    assert unprime_name("x1") == ("x1", 1)
    assert ir.symbols(prime(ir.add(ir.var("x1"), ir.var("x2")))) == {"x1p": 64, "x2p": 64}


def test_obs_list_eq_skips_silent_observations():
    """Test equivalence modulo silent observations."""
    one = ir.const(1)
    two = ir.const(2)
    visible = (ir.TRUE, (one,))
    silent = (ir.FALSE, (two,))
    assert ir.evaluate(obs_list_eq([visible], [silent, visible]), {}) == 1
    assert ir.evaluate(obs_list_eq([visible], []), {}) == 0
    assert ir.evaluate(obs_list_eq([silent], []), {}) == 1
    assert ir.evaluate(obs_list_eq([(ir.TRUE, (one,))], [(ir.TRUE, (two,))]), {}) == 0


def test_path_pairs():
    """Test the lexicographic upper-triangle enumeration."""
    assert path_pairs(3) == [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def test_relation_on_previction_inputs(previction_program, previction_inputs):
    """Test that both previction inputs are related under the multi-way model."""
    model = parse_model("mwc")
    relation = synth_relation(_paths(previction_program, model))
    s1, s2 = previction_inputs
    assert relation.holds(testcase_env(s1, s2))
    moved = ConcreteState(regs={**s2.regs, "x4": 0x80130000})
    assert not relation.holds(testcase_env(s1, moved))


def test_full_relation_checks_pairs_in_both_orders(previction_program, previction_inputs):
    """Test that a later path in copy 1 is still compared against copy 2."""
    paths = _paths(previction_program, parse_model("mwc"))
    s1, s2 = previction_inputs
    moved = ConcreteState(regs={**s2.regs, "x4": 0x80130000})
    full = synth_relation(paths, symmetric=False)
    assert full.holds(testcase_env(s1, s2))
    assert full.holds(testcase_env(s2, s1))
    assert not full.holds(testcase_env(s1, moved))
    assert not full.holds(testcase_env(moved, s1))


def test_zero_register_pair_is_rejected_semantically(zero_register_program, zero_register_inputs):
    """Test that the zero-register load is observed and separates the two addresses."""
    model = parse_model("mwc")
    relation = synth_relation(_paths(zero_register_program, model))
    s1, s2 = zero_register_inputs
    assert not relation.holds(testcase_env(s1, s2))

    pins = ir.conj(
        ir.eq(ir.var("x30"), ir.const(s1.regs["x30"])),
        ir.eq(ir.var("x30p"), ir.const(s2.regs["x30"])),
    )
    result = Z3Backend().solve(relation.conjoin(RelFormula(pins)))
    assert result.verdict == "unsat"


def test_zero_register_pair_is_accepted_syntactically(zero_register_program, zero_register_inputs):
    """Test that skipping discarded loads relates the two addresses."""
    model = parse_model("mwc", syntactic_obs=True)
    relation = synth_relation(_paths(zero_register_program, model), syntactic_obs=True)
    s1, s2 = zero_register_inputs
    assert relation.holds(testcase_env(s1, s2))


def test_unmapped_inputs_are_not_related(stride_program):
    """Test the well-definedness side constraint."""
    relation = synth_relation(_paths(stride_program, parse_model("mwc")))
    inside = ConcreteState(regs={"x10": 0x80000000})
    outside = ConcreteState(regs={"x10": 0x1000})
    assert relation.holds(testcase_env(inside, inside))
    assert not relation.holds(testcase_env(inside, outside))


def test_no_observations_guard(stride_program, stride_inputs):
    """Test the built-in guard under the partitioned model."""
    model = parse_model("pmwc:61")
    paths = _paths(stride_program, model)
    guard = make_guard("no-observations", model.geometry)
    assert isinstance(guard, NoObservationsGuard)
    query = pair_query(paths[0], paths[0], guard)
    s1, s2 = stride_inputs
    assert query.holds(testcase_env(s1, s2))
    high = ConcreteState(regs={"x10": model.geometry.compose(0x40080, 62)})
    assert not query.holds(testcase_env(s1, high))


def test_expression_guard_with_missing_access_is_false():
    """Test that a guard naming an access the path lacks excludes the path."""
    model = parse_model("mwc")
    paths = _paths(parse_program("ldr x1, [x2]"), model)
    guard = make_guard("index(acc1) == 0", model.geometry)
    assert guard.constraint(paths[0]) == ir.FALSE


def test_term_enumeration_pins_both_copies(stride_program):
    """Test term constraints and their range check."""
    model = parse_model("pmwc:61")
    paths = _paths(stride_program, model)
    term = TermEnumeration("index(acc0)", [2, 51], model.geometry)
    assert term.pairs() == [(2, 2), (2, 51), (51, 2), (51, 51)]
    formula = term.constraints(paths[0], paths[0], 2, 51)
    env = testcase_env(ConcreteState(regs={"x10": 0x80100080}), ConcreteState(regs={"x10": 0x80100CC0}))
    assert formula.holds(env)
    with pytest.raises(RangeViolation):
        term.constraints(paths[0], paths[0], 3, 51)


def test_boolean_term_rejects_values_above_one():
    """Test that term values must fit the width of the term."""
    geometry = parse_model("dc").geometry
    term = TermEnumeration("tag(acc0) == tag(acc1)", [0, 1], geometry)
    assert term.expr.width == 1
    with pytest.raises(ConfigError, match="1-bit"):
        TermEnumeration("tag(acc0) == tag(acc1)", [0, 2], geometry)
    with pytest.raises(ConfigError):
        TermEnumeration("index(acc0)", [-1, 3], geometry)


def test_cursor_round_robin(previction_program):
    """Test step k -> (path pair k mod P, term pair (k div P) mod T)."""
    model = parse_model("mwc")
    paths = _paths(previction_program, model)
    term = TermEnumeration("index(acc0)", [0, 1], model.geometry)
    cursor = EnumCursor(paths, term=term)
    assert cursor.period == 3 * 4
    steps = [cursor.next() for _ in range(7)]
    assert [s.pair for s in steps[:4]] == [(0, 0), (0, 1), (1, 1), (0, 0)]
    assert [s.term_pair for s in steps[:4]] == [(0, 0), (0, 0), (0, 0), (0, 1)]
    assert steps[6].term_pair == (1, 0)


SMALL_REGION = MemoryRegion(0x100, 64)
SMALL_GEOMETRY = GeometryConfig(offset_bits=3, index_bits=2, ways=2).build()


def _small_inputs():
    values = [0, 1] + list(range(SMALL_REGION.base, SMALL_REGION.end - 7, 8))
    return [
        ConcreteState(regs={"x1": v}, z=bool(z), n=bool(n))
        for v in values
        for z in (0, 1)
        for n in (0, 1)
    ]


def _observe(annotated, s):
    """Observation trace of ``s``, or None when it faults or misaligns."""
    try:
        run = run_ir(annotated, s, SMALL_REGION)
    except UnmappedAccess:
        return None
    if any(e.address % 8 for e in run.events):
        return None
    return run.observations


def _check_relation_exhaustively(program, model):
    annotated = annotate(transpile(program), model)
    relation = synth_relation(sym_exec(annotated), SMALL_REGION, symmetric=False)
    inputs = _small_inputs()
    traces = [_observe(annotated, s) for s in inputs]
    any_related = False
    for a, t1 in zip(inputs, traces):
        for b, t2 in zip(inputs, traces):
            expected = t1 is not None and t2 is not None and t1 == t2
            assert relation.holds(testcase_env(a, b)) == expected, (program, a, b)
            any_related |= expected
    verdict = BruteForceSolver(SMALL_REGION).solve(relation).verdict
    assert verdict == ("sat" if any_related else "unsat") or verdict == "unknown"
    return any_related


@pytest.mark.parametrize("model_id", ["mwc", "pmwc:2"])
def test_relation_matches_exhaustive_enumeration(model_id):
    """Test the relation against brute force at a reduced geometry on a few programs."""
    model = parse_model(model_id, SMALL_GEOMETRY)
    gen = random_program(ClassWeights(), 3, registers=("x1",), allow_xzr=False)
    for seed in range(5):
        _check_relation_exhaustively(gen.run([11, seed]), model)


@pytest.mark.slow
@pytest.mark.parametrize("model_id", ["mwc", "mwc-pc", "dc", "pmwc:2"])
def test_relation_matches_exhaustive_enumeration_long(model_id):
    """Test the relation against brute force on fifty programs per model."""
    model = parse_model(model_id, SMALL_GEOMETRY)
    gen = random_program(ClassWeights(), 3, registers=("x1",), allow_xzr=False)
    for seed in range(50):
        _check_relation_exhaustively(gen.run([12, seed]), model)
