"""Tests for symbolic execution."""

import pytest

from sidecheck.bir import ConcreteState, ir, parse_program, transpile
from sidecheck.errors import PathExplosion, PathMismatch
from sidecheck.obsmodel import annotate, parse_model
from sidecheck.symexec import concretize_obs, dump_paths, path_of, sym_exec


def _paths(source, model="mwc", **kw):
    return sym_exec(annotate(transpile(parse_program(source)), parse_model(model)), **kw)


def test_straight_line_program_has_one_path(stride_program):
    """Test a program without branches."""
    paths = sym_exec(annotate(transpile(stride_program), parse_model("mwc")))
    assert len(paths) == 1
    assert paths[0].path == ir.TRUE
    assert len(paths[0].obs) == 3
    assert [a.pc for a in paths[0].accesses] == [0, 1, 2]


def test_previction_program_has_two_paths(previction_program, previction_inputs):
    """Test that each input follows its own arm."""
    paths = sym_exec(annotate(transpile(previction_program), parse_model("mwc")))
    assert len(paths) == 2
    s1, s2 = previction_inputs
    i, j = path_of(paths, s1), path_of(paths, s2)
    assert {i, j} == {0, 1}
    assert [a.pc for a in paths[i].accesses] == [6, 21, 22]
    assert [a.pc for a in paths[j].accesses] == [2, 3, 4]
    assert concretize_obs(paths[i], s1) == concretize_obs(paths[j], s2)


def test_then_branch_explored_first():
    """Test the depth-first order of the path set."""
    paths = _paths("cbz x1, #0x8\nldr x2, [x3]\nldr x4, [x5]")
    assert len(paths) == 2
    taken = ConcreteState(regs={"x1": 0})
    assert path_of(paths, taken) == 0


def test_constant_false_branches_are_pruned():
    """Test that an infeasible fork is dropped without a solver."""
    paths = _paths("mov x1, #0\ncbz x1, #0x8\nldr x2, [x3]\nldr x4, [x5]")
    assert len(paths) == 1
    assert [a.pc for a in paths[0].accesses] == [3]


def test_address_uses_pre_state():
    """Test that a load overwriting its base is observed on the old base."""
    paths = _paths("ldr x1, [x1]\nldr x2, [x1]")
    env = ConcreteState(regs={"x1": 0x80000000}).to_env()
    first = paths[0].accesses[0].addr
    assert ir.evaluate(first, env) == 0x80000000
    second = paths[0].accesses[1].addr
    assert isinstance(second, ir.Load)


def test_path_explosion():
    """Test the path limit."""
    source = "\n".join(["cbz x1, #0x4"] * 7)
    with pytest.raises(PathExplosion):
        _paths(source, max_paths=4)


def test_concretize_rejects_wrong_path():
    """Test that an input off the path is reported."""
    paths = _paths("cbz x1, #0x8\nldr x2, [x3]\nldr x4, [x5]")
    with pytest.raises(PathMismatch):
        concretize_obs(paths[0], ConcreteState(regs={"x1": 1}))


def test_dump_paths_mentions_observations(previction_program):
    """Test the structured dump of a path set."""
    model = parse_model("mwc")
    paths = sym_exec(annotate(transpile(previction_program), model))
    text = dump_paths(paths, model.geometry)
    assert "path 0:" in text and "path 1:" in text
    assert "tag(x2)" in text
