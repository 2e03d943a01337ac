"""Tests for the command-line interface."""

import pytest
from typer.testing import CliRunner

from sidecheck.cli import app, parse_state
from sidecheck.database import db_append, db_scan
from sidecheck.errors import ConfigError

from tests.conftest import PREVICTION_SOURCE, STRIDE_SOURCE

runner = CliRunner()


@pytest.fixture
def stride_file(temp_dir):
    path = temp_dir / "stride.s"
    path.write_text(STRIDE_SOURCE)
    return path


@pytest.fixture
def prefetch_config(temp_dir):
    path = temp_dir / "prefetch.toml"
    path.write_text('model = "pmwc:61"\nrepetitions = 2\n[uarch.prefetch]\nenabled = true\n')
    return path


def test_parse_state():
    """Test the input syntax of the run command."""
    s = parse_state("x10=0x80100080, z=1, mem[0x80000000]=0x1ff")
    assert s.read("x10") == 0x80100080
    assert s.z and not s.n
    assert s.memory == {0x80000000: 0xFF}
    with pytest.raises(ConfigError):
        parse_state("x10:5")


def test_gen_is_reproducible():
    """Test that gen prints the same programs for the same seed."""
    first = runner.invoke(app, ["gen", "--count", "3", "--seed", "4", "--kind", "loads"])
    second = runner.invoke(app, ["gen", "--count", "3", "--seed", "4", "--kind", "loads"])
    assert first.exit_code == 0
    assert first.output == second.output
    assert first.output.count("; program") == 3


def test_relate_prints_relation(stride_file):
    """Test the IR, path and relation dump."""
    result = runner.invoke(app, ["relate", str(stride_file)])
    assert result.exit_code == 0
    assert "OBS(" in result.output
    assert "path 0:" in result.output
    assert "relation:" in result.output


def test_run_counterexample(stride_file, prefetch_config, temp_dir):
    """Test a literal counterexample through the run command."""
    db = temp_dir / "runs.jsonl"
    result = runner.invoke(
        app,
        [
            "run", str(stride_file),
            "--s1", "x10=0x80100080",
            "--s2", "x10=0x80100cc0",
            "-c", str(prefetch_config),
            "--db", str(db),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "relation: satisfied" in result.output
    assert "counterexample" in result.output
    assert "distinguishing sets: 61" in result.output
    records = list(db_scan(db))
    assert [r.classification for r in records] == ["counterexample"]

    replayed = runner.invoke(app, ["replay", "--db", str(db)])
    assert replayed.exit_code == 0
    assert "counterexample -> counterexample" in replayed.output
    assert "MISMATCH" not in replayed.output and "witness invalid" not in replayed.output


def test_replay_mismatch_exits_nonzero(stride_file, prefetch_config, temp_dir):
    """Test that a stored classification the simulator does not reproduce fails replay."""
    db = temp_dir / "runs.jsonl"
    runner.invoke(
        app,
        ["run", str(stride_file), "--s1", "x10=0x80100080", "--s2", "x10=0x80100cc0",
         "-c", str(prefetch_config), "--db", str(db)],
    )
    (record,) = db_scan(db)
    db_append(db, record.model_copy(update={"id": "edited", "classification": "indistinguishable"}))

    result = runner.invoke(app, ["replay", "edited", "--db", str(db)])
    assert result.exit_code == 3
    assert "indistinguishable -> counterexample MISMATCH" in result.output
    assert runner.invoke(app, ["replay", record.id, "--db", str(db)]).exit_code == 0


def test_run_previction_off(temp_dir):
    """Test that the previction pair is indistinguishable on the plain simulator."""
    program = temp_dir / "previction.s"
    program.write_text(PREVICTION_SOURCE)
    lines = "x2=0x80100000,x3=0x80110000,x4=0x80120000"
    result = runner.invoke(
        app, ["run", str(program), "--s1", f"x1=0,{lines}", "--s2", f"x1=1,{lines}"]
    )
    assert result.exit_code == 0
    assert "relation: satisfied" in result.output
    assert "indistinguishable" in result.output


def test_report_after_campaign(temp_dir):
    """Test campaign, report and csv through the CLI."""
    config = temp_dir / "small.toml"
    config.write_text(
        'name = "small"\nmodel = "mwc"\nprograms = 2\nexperiments_per_program = 2\nrepetitions = 1\n'
        '[generator]\nkind = "loads"\n'
    )
    db = temp_dir / "runs.jsonl"
    result = runner.invoke(app, ["campaign", str(config), "--db", str(db), "--seed", "3"])
    assert result.exit_code == 0, result.output
    assert "name=small" in result.output

    csv = runner.invoke(app, ["report", "--db", str(db), "--format", "csv"])
    assert csv.exit_code == 0
    assert csv.output.splitlines()[1].startswith("small,loads,mwc,")


def test_campaign_on_program_files(stride_file, temp_dir):
    """Test the campaign command on an assembly file."""
    config = temp_dir / "files.toml"
    config.write_text('name = "files"\nmodel = "mwc"\nexperiments_per_program = 2\nrepetitions = 1\n')
    db = temp_dir / "runs.jsonl"
    result = runner.invoke(app, ["campaign", str(config), "--db", str(db), "-p", str(stride_file)])
    assert result.exit_code == 0, result.output
    assert "generator=file" in result.output
    assert {r.generator for r in db_scan(db)} == {"file"}

    missing = runner.invoke(app, ["campaign", str(config), "-p", str(temp_dir / "missing.s")])
    assert missing.exit_code == 1


def test_bad_config_exits_with_two(temp_dir, stride_file):
    """Test the exit code of configuration errors."""
    config = temp_dir / "bad.toml"
    config.write_text('model = "lru"\n')
    result = runner.invoke(app, ["relate", str(stride_file), "-c", str(config)])
    assert result.exit_code == 2


def test_missing_program_exits_with_one(temp_dir):
    """Test the exit code of I/O errors."""
    result = runner.invoke(app, ["relate", str(temp_dir / "missing.s")])
    assert result.exit_code == 1


def test_replay_missing_database(temp_dir):
    """Test replay without a database."""
    result = runner.invoke(app, ["replay", "--db", str(temp_dir / "none.jsonl")])
    assert result.exit_code == 1


def test_unknown_report_format(temp_dir):
    """Test that report rejects unknown formats."""
    result = runner.invoke(app, ["report", "--db", str(temp_dir / "none.jsonl"), "--format", "html"])
    assert result.exit_code == 2
