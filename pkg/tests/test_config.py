"""Tests for campaign configuration."""

from pathlib import Path

import pytest

from sidecheck.config import (
    DB_ENV,
    CampaignConfig,
    UarchConfig,
    build_config,
    load_config,
    resolve_db_path,
)
from sidecheck.errors import ConfigError

CAMPAIGNS = Path(__file__).resolve().parent.parent / "campaigns"


def test_defaults():
    """Test the default campaign."""
    cfg = CampaignConfig()
    assert cfg.model == "mwc"
    assert cfg.solver.backend == "z3"
    assert cfg.solver.diversity is False
    assert not cfg.uarch.prefetch.enabled and not cfg.uarch.previction.enabled
    assert cfg.uarch.previction.settle_gap == 8
    assert cfg.total_experiments == 100


@pytest.mark.parametrize("path", sorted(CAMPAIGNS.glob("*.toml")), ids=lambda p: p.stem)
def test_bundled_campaigns_load(path):
    """Test that every bundled campaign file validates."""
    cfg = load_config(path)
    assert cfg.name == path.stem.replace("_", "-")
    assert cfg.build_model().id == cfg.model


def test_toml_and_overrides(temp_dir):
    """Test nested sections and dotted overrides."""
    path = temp_dir / "c.toml"
    path.write_text('model = "pmwc:61"\n[uarch.prefetch]\nenabled = true\n')
    cfg = load_config(path, seed=9, **{"solver.timeout": 2.5, "db": None})
    assert cfg.uarch.prefetch.enabled
    assert cfg.seed == 9
    assert cfg.solver.timeout == 2.5
    assert cfg.db is None


@pytest.mark.parametrize(
    "data",
    [
        {"colour": "blue"},
        {"model": "lru"},
        {"uarch": {"noise": {"flip_probability": 2}}},
        {"enumeration": {"term": "index(acc0)"}},
        {"enumeration": {"guard": "index(acc0) =="}},
        {
            "generator": {
                "weights": {
                    "load_store": 0,
                    "arith": 0,
                    "compare_branch": 0,
                    "cond_select": 0,
                    "nop": 0,
                }
            }
        },
        {"generator": {"base_reg": "x31"}},
    ],
)
def test_invalid_configs(data):
    """Test that bad campaigns raise ConfigError with the offending key."""
    with pytest.raises(ConfigError):
        build_config(data)


def test_bad_toml(temp_dir):
    """Test that TOML syntax errors are configuration errors."""
    path = temp_dir / "bad.toml"
    path.write_text("model = \n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_term_range_values():
    """Test the inclusive term range."""
    cfg = build_config({"enumeration": {"term": "index(acc0)", "term_range": [2, 4]}})
    assert cfg.enumeration.values() == [2, 3, 4]


def test_uarch_digest_is_stable():
    """Test that equal simulator settings share a digest."""
    a = UarchConfig.model_validate({"prefetch": {"enabled": True}})
    b = UarchConfig.model_validate({"prefetch": {"enabled": True, "k": 3}})
    assert a.digest() == b.digest()
    assert a.digest() != UarchConfig().digest()


def test_db_path_resolution(monkeypatch, temp_dir):
    """Test explicit path, campaign path, environment and default in that order."""
    monkeypatch.delenv(DB_ENV, raising=False)
    monkeypatch.chdir(temp_dir)
    assert resolve_db_path().name == "sidecheck.jsonl"
    monkeypatch.setenv(DB_ENV, "env.jsonl")
    assert resolve_db_path() == Path("env.jsonl")
    assert resolve_db_path(build_config({"db": "cfg.jsonl"})) == Path("cfg.jsonl")
    assert resolve_db_path(build_config({"db": "cfg.jsonl"}), "cli.jsonl") == Path("cli.jsonl")
