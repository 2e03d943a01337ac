"""
Campaign configuration: pydantic models, TOML loading and environment settings.
"""

from typing import Any, Dict, List, Literal, Optional, Tuple, Union
from pathlib import Path
import json
import logging
import os
import sys

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from sidecheck.bir.concrete import MEM_BASE, MEM_SIZE, MemoryRegion
from sidecheck.bir.isa import GENERAL_REGISTERS
from sidecheck.errors import ConfigError, SidecheckError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

try:
    from dotenv import load_dotenv

    HAS_DOTENV = True
except ImportError:
    HAS_DOTENV = False

logger = logging.getLogger("sidecheck")

SOLVER_ENV = "SCAMV_SOLVER"
DB_ENV = "SIDECHECK_DB"
DEFAULT_DB = "sidecheck.jsonl"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ClassWeights(_Section):
    """Relative frequency of each instruction class in random programs."""

    load_store: float = Field(4.0, ge=0)
    arith: float = Field(2.0, ge=0)
    compare_branch: float = Field(2.0, ge=0)
    cond_select: float = Field(1.0, ge=0)
    nop: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _some_positive(self) -> "ClassWeights":
        if not any(w > 0 for w in self.as_dict().values()):
            raise ValueError("at least one instruction class needs a positive weight")
        return self

    def as_dict(self) -> Dict[str, float]:
        return {
            "load_store": self.load_store,
            "arith": self.arith,
            "compare_branch": self.compare_branch,
            "cond_select": self.cond_select,
            "nop": self.nop,
        }


class GeneratorConfig(_Section):
    kind: Literal["random", "loads", "strides", "branch-loads"] = "random"
    length: int = Field(5, ge=1)
    max_len: int = Field(3, ge=1)
    base_reg: str = "x10"
    steps: int = Field(3, ge=3)
    stride_lines: Optional[int] = Field(None, ge=1, le=4)
    then_padding: int = Field(0, ge=0)
    weights: ClassWeights = ClassWeights()
    allow_xzr: bool = True

    @field_validator("base_reg")
    @classmethod
    def _known_register(cls, value: str) -> str:
        if value not in GENERAL_REGISTERS:
            raise ValueError(f"unknown register '{value}'")
        return value


class GeometryConfig(_Section):
    offset_bits: int = Field(6, ge=0, le=12)
    index_bits: int = Field(7, ge=0, le=16)
    ways: int = Field(4, ge=1)

    def build(self) -> Any:
        from sidecheck.obsmodel import CacheGeometry

        return CacheGeometry(self.offset_bits, self.index_bits, self.ways)


class RegionConfig(_Section):
    base: int = Field(MEM_BASE, ge=0)
    size: int = Field(MEM_SIZE, ge=8)

    def build(self) -> MemoryRegion:
        return MemoryRegion(self.base, self.size)


class PrefetchConfig(_Section):
    enabled: bool = False
    k: int = Field(3, ge=2)
    n_pf: int = Field(3, ge=1)
    max_stride_lines: int = Field(4, ge=1)
    respect_4k_pages: bool = True


class PrevictionConfig(_Section):
    enabled: bool = False
    settle_gap: int = Field(8, ge=1)


class NoiseConfig(_Section):
    enabled: bool = False
    seed: int = 0
    flip_probability: float = Field(0.0, ge=0.0, le=1.0)


class UarchConfig(_Section):
    """Simulator configuration; every quirk is off by default."""

    geometry: GeometryConfig = GeometryConfig()
    replacement: Literal["lru"] = "lru"
    prefetch: PrefetchConfig = PrefetchConfig()
    previction: PrevictionConfig = PrevictionConfig()
    noise: NoiseConfig = NoiseConfig()

    def canonical(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        from sidecheck.database import fnv1a64

        return f"{fnv1a64(self.canonical().encode()):016x}"


class SolverConfig(_Section):
    backend: Literal["z3", "external", "brute"] = "z3"
    timeout: float = Field(30.0, gt=0)
    path: Optional[str] = None
    diversity: bool = False
    keep_queries: bool = False


class EnumerationConfig(_Section):
    """
    Test-generation strategy: path pairs with an optional guard, optionally
    refined by a term whose value pairs range over ``term_values`` or the
    inclusive ``term_range``.
    """

    guard: Optional[str] = None
    term: Optional[str] = None
    term_values: Optional[List[int]] = None
    term_range: Optional[Tuple[int, int]] = None

    @model_validator(mode="after")
    def _term_domain(self) -> "EnumerationConfig":
        if self.term is not None and not self.values():
            raise ValueError("a term needs term_values or term_range")
        if self.term_range is not None and self.term_range[0] > self.term_range[1]:
            raise ValueError(f"empty term_range {self.term_range}")
        return self

    def values(self) -> List[int]:
        if self.term_values is not None:
            return list(self.term_values)
        if self.term_range is not None:
            return list(range(self.term_range[0], self.term_range[1] + 1))
        return []


class CampaignConfig(_Section):
    """
    A whole campaign.

    Example:
        >>> cfg = CampaignConfig(model="pmwc:61", generator=GeneratorConfig(kind="strides"))
        >>> cfg.repetitions
        10
    """

    name: str = "campaign"
    generator: GeneratorConfig = GeneratorConfig()
    model: str = "mwc"
    syntactic_obs: bool = False
    uarch: UarchConfig = UarchConfig()
    region: RegionConfig = RegionConfig()
    enumeration: EnumerationConfig = EnumerationConfig()
    solver: SolverConfig = SolverConfig()
    programs: int = Field(10, ge=1)
    experiments_per_program: int = Field(10, ge=1)
    repetitions: int = Field(10, ge=1)
    max_paths: int = Field(64, ge=1)
    seed: int = 0
    workers: int = Field(1, ge=1)
    db: Optional[str] = None

    @model_validator(mode="after")
    def _parse_references(self) -> "CampaignConfig":
        from sidecheck.bir.text import parse_expr
        from sidecheck.obsmodel import parse_model

        geometry = self.uarch.geometry.build()
        try:
            parse_model(self.model, geometry)
            for text in (self.enumeration.term, self.enumeration.guard):
                if text is not None and text != "no-observations":
                    parse_expr(text, geometry)
        except SidecheckError as e:
            raise ValueError(str(e))
        return self

    def build_model(self) -> Any:
        from sidecheck.obsmodel import parse_model

        return parse_model(self.model, self.uarch.geometry.build(), self.syntactic_obs)

    @property
    def total_experiments(self) -> int:
        return self.programs * self.experiments_per_program


def load_env(dotenv_path: Optional[str] = None) -> Dict[str, Optional[str]]:
    """Load ``.env`` (when python-dotenv is available) and return the sidecheck settings."""
    if HAS_DOTENV:
        load_dotenv(dotenv_path)
    return {SOLVER_ENV: os.environ.get(SOLVER_ENV), DB_ENV: os.environ.get(DB_ENV)}


def _format_validation(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def build_config(data: Dict[str, Any], **overrides: Any) -> CampaignConfig:
    """
    Validate a configuration mapping; ``overrides`` with a None value are ignored.

    Dotted override keys address nested sections, e.g. ``solver.timeout``.
    """
    merged: Dict[str, Any] = json.loads(json.dumps(data))
    for key, value in overrides.items():
        if value is None:
            continue
        target = merged
        *parents, leaf = key.split(".")
        for parent in parents:
            target = target.setdefault(parent, {})
        target[leaf] = value
    try:
        return CampaignConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(_format_validation(e))


def load_config(path: Union[str, Path], **overrides: Any) -> CampaignConfig:
    """Read a TOML campaign file."""
    path = Path(path)
    with open(path, "rb") as f:
        try:
            data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}")
    logger.debug(f"Loaded campaign file {path}")
    return build_config(data, **overrides)


def resolve_db_path(config: Optional[CampaignConfig] = None, explicit: Optional[str] = None) -> Path:
    env = load_env()
    for candidate in (explicit, config.db if config else None, env[DB_ENV]):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_DB)

