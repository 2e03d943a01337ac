"""
Experiment records and the append-only JSON-lines database.
"""

from typing import Any, Callable, Dict, Iterator, List, Literal, Optional, Union
from pathlib import Path
import json
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from sidecheck.bir.concrete import ConcreteState
from sidecheck.bir.ir import Memory
from sidecheck.bir.isa import GENERAL_REGISTERS
from sidecheck.errors import CorruptRecord

logger = logging.getLogger("sidecheck")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

Classification = Literal["indistinguishable", "counterexample", "inconclusive", "failure"]
CLASSIFICATIONS = ("indistinguishable", "counterexample", "inconclusive", "failure")


def fnv1a64(data: bytes) -> int:
    """
    64-bit FNV-1a.

    Example:
        >>> f"{fnv1a64(b''):016x}"
        'cbf29ce484222325'
    """
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def digest(value: Any) -> str:
    """Hex FNV-1a digest of the canonical JSON form of ``value``."""
    return f"{fnv1a64(canonical_json(value).encode()):016x}"


class StateRecord(BaseModel):
    """A concrete initial state; zero registers and bytes are omitted."""

    model_config = ConfigDict(frozen=True)

    regs: Dict[str, int] = Field(default_factory=dict)
    z: bool = False
    n: bool = False
    memory: Dict[int, int] = Field(default_factory=dict)

    @classmethod
    def from_state(cls, state: ConcreteState) -> "StateRecord":
        return cls(
            regs={r: v for r, v in state.regs.items() if v},
            z=state.z,
            n=state.n,
            memory={a: b for a, b in sorted(state.memory.items()) if b},
        )

    def to_state(self) -> ConcreteState:
        regs = {r: self.regs.get(r, 0) for r in GENERAL_REGISTERS}
        return ConcreteState(regs=regs, z=self.z, n=self.n, memory=Memory(self.memory))


class ExperimentRecord(BaseModel):
    """One experiment: inputs, configuration and outcome. Replayable on its own."""

    model_config = ConfigDict(extra="forbid")

    id: str = ""
    campaign: str = "campaign"
    generator: str = "manual"
    program_id: str
    program: str
    model: str
    syntactic_obs: bool = False
    region: Dict[str, int]
    s1: StateRecord
    s2: StateRecord
    provenance: Dict[str, Any] = Field(default_factory=dict)
    uarch: Dict[str, Any]
    uarch_digest: str
    repetitions: int
    runs: Dict[str, List[str]] = Field(default_factory=dict)
    final_states: Dict[str, Dict[int, List[int]]] = Field(default_factory=dict)
    classification: Classification
    reason: Optional[str] = None
    distinguishing_sets: List[int] = Field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""

    def content_digest(self) -> str:
        return digest(self.model_dump(mode="json", exclude={"id", "started_at", "finished_at"}))


RecordFilter = Union[Callable[[ExperimentRecord], bool], None]


def db_append(path: Union[str, Path], record: ExperimentRecord) -> None:
    """Append one record as a JSON line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(record.model_dump_json() + "\n")


def db_append_all(path: Union[str, Path], records: List[ExperimentRecord]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        for record in records:
            f.write(record.model_dump_json() + "\n")
    return len(records)


def _matches(record: ExperimentRecord, predicate: RecordFilter, fields: Dict[str, Any]) -> bool:
    if predicate is not None and not predicate(record):
        return False
    return all(getattr(record, key) == value for key, value in fields.items())


def db_scan(
    path: Union[str, Path], predicate: RecordFilter = None, **fields: Any
) -> Iterator[ExperimentRecord]:
    """
    Stream the records of ``path`` that satisfy ``predicate`` and equal every keyword field.

    Lines that cannot be decoded are skipped with a warning. A missing file
    scans as empty.

    Example:
        >>> list(db_scan("/nonexistent.jsonl", classification="counterexample"))
        []
    """
    path = Path(path)
    if not path.exists():
        return
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = ExperimentRecord.model_validate_json(line)
            except ValidationError as e:
                error = CorruptRecord(number, f"{e.error_count()} validation errors")
                logger.warning(f"{path}: {error}")
                continue
            if _matches(record, predicate, fields):
                yield record


def db_count(path: Union[str, Path], **fields: Any) -> Dict[str, int]:
    """Records per classification."""
    counts = {c: 0 for c in CLASSIFICATIONS}
    for record in db_scan(path, **fields):
        counts[record.classification] += 1
    return counts
