"""
Destinations for experiment records.
"""

from typing import Any, Dict, List, Optional, Union
from pathlib import Path
import logging

from sidecheck.database import ExperimentRecord, db_append_all
from sidecheck.pipeline import HAS_RICH, PipelineContext, PipelineStage, console

logger = logging.getLogger("sidecheck")

STYLES = {
    "indistinguishable": "green",
    "counterexample": "bold red",
    "inconclusive": "yellow",
    "failure": "magenta",
}


def records_of(data: List[Dict[str, Any]]) -> List[ExperimentRecord]:
    return [item["record"] for item in data if "record" in item]


class Destination(PipelineStage):
    """Base class for record destinations."""

    def write(self, records: List[ExperimentRecord]) -> None:
        raise NotImplementedError("Subclasses must implement write()")

    def execute(self, context: PipelineContext) -> PipelineContext:
        records = records_of(context.data)
        logger.debug(f"Writing {len(records)} records to {self.name}")
        self.write(records)
        return context


class DatabaseDestination(Destination):
    """
    Append records to the JSON-lines experiment database.

    Example:
        >>> pipeline.add_stage(DatabaseDestination("runs/sidecheck.jsonl"))
    """

    def __init__(self, path: Union[str, Path], name: Optional[str] = None):
        super().__init__(name or f"DatabaseDestination({path})")
        self.path = Path(path)

    def write(self, records: List[ExperimentRecord]) -> None:
        if not records:
            logger.warning("No records to write")
            return
        written = db_append_all(self.path, records)
        logger.info(f"Appended {written} records to {self.path}")


class ConsoleDestination(Destination):
    """Print one line per record."""

    def __init__(self, name: Optional[str] = None, limit: Optional[int] = None):
        super().__init__(name or "ConsoleDestination")
        self.limit = limit

    def write(self, records: List[ExperimentRecord]) -> None:
        shown = records[: self.limit] if self.limit else records
        for record in shown:
            line = f"{record.program_id} {record.classification}"
            if record.distinguishing_sets:
                line += f" sets={record.distinguishing_sets}"
            if record.reason:
                line += f" ({record.reason})"
            if HAS_RICH:
                console.print(line, style=STYLES[record.classification], highlight=False)
            else:
                console.print(line)
        if self.limit and len(records) > self.limit:
            console.print(f"... and {len(records) - self.limit} more records")
