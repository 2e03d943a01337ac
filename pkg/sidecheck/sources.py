"""
Program sources for campaign pipelines.
"""

from typing import Any, Dict, List, Optional, Sequence
from pathlib import Path
import logging

from sidecheck.bir.isa import Program, format_program, parse_program
from sidecheck.config import CampaignConfig
from sidecheck.database import digest
from sidecheck.pipeline import PipelineContext, PipelineStage
from sidecheck.progen import build_generator, program_seed

logger = logging.getLogger("sidecheck")


def program_item(program: Program, index: int, seed: Any = None) -> Dict[str, Any]:
    """The work item a program enters the pipeline as."""
    text = format_program(program)
    return {
        "program_id": digest(text),
        "index": index,
        "seed": seed,
        "program": program,
        "text": text,
    }


class Source(PipelineStage):
    """Base class for program sources."""

    def fetch(self) -> List[Dict[str, Any]]:
        """Produce the work items."""
        raise NotImplementedError("Subclasses must implement fetch()")

    def execute(self, context: PipelineContext) -> PipelineContext:
        logger.debug(f"Fetching programs from {self.name}")
        items = self.fetch()
        context.data = items
        context.metadata["record_count"] = len(items)
        context.count("programs", len(items))
        logger.info(f"{self.name}: {len(items)} programs")
        return context


class ProgramSource(Source):
    """
    Draw ``config.programs`` programs from the campaign's generator.

    Program ``i`` is drawn from seed ``[config.seed, i]``, so a campaign is
    reproducible program by program.

    Example:
        >>> source = ProgramSource(CampaignConfig(programs=3, seed=7))
        >>> [item["index"] for item in source.fetch()]
        [0, 1, 2]
    """

    def __init__(self, config: CampaignConfig, name: Optional[str] = None):
        super().__init__(name or f"ProgramSource({config.generator.kind})")
        self.config = config
        self.generator = build_generator(config.generator)

    def fetch(self) -> List[Dict[str, Any]]:
        items = []
        for index in range(self.config.programs):
            seed = program_seed(self.config.seed, index)
            items.append(program_item(self.generator.run(seed), index, seed))
        return items


class StaticSource(Source):
    """Programs given up front, as instruction lists or assembly text."""

    def __init__(self, programs: Sequence[Any], name: Optional[str] = None):
        super().__init__(name or "StaticSource")
        self.programs = list(programs)

    def fetch(self) -> List[Dict[str, Any]]:
        items = []
        for index, program in enumerate(self.programs):
            if isinstance(program, str):
                program = parse_program(program)
            items.append(program_item(program, index))
        return items


class FileSource(StaticSource):
    """Programs read from assembly files."""

    def __init__(self, paths: Sequence[Path], name: Optional[str] = None):
        paths = [Path(p) for p in paths]
        for path in paths:
            if not path.exists():
                raise FileNotFoundError(f"Program file not found: {path}")
        super().__init__(
            [p.read_text(encoding="utf-8") for p in paths], name or f"FileSource({len(paths)})"
        )
