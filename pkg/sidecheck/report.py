"""
Campaign reports over the experiment database.
"""

from typing import Any, Dict, List, Literal, Union
from pathlib import Path
import io
import logging

import pandas as pd

from sidecheck.database import CLASSIFICATIONS, ExperimentRecord, db_scan

try:
    from rich.console import Console
    from rich.table import Table

    HAS_RICH = True
except ImportError:
    HAS_RICH = False

logger = logging.getLogger("sidecheck")

GROUP_COLUMNS = ["campaign", "generator", "model"]
COUNT_COLUMNS = ["experiments", "indistinguishable", "inconclusive", "counterexample", "failure"]
REPORT_WIDTH = 120


def summary_frame(records: List[ExperimentRecord]) -> pd.DataFrame:
    """
    Counts per classification, grouped by campaign, generator and model.

    Example:
        >>> list(summary_frame([]).columns)[:4]
        ['campaign', 'generator', 'model', 'experiments']
    """
    if not records:
        return pd.DataFrame(columns=GROUP_COLUMNS + COUNT_COLUMNS)
    frame = pd.DataFrame(
        [
            {**{c: getattr(r, c) for c in GROUP_COLUMNS}, "classification": r.classification}
            for r in records
        ]
    )
    counts = (
        pd.crosstab([frame[c] for c in GROUP_COLUMNS], frame["classification"])
        .reindex(columns=list(CLASSIFICATIONS), fill_value=0)
        .reset_index()
    )
    counts.columns.name = None
    counts["experiments"] = counts[list(CLASSIFICATIONS)].sum(axis=1)
    return counts[GROUP_COLUMNS + COUNT_COLUMNS].sort_values(GROUP_COLUMNS, ignore_index=True)


def _state_line(regs: Dict[str, int], memory: Dict[int, int]) -> str:
    parts = [f"{r}=0x{v:x}" for r, v in sorted(regs.items(), key=lambda kv: int(kv[0][1:]))]
    if memory:
        parts.append(f"mem={{{', '.join(f'0x{a:x}: 0x{b:02x}' for a, b in sorted(memory.items()))}}}")
    return " ".join(parts) or "(all zero)"


def counterexample_text(record: ExperimentRecord) -> str:
    lines = [
        f"counterexample {record.id} ({record.campaign}, {record.generator}, {record.model})",
        *("    " + line for line in record.program.splitlines()),
        f"  s1: {_state_line(record.s1.regs, record.s1.memory)}",
        f"  s2: {_state_line(record.s2.regs, record.s2.memory)}",
        f"  distinguishing sets: {', '.join(str(s) for s in record.distinguishing_sets)}",
    ]
    return "\n".join(lines)


def _render_table(frame: pd.DataFrame) -> str:
    if not HAS_RICH:
        return frame.to_string(index=False)
    table = Table(title="Experiments")
    for column in GROUP_COLUMNS:
        table.add_column(column)
    for column in COUNT_COLUMNS:
        table.add_column(column, justify="right")
    for row in frame.itertuples(index=False):
        table.add_row(*(str(v) for v in row))
    console = Console(width=REPORT_WIDTH, record=True, file=io.StringIO())
    console.print(table)
    return console.export_text()


def report(
    db: Union[str, Path],
    format: Literal["text", "csv"] = "text",
    **filters: Any,
) -> str:
    """
    Render the database at ``db`` as a plain-text report or as CSV.

    The text form is the summary table followed by one section per
    counterexample. The CSV form holds the summary rows only.

    Example:
        >>> print(report("missing.jsonl", format="csv"))
        campaign,generator,model,experiments,indistinguishable,inconclusive,counterexample,failure
    """
    records = list(db_scan(db, **filters))
    frame = summary_frame(records)
    if format == "csv":
        return frame.to_csv(index=False).rstrip("\n")
    if format != "text":
        raise ValueError(f"unknown report format '{format}'")

    sections = [_render_table(frame).rstrip()]
    for record in records:
        if record.classification == "counterexample":
            sections.append(counterexample_text(record))
    logger.debug(f"Report over {len(records)} records from {db}")
    return "\n\n".join(sections) + "\n"
