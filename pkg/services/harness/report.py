# services/harness/report.py
"""
CSV and JSON writers for study reports
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from shared.exceptions import ReportError
from shared.models import StudyReport, StudyRow

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["alpha", "delta", "P", "N", "l2_error", "h1_error", "l2_rate", "h1_rate"]

PathLike = Union[str, Path]


def _sci(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.16e}"


def csv_line(row: StudyRow) -> List[str]:
    return [
        repr(row.alpha), repr(row.delta), str(row.P), str(row.N),
        _sci(row.l2_error), _sci(row.h1_error), _sci(row.l2_rate), _sci(row.h1_rate),
    ]


def render_csv(report: StudyReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        writer.writerow(csv_line(row))
    return buffer.getvalue()


def render_json(report: StudyReport, include_timing: bool = False) -> str:
    """Rows plus metadata; wall time only on request so output stays reproducible"""
    payload = report.model_dump(mode="json", exclude=None if include_timing else {"wall_time"})
    return json.dumps(payload, indent=2) + "\n"


def write_report(report: StudyReport, fmt: str, path: Optional[PathLike] = None,
                 include_timing: bool = False) -> str:
    """
    Render a report as csv or json and write it to path (stdout when None or '-')

    Returns:
        The rendered text
    """
    if fmt == "csv":
        text = render_csv(report)
    elif fmt == "json":
        text = render_json(report, include_timing)
    else:
        raise ReportError(f"unknown report format '{fmt}'", path=str(path))

    if path is None or str(path) == "-":
        print(text, end="")
        return text
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise ReportError(f"cannot write report to {path}: {exc}", path=str(path)) from exc
    logger.info("Wrote report", extra={"path": str(path), "format": fmt, "rows": len(report.rows)})
    return text


def parse_csv(text: str) -> List[Dict[str, Optional[float]]]:
    """Rows of a CSV report as dicts; empty cells become None"""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ReportError("empty CSV report") from None
    if header != CSV_COLUMNS:
        raise ReportError(f"unexpected CSV header {header}")
    rows = []
    for cells in reader:
        if len(cells) != len(CSV_COLUMNS):
            raise ReportError(f"CSV line has {len(cells)} fields, expected {len(CSV_COLUMNS)}")
        row: Dict[str, Optional[float]] = {}
        for key, cell in zip(CSV_COLUMNS, cells):
            if cell == "":
                row[key] = None
            elif key in ("P", "N"):
                row[key] = int(cell)
            else:
                row[key] = float(cell)
        rows.append(row)
    return rows


def read_report(path: PathLike):
    """JSON files load as a StudyReport, CSV files as a list of row dicts"""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ReportError(f"cannot read report {path}: {exc}", path=str(path)) from exc
    if str(path).endswith(".json"):
        return StudyReport.model_validate_json(text)
    return parse_csv(text)
