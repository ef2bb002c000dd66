from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO

from .utils import format_cell


@dataclass
class ResultTable:
	"""Rows of one command, emitted as CSV or as a JSON array of objects with the same keys."""

	columns: List[str]
	rows: List[Sequence[Any]] = field(default_factory=list)

	def add_row(self, *values: Any) -> None:
		if len(values) != len(self.columns):
			raise ValueError(f"row of {len(values)} values for columns {self.columns}")
		self.rows.append(values)

	def formatted_rows(self) -> List[List[str]]:
		return [[format_cell(v) for v in row] for row in self.rows]

	def write_csv(self, stream: TextIO) -> None:
		writer = csv.writer(stream, lineterminator="\n")
		writer.writerow(self.columns)
		writer.writerows(self.formatted_rows())

	def write_json(self, stream: TextIO) -> None:
		records = [dict(zip(self.columns, row)) for row in self.formatted_rows()]
		json.dump(records, stream, indent=2)
		stream.write("\n")

	def render(self, fmt: str = "csv") -> str:
		buf = io.StringIO()
		if fmt == "json":
			self.write_json(buf)
		else:
			self.write_csv(buf)
		return buf.getvalue()

	def export(self, path: Path, fmt: str = "csv") -> None:
		path = Path(path)
		path.parent.mkdir(parents=True, exist_ok=True)
		with path.open("w", newline="", encoding="utf-8") as f:
			f.write(self.render(fmt))


@dataclass
class ReportEvent:
	timestamp: datetime
	phase: str
	event: str
	key: Optional[str] = None
	completed: Optional[int] = None
	total: Optional[int] = None
	error: Optional[str] = None


@dataclass
class SweepReport:
	"""Collects progress events from sweeps; usable directly as a ``progress_cb``."""

	events: List[ReportEvent] = field(default_factory=list)

	def __call__(self, payload: Dict[str, Any]) -> None:
		self.add_event(payload)

	def add_event(self, payload: Dict[str, Any], *, ts: Optional[datetime] = None) -> None:
		key = payload.get("key")
		completed = payload.get("completed")
		total = payload.get("total")
		error = payload.get("error")
		self.events.append(
			ReportEvent(
				timestamp=ts or datetime.now(),
				phase=str(payload.get("phase") or ""),
				event=str(payload.get("event") or ""),
				key=None if key is None else str(key),
				completed=int(completed) if isinstance(completed, (int, float)) else None,
				total=int(total) if isinstance(total, (int, float)) else None,
				error=str(error) if error else None,
			)
		)

	def summarize(self) -> Dict[str, Dict[str, int]]:
		counts: Dict[str, Dict[str, int]] = {}
		for e in self.events:
			phase = counts.setdefault(e.phase, {"completed": 0, "errors": 0})
			if e.event == "item_complete":
				phase["completed"] += 1
			elif e.event == "item_error":
				phase["errors"] += 1
		return counts

	def first_error(self) -> Optional[ReportEvent]:
		return next((e for e in self.events if e.event == "item_error"), None)
