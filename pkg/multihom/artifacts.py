"""
Run directory and the files written into it.

Every CLI invocation gets one directory `<subcommand>-<UTC timestamp>`
under output.root holding:
- config.toml: snapshot of the resolved configuration
- result.csv: one row per parameter point (comma, '.' decimals, LF)
- summary.json: fits, verdicts and provenance (UTF-8, sorted keys)
- report.txt: the human-readable verdict lines
- run.log: copy of the log records of the run
- field dumps, scale plans and tower levels as JSON or CSV

Nothing is written outside the run directory.
"""

import csv
import json
import logging
import math
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import PreconditionError
from .kinds import Verdict

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
TIMESTAMP = "%Y%m%dT%H%M%SZ"


def _default(value: Any) -> Any:
    """json.dumps hook for numpy scalars and arrays, enums and paths."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (tuple, set, frozenset)):
        return list(value)
    if hasattr(value, "as_dict"):
        return value.as_dict()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def to_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_default, ensure_ascii=False) + "\n"


def format_cell(value: Any) -> str:
    """CSV text of one value; floats use repr so rows are reproducible bit for bit."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return ";".join(format_cell(v) for v in np.asarray(value, dtype=object).ravel())
    return str(value)


def write_csv(path: Path, rows: Sequence[Dict[str, Any]]) -> None:
    """Header is the union of row keys in order of first appearance."""
    header: List[str] = []
    for row in rows:
        for key in row:
            if key not in header:
                header.append(key)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_cell(row.get(key)) for key in header])


def verdict_line(v: Verdict) -> str:
    status = {True: "PASS", False: "FAIL", None: "REPORT"}[v.passed]
    return (f"[{v.name}] {v.measured:.6g} {v.comparison} {v.threshold:.6g} "
            f"({v.source.value}) [{status}]")


def format_report(result) -> str:
    """Plain-text report of an ExperimentResult."""
    summary = result.summary()
    lines = [f"{summary['kind']}: {summary['description']}", f"rows: {summary['rows']}"]
    for name, fit in sorted(result.fits.items()):
        lines.append(f"fit {name}: slope {fit.slope:.4f} +- {fit.stderr:.4f} over {fit.points} points")
    lines.extend(verdict_line(v) for v in result.verdicts)
    lines.extend(f"note: {note}" for note in result.notes)
    lines.append("result: " + ("PASS" if result.passed else "FAIL"))
    return "\n".join(lines) + "\n"


class RunDirectory:
    """
    One invocation's output directory.

    Use as a context manager to mirror log records into run.log while the
    run is active.
    """

    def __init__(self, path: Path):
        self.path = Path(path).resolve()
        self._handler: Optional[logging.Handler] = None

    @classmethod
    def create(cls, root, subcommand: str, now: Optional[datetime] = None) -> "RunDirectory":
        """Make `<root>/<subcommand>-<UTC timestamp>`, adding -1, -2, ... on collision."""
        root = Path(root).resolve()
        root.mkdir(parents=True, exist_ok=True)
        stamp = (now or datetime.now(timezone.utc)).strftime(TIMESTAMP)
        base = f"{subcommand}-{stamp}"
        candidate, n = root / base, 0
        while True:
            try:
                candidate.mkdir()
                break
            except FileExistsError:
                n += 1
                candidate = root / f"{base}-{n}"
        logger.info("run directory %s", candidate)
        return cls(candidate)

    def file(self, name: str) -> Path:
        """Path of `name` inside the run directory; escaping paths are refused."""
        target = (self.path / name).resolve()
        if target != self.path and self.path not in target.parents:
            raise PreconditionError(f"refusing to write {name!r} outside the run directory")
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def __enter__(self) -> "RunDirectory":
        handler = logging.FileHandler(self.file("run.log"), encoding="utf-8")
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(handler)
        self._handler = handler
        return self

    def __exit__(self, *exc) -> None:
        if self._handler is not None:
            logging.getLogger().removeHandler(self._handler)
            self._handler.close()
            self._handler = None

    def write_text(self, name: str, text: str) -> Path:
        path = self.file(name)
        path.write_text(text, encoding="utf-8", newline="\n")
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        return self.write_text(name, to_json(payload))

    def write_config(self, config) -> Path:
        return self.write_text("config.toml", config.to_toml())

    def write_rows(self, rows: Sequence[Dict[str, Any]], name: str = "result.csv") -> Path:
        path = self.file(name)
        write_csv(path, rows)
        return path

    def write_summary(self, payload: Dict[str, Any]) -> Path:
        return self.write_json("summary.json", payload)

    def dump_field(self, name: str, points: np.ndarray, values: np.ndarray,
                   labels: Iterable[str], meta: Dict[str, Any]) -> Path:
        """
        Long-format CSV `<name>.csv` (coordinates then value columns) plus
        `<name>.json` with the metadata.
        """
        points = np.asarray(points, dtype=float)
        d = points.shape[-1]
        coords = points.reshape(-1, d)
        values = np.asarray(values, dtype=float)
        columns = values.reshape(-1, coords.shape[0]).T if values.ndim > points.ndim - 1 else values.reshape(-1, 1)
        labels = list(labels)
        header = [f"x{i}" for i in range(d)] + labels
        rows = [dict(zip(header, (*c, *v))) for c, v in zip(coords, columns)]
        path = self.write_rows(rows, f"{name}.csv")
        self.write_json(f"{name}.json", meta)
        return path

    def dump_solution(self, name: str, u) -> Path:
        """Nodal values of a FieldOnGrid."""
        return self.dump_field(name, u.domain.points(), u.values, ["u"], u.metadata())

    def dump_corrector(self, name: str, corrector) -> Path:
        """Reperiodized corrector values on the z grid, one column per direction."""
        points = np.stack(np.meshgrid(*corrector.grid().axes(), indexing="ij"), axis=-1)
        labels = [f"chi{j}" for j in range(corrector.dimension)]
        return self.dump_field(name, points, corrector.values, labels, corrector.metadata())
