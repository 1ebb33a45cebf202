# output.py
"""CSV and JSON emission of result tables.

Every file carries the configuration echo, the seed list, the package
version, per-column units, the crosstalk resampling policy and the
covariance form. Floats are written with repr(), the shortest decimal that
round-trips exactly.
"""

import json
import logging
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from superres_moments import __version__
from superres_moments.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class ResultTable:
    """Column-oriented command output; rows follow grid order."""

    columns: List[str]
    units: Dict[str, str]
    rows: List[List[Any]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def add_row(self, values: List[Any]) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"Row of {len(values)} values for {len(self.columns)} columns")
        self.rows.append([_plain(v) for v in values])

    def column(self, name: str) -> List[Any]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "metadata": self.metadata,
            "columns": self.columns,
            "units": self.units,
            "rows": self.rows,
        }


def run_metadata(command: str, document: Dict[str, Any], seeds: List[Any], policy: str,
                 **extra: Any) -> Dict[str, Any]:
    """Metadata block shared by every command's output."""
    metadata = {
        "command": command,
        "config": document,
        "seeds": seeds,
        "version": __version__,
        "crosstalk_policy": policy,
    }
    metadata.update(extra)
    return metadata


def _plain(value: Any) -> Any:
    """numpy scalars to Python scalars so both writers see the same values."""
    if isinstance(value, np.generic):
        return value.item()
    return value


def _shortest(value: float) -> str:
    # repr of np.float64 is "np.float64(...)" on numpy 2
    return repr(float(value))


def render_csv(table: ResultTable) -> str:
    header = [f"# {key}: {json.dumps(table.metadata[key], sort_keys=True)}\n"
              for key in sorted(table.metadata)]
    header.append(f"# units: {json.dumps(table.units, sort_keys=True)}\n")
    body = table.to_frame().to_csv(index=False, float_format=_shortest, na_rep="nan",
                                   lineterminator="\n")
    return "".join(header) + body


def render_json(table: ResultTable) -> str:
    return json.dumps(table.as_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_table(table: ResultTable, path: Optional[str] = None, fmt: str = "csv") -> str:
    """Write the table to `path` (stdout for None or '-'); returns the text."""
    if fmt == "csv":
        text = render_csv(table)
    elif fmt == "json":
        text = render_json(table)
    else:
        raise ConfigError(f"Unknown output format '{fmt}'", field="format")
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            with open(path, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
        except OSError as exc:
            raise ConfigError(f"Cannot write output {path}: {exc}", field="output.path") from exc
        logger.info(f"Wrote {len(table.rows)} rows to {path} ({fmt})")
    return text
