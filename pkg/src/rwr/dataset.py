"""Columnar data container, CSV reading/writing and treatment-column checks."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterator, Literal, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DataError

TreatmentKind = Literal["binary", "continuous"]


class ColumnTable(Mapping[str, NDArray[np.float64]]):
    """Immutable, ordered collection of equal-length float columns.

    Values are stored as read-only ``float64`` arrays. Missing (NaN) or
    infinite values are rejected at construction.
    """

    __slots__ = ("_cols", "_n")

    def __init__(self, columns: Mapping[str, ArrayLike] | Sequence[tuple[str, ArrayLike]]):
        items = list(columns.items()) if isinstance(columns, Mapping) else list(columns)
        if not items:
            raise DataError("a table needs at least one column")
        cols: dict[str, NDArray[np.float64]] = {}
        n = None
        for name, values in items:
            if not isinstance(name, str) or not name:
                raise DataError(f"column names must be nonempty strings, got {name!r}")
            if name in cols:
                raise DataError(f"duplicate column name {name!r}")
            arr = np.array(values, dtype=float)
            if arr.ndim != 1:
                raise DataError(f"column {name!r} is not one-dimensional")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DataError(f"column {name!r} has {arr.shape[0]} rows, expected {n}")
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr))[0])
                raise DataError(f"missing or non-finite value in column {name!r}, row {bad + 1}")
            arr.flags.writeable = False
            cols[name] = arr
        self._cols = cols
        self._n = int(n)

    @classmethod
    def _trusted(cls, cols: dict[str, NDArray[np.float64]], n: int) -> ColumnTable:
        obj = cls.__new__(cls)
        obj._cols = cols
        obj._n = n
        return obj

    def __getitem__(self, name: str) -> NDArray[np.float64]:
        try:
            return self._cols[name]
        except KeyError:
            raise KeyError(f"no column named {name!r}; have {list(self._cols)}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._cols)

    def __len__(self) -> int:
        return len(self._cols)

    def __repr__(self) -> str:
        return f"ColumnTable(n_rows={self._n}, columns={list(self._cols)})"

    @property
    def n_rows(self) -> int:
        return self._n

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._cols)

    def require(self, names: Sequence[str]) -> None:
        missing = [c for c in names if c not in self._cols]
        if missing:
            raise DataError(f"missing column(s) {missing}; table has {list(self._cols)}")

    def with_columns(self, new: Mapping[str, ArrayLike]) -> ColumnTable:
        """A new table with ``new`` appended (names must not already exist)."""
        clash = [c for c in new if c in self._cols]
        if clash:
            raise DataError(f"column(s) already exist: {clash}")
        if not new:
            return self
        added = ColumnTable(new)
        if added.n_rows != self._n:
            raise DataError(f"new columns have {added.n_rows} rows, table has {self._n}")
        return ColumnTable._trusted({**self._cols, **added._cols}, self._n)

    def select(self, names: Sequence[str]) -> ColumnTable:
        self.require(names)
        return ColumnTable._trusted({c: self._cols[c] for c in names}, self._n)

    def take(self, rows: ArrayLike) -> ColumnTable:
        """Rows selected (with repetition) by integer index."""
        idx = np.asarray(rows, dtype=np.intp)
        cols = {}
        for name, arr in self._cols.items():
            sub = arr[idx]
            sub.flags.writeable = False
            cols[name] = sub
        return ColumnTable._trusted(cols, int(idx.shape[0]))

    def to_array(self, names: Sequence[str] | None = None) -> NDArray[np.float64]:
        names = self.names if names is None else names
        return np.column_stack([self[c] for c in names])

    def equals(self, other: ColumnTable) -> bool:
        """Exact equality of names, order and every value."""
        return self.names == other.names and all(
            np.array_equal(self[c], other[c]) for c in self.names
        )


def read_csv(path: str | os.PathLike, schema: Sequence[str] | None = None) -> ColumnTable:
    """Read a comma-delimited numeric CSV with one header row.

    Parameters
    ----------
    path
        File to read. ``\\n`` and ``\\r\\n`` line endings are both accepted.
    schema
        Expected column names. Missing or unexpected columns are an error;
        order is not enforced.

    Raises
    ------
    DataError
        Empty file, ragged row, non-numeric cell (reported by data row
        number, 1-based, and column name) or schema mismatch.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{os.fspath(path)}: empty file")
    header = [h.strip() for h in rows[0]]
    if schema is not None:
        missing = [c for c in schema if c not in header]
        extra = [c for c in header if c not in schema]
        if missing or extra:
            raise DataError(f"{os.fspath(path)}: schema mismatch (missing {missing}, extra {extra})")
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataError(f"row {i} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"non-numeric value {cell!r} at row {i}, column {header[j]!r}"
                ) from None
            if not np.isfinite(v):
                raise DataError(f"missing or non-finite value {cell!r} at row {i}, column {header[j]!r}")
            values[i - 1, j] = v
    if values.shape[0] == 0:
        raise DataError(f"{os.fspath(path)}: header but no data rows")
    return ColumnTable([(h, values[:, j]) for j, h in enumerate(header)])


def format_number(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def write_csv(table: ColumnTable, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        write_csv_stream(table, fh)


def write_csv_stream(table: ColumnTable, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(table.names)
    cols = [table[c] for c in table.names]
    for i in range(table.n_rows):
        writer.writerow([format_number(col[i]) for col in cols])


@dataclass(frozen=True)
class TreatmentDiagnostics:
    column: str
    kind: TreatmentKind
    ok: bool
    failed_check: str | None = None

    @property
    def message(self) -> str:
        if self.ok:
            return f"column {self.column!r} passes {self.kind} treatment checks"
        return f"column {self.column!r} fails {self.kind} treatment check: {self.failed_check}"


def validate_treatment_column(
    table: ColumnTable, name: str, kind: TreatmentKind
) -> TreatmentDiagnostics:
    """Check that a treatment column is usable as ``kind``.

    Binary treatments must be coded 0/1 with both values present (a crude
    positivity check); continuous ones must vary.
    """
    table.require([name])
    x = table[name]
    if kind == "binary":
        if not np.all((x == 0.0) | (x == 1.0)):
            return TreatmentDiagnostics(name, kind, False, "non-binary values")
        if not np.any(x == 1.0):
            return TreatmentDiagnostics(name, kind, False, "no treated units")
        if not np.any(x == 0.0):
            return TreatmentDiagnostics(name, kind, False, "no untreated units")
        return TreatmentDiagnostics(name, kind, True)
    if kind == "continuous":
        if x.min() == x.max():
            return TreatmentDiagnostics(name, kind, False, "zero variance")
        return TreatmentDiagnostics(name, kind, True)
    raise ValueError(f"unknown treatment kind {kind!r}")


def is_binary(x: ArrayLike) -> bool:
    x = np.asarray(x)
    return bool(np.all((x == 0.0) | (x == 1.0)))
