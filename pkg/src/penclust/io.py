"""CSV ingestion, the microarray preprocessing pipeline and grouping files."""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass

import numpy as np

from penclust.errors import ConfigError, InvalidValue, NonNumericCell, ParseError, RaggedRows
from penclust.model import Grouping


class Orientation(str, enum.Enum):
    ROWS = "rows"  # one observation per row
    COLUMNS = "columns"  # one observation per column (genes x samples)


@dataclass(frozen=True)
class Table:
    """Observations x variables matrix plus any names found in the file."""

    values: np.ndarray
    variable_names: tuple[str, ...] | None = None
    observation_names: tuple[str, ...] | None = None


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def ingest_csv(path, orientation: Orientation | str = Orientation.ROWS) -> Table:
    """Read a numeric CSV with an optional header row and/or name column.

    The first row is a header when any of its cells (past an optional name
    column) is non-numeric; the first column holds names when any body cell
    in it is non-numeric.  With ``Orientation.COLUMNS`` the matrix is
    transposed so the result is always observations x variables.

    Raises
    ------
    RaggedRows, NonNumericCell, ParseError
        With 1-based line and column numbers.
    """
    orientation = Orientation(orientation)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh)]
    except csv.Error as exc:
        raise ParseError(str(exc)) from exc
    lines = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not lines:
        raise ParseError("file has no data rows")
    width = len(lines[0][1])
    for lineno, r in lines:
        if len(r) != width:
            raise RaggedRows(f"expected {width} fields, found {len(r)}", line=lineno)

    body = lines
    col_names = None
    first = [c.strip() for c in lines[0][1]]
    if any(not _is_number(c) for c in first[1:]) or (width == 1 and not _is_number(first[0])):
        col_names = first
        body = lines[1:]
    if not body:
        raise ParseError("file has a header but no data rows")
    has_row_names = width > 1 and any(not _is_number(r[0].strip()) for _, r in body)
    start = 1 if has_row_names else 0
    values = np.empty((len(body), width - start))
    for i, (lineno, r) in enumerate(body):
        for j in range(start, width):
            cell = r[j].strip()
            try:
                values[i, j - start] = float(cell)
            except ValueError:
                raise NonNumericCell(f"non-numeric cell {cell!r}", line=lineno, column=j + 1) from None
    row_names = tuple(r[0].strip() for _, r in body) if has_row_names else None
    var_names = tuple(col_names[start:]) if col_names is not None else None
    if orientation is Orientation.COLUMNS:
        return Table(values.T.copy(), row_names, var_names)
    return Table(values, var_names, row_names)


@dataclass(frozen=True)
class Preprocessed:
    values: np.ndarray
    kept: np.ndarray  # surviving original variable indices, ascending
    short: bool = False  # fewer than top_k variables survived the filter


def preprocess_microarray(
    raw, low: float = 1.0, high: float = 16000.0, ratio: float = 5.0, span: float = 500.0, top_k: int = 2000
) -> Preprocessed:
    """Clamp, filter flat variables, then keep the ``top_k`` most variable ones.

    1. every value is clamped to ``[low, high]``;
    2. a variable is dropped when both ``max/min <= ratio`` and
       ``max - min <= span`` hold on the clamped values;
    3. the ``top_k`` variables with the largest variance (denominator n)
       remain, ties going to the lower original index.

    When fewer than ``top_k`` variables survive step 2 all of them are kept,
    ``short`` is set and a warning is issued.
    """
    x = np.array(raw, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidValue("expected a 2-D matrix")
    if not np.all(np.isfinite(x)):
        raise InvalidValue("data contain NaN or infinite values")
    if not 0 < low <= high:
        raise ConfigError("need 0 < low <= high")
    if top_k < 1:
        raise ConfigError("top_k must be positive")
    x = np.clip(x, low, high)
    hi, lo = x.max(axis=0), x.min(axis=0)
    flat = (hi / lo <= ratio) & (hi - lo <= span)
    survivors = np.flatnonzero(~flat)
    short = survivors.size < top_k
    if short:
        warnings.warn(f"only {survivors.size} variables pass the filter; keeping all of them", stacklevel=2)
        kept = survivors
    else:
        var = x[:, survivors].var(axis=0)
        # stable sort on -var keeps lower indices first among ties
        pick = np.argsort(-var, kind="stable")[:top_k]
        kept = np.sort(survivors[pick])
    return Preprocessed(x[:, kept], kept, short)


def read_grouping(path, variable_names=None, K: int | None = None, *, group_means=True, group_variances=False) -> Grouping:
    """Two-column CSV ``variable,group``; variables by name or 1-based index.

    Group labels may be arbitrary strings or numbers; they are renumbered
    ``1..M`` in order of first appearance.  Every variable must be listed
    exactly once.
    """
    names = list(variable_names) if variable_names is not None else None
    K = len(names) if names is not None else K
    if K is None:
        raise ConfigError("need variable names or K to read a grouping")
    index = {n: i for i, n in enumerate(names)} if names is not None else {}
    ids = np.zeros(K, dtype=np.int64)
    labels: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != 2:
                raise RaggedRows(f"expected 2 fields, found {len(row)}", line=lineno)
            var, grp = row[0].strip(), row[1].strip()
            if lineno == 1 and var.lower() in ("variable", "var", "name") and var not in index:
                continue
            if var in index:
                k = index[var]
            else:
                try:
                    k = int(var) - 1
                except ValueError:
                    raise ParseError(f"unknown variable {var!r}", line=lineno, column=1) from None
                if not 0 <= k < K:
                    raise ParseError(f"variable index {var} out of range 1..{K}", line=lineno, column=1)
            if ids[k]:
                raise ParseError(f"variable {var!r} listed twice", line=lineno, column=1)
            ids[k] = labels.setdefault(grp, len(labels) + 1)
    if np.any(ids == 0):
        raise ConfigError(f"{int(np.count_nonzero(ids == 0))} variables have no group")
    return Grouping(ids, group_means, group_variances)


def fmt17(x: float) -> str:
    return "%.17g" % x


def write_matrix_csv(path, values, header=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in np.asarray(values):
            w.writerow([fmt17(v) for v in row])
