"""Run-off triangle data model and ingestion.

A triangle holds incremental claim amounts indexed by accident year ``i``
(rows, 1-based) and development year ``j`` (columns, 1-based). The observable
region is the upper wedge ``j <= n - i + 1``; everything below it is the
future region to be predicted. Cells carry a mask tag: ``observed`` cells
enter the likelihood, ``holdout`` cells are upper-wedge cells reserved for
validation, ``future`` cells have no amount.

Triangles are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

__all__ = [
    "OBSERVED",
    "HOLDOUT",
    "FUTURE",
    "Triangle",
    "LogTriangle",
    "TriangleError",
    "parse_triangle",
    "serialize_triangle",
    "log_transform",
    "holdout_split",
    "cumulative",
    "calendar_index",
    "summary_stats",
    "load_chan2008",
]

# mask codes
OBSERVED = 0
HOLDOUT = 1
FUTURE = 2

_MASK_NAMES = {OBSERVED: "observed", HOLDOUT: "holdout", FUTURE: "future"}

LONG_HEADER = "accident_year,dev_year,amount"


class TriangleError(ValueError):
    """Raised when triangle data violates the format or the cell contract."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Triangle:
    """Incremental run-off triangle on the currency scale.

    Attributes
    ----------
    n : int
        Number of accident years (the triangle is n x n).
    amounts : (n, n) ndarray
        Incremental amounts, NaN on future cells. Index [i-1, j-1].
    mask : (n, n) ndarray of uint8
        Cell tags (OBSERVED / HOLDOUT / FUTURE).
    origin_year : int
        Calendar label of accident year i=1 (presentation metadata only).
    """

    n: int
    amounts: np.ndarray
    mask: np.ndarray
    origin_year: int = 1

    def __post_init__(self):
        _freeze(self.amounts)
        _freeze(self.mask)

    def cells(self, tags=(OBSERVED, HOLDOUT)) -> Iterator[tuple[int, int, float]]:
        """Yield (i, j, amount) over cells whose mask is in ``tags``."""
        for i in range(1, self.n + 1):
            for j in range(1, self.n + 1):
                if self.mask[i - 1, j - 1] in tags:
                    yield i, j, float(self.amounts[i - 1, j - 1])

    def mask_name(self, i: int, j: int) -> str:
        return _MASK_NAMES[int(self.mask[i - 1, j - 1])]

    def validate(self) -> None:
        """Check the cell-set invariants; raises TriangleError on violation."""
        n = self.n
        upper = 0
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                m = self.mask[i - 1, j - 1]
                a = self.amounts[i - 1, j - 1]
                if j <= n - i + 1:
                    upper += 1
                    if m == FUTURE:
                        raise TriangleError(f"upper-triangle cell ({i},{j}) tagged future")
                    if not np.isfinite(a):
                        raise TriangleError(f"cell ({i},{j}) has non-finite amount")
                    if a < 0:
                        raise TriangleError(f"cell ({i},{j}) has negative amount {a}")
                else:
                    if m != FUTURE:
                        raise TriangleError(f"lower-triangle cell ({i},{j}) not tagged future")
                    if not np.isnan(a):
                        raise TriangleError(f"future cell ({i},{j}) carries an amount")
        if upper != n * (n + 1) // 2:
            raise TriangleError("upper-triangle cell count mismatch")


@dataclass(frozen=True)
class LogTriangle:
    """Log-scale view of a triangle, with the zero-handling record attached.

    ``values`` is NaN on future cells and on cells removed by the drop
    policy; ``zero_policy`` records exactly what happened to zero amounts.
    """

    n: int
    values: np.ndarray
    mask: np.ndarray
    origin_year: int = 1
    zero_policy: dict = field(default_factory=lambda: {"policy": "drop", "cells": []})

    def __post_init__(self):
        _freeze(self.values)
        _freeze(self.mask)

    def cells(self, tags=(OBSERVED, HOLDOUT)) -> Iterator[tuple[int, int, float]]:
        """Yield (i, j, z) over non-dropped cells whose mask is in ``tags``."""
        for i in range(1, self.n + 1):
            for j in range(1, self.n + 1):
                if self.mask[i - 1, j - 1] in tags and np.isfinite(self.values[i - 1, j - 1]):
                    yield i, j, float(self.values[i - 1, j - 1])

    def observed_values(self) -> np.ndarray:
        """Log values of likelihood (observed, non-dropped) cells."""
        return np.array([z for _, _, z in self.cells(tags=(OBSERVED,))])


def calendar_index(i: int, j: int, n: int | None = None) -> int:
    """Calendar-year index t = i + j - 1 of cell (i, j)."""
    if i < 1 or j < 1 or (n is not None and (i > n or j > n)):
        raise TriangleError(f"cell index ({i},{j}) out of range")
    return i + j - 1


# ---------------------------------------------------------------------------
# parsing / serialization
# ---------------------------------------------------------------------------


def _read_lines(source) -> list[str]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = str(source)
    return text.splitlines()


def _build(cells: dict[tuple[int, int], float], labels: list[int]) -> Triangle:
    n = len(labels)
    if len(cells) != n * (n + 1) // 2:
        missing = [
            (i, j)
            for i in range(1, n + 1)
            for j in range(1, n - i + 2)
            if (i, j) not in cells
        ]
        raise TriangleError(f"incomplete upper triangle: missing cells {missing[:8]}")
    amounts = np.full((n, n), np.nan)
    mask = np.full((n, n), FUTURE, dtype=np.uint8)
    for (i, j), a in cells.items():
        amounts[i - 1, j - 1] = a
        mask[i - 1, j - 1] = OBSERVED
    tri = Triangle(n=n, amounts=amounts, mask=mask, origin_year=labels[0])
    tri.validate()
    return tri


def parse_triangle(source: Union[str, io.TextIOBase], format: str = "long-csv") -> Triangle:
    """Parse a triangle from CSV text (a string, or a readable file object).

    The long format has header ``accident_year,dev_year,amount`` with one row
    per upper-triangle cell. The wide format has one row per accident year:
    first column the accident-year label, then dev columns 1..n with trailing
    blanks for future cells. All upper-triangle cells must be present and are
    tagged observed.
    """
    lines = [ln for ln in _read_lines(source) if ln.strip()]
    if not lines:
        raise TriangleError("empty input")
    if format == "long-csv":
        return _parse_long(lines)
    if format == "wide-csv":
        return _parse_wide(lines)
    raise TriangleError(f"unknown triangle format {format!r}")


def _parse_long(lines: list[str]) -> Triangle:
    header = lines[0].strip().lower().replace(" ", "")
    if header != LONG_HEADER:
        raise TriangleError(f"expected header {LONG_HEADER!r}, got {lines[0]!r}")
    raw = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != 3:
            raise TriangleError(f"row {ln_no}: expected 3 fields, got {len(parts)}")
        try:
            year = int(parts[0])
            dev = int(parts[1])
            amount = float(parts[2])
        except ValueError as exc:
            raise TriangleError(f"row {ln_no}: {exc}") from None
        if amount < 0:
            raise TriangleError(f"row {ln_no}: negative amount {amount}")
        if dev < 1:
            raise TriangleError(f"row {ln_no}: dev_year must be >= 1")
        raw.append((ln_no, year, dev, amount))

    labels = sorted({year for _, year, _, _ in raw})
    index = {y: k + 1 for k, y in enumerate(labels)}
    n = len(labels)
    cells: dict[tuple[int, int], float] = {}
    seen_row: dict[tuple[int, int], int] = {}
    for ln_no, year, dev, amount in raw:
        i = index[year]
        key = (i, dev)
        if key in cells:
            raise TriangleError(
                f"duplicate cell ({i},{dev}) at rows {seen_row[key]} and {ln_no}"
            )
        if dev > n - i + 1:
            raise TriangleError(
                f"row {ln_no}: cell ({i},{dev}) lies below the upper triangle (n={n})"
            )
        cells[key] = amount
        seen_row[key] = ln_no
    return _build(cells, labels)


def _parse_wide(lines: list[str]) -> Triangle:
    body = lines[1:] if not _looks_numeric(lines[0].split(",")[0]) else lines
    n = len(body)
    cells: dict[tuple[int, int], float] = {}
    labels = []
    for ln_no, ln in enumerate(body, start=1):
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) - 1 != n:
            raise TriangleError(
                f"wide row {ln_no}: expected {n} dev columns, got {len(parts) - 1}"
            )
        try:
            labels.append(int(parts[0]))
        except ValueError:
            raise TriangleError(f"wide row {ln_no}: bad accident-year label {parts[0]!r}") from None
        i = ln_no
        for j, p in enumerate(parts[1:], start=1):
            if p == "":
                if j <= n - i + 1:
                    raise TriangleError(f"wide row {ln_no}: blank upper-triangle cell ({i},{j})")
                continue
            if j > n - i + 1:
                raise TriangleError(f"wide row {ln_no}: amount in future cell ({i},{j})")
            amount = float(p)
            if amount < 0:
                raise TriangleError(f"wide row {ln_no}: negative amount {amount}")
            cells[(i, j)] = amount
    if labels != sorted(labels):
        raise TriangleError("wide rows must be ordered by accident year")
    return _build(cells, labels)


def _looks_numeric(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _fmt(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() else repr(float(x))


def serialize_triangle(tri: Triangle, format: str = "long-csv") -> str:
    """Render the upper triangle back to CSV; inverse of :func:`parse_triangle`."""
    if format == "long-csv":
        out = [LONG_HEADER]
        for i, j, a in tri.cells(tags=(OBSERVED, HOLDOUT)):
            out.append(f"{tri.origin_year + i - 1},{j},{_fmt(a)}")
        return "\n".join(out) + "\n"
    if format == "wide-csv":
        out = []
        for i in range(1, tri.n + 1):
            row = [str(tri.origin_year + i - 1)]
            for j in range(1, tri.n + 1):
                if j <= tri.n - i + 1:
                    row.append(_fmt(tri.amounts[i - 1, j - 1]))
                else:
                    row.append("")
            out.append(",".join(row))
        return "\n".join(out) + "\n"
    raise TriangleError(f"unknown triangle format {format!r}")


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def log_transform(tri: Triangle, zero_policy="drop") -> LogTriangle:
    """Log-transform amounts, handling zero cells per the chosen policy.

    ``zero_policy`` is either ``"drop"`` (zero cells are removed from the
    likelihood and listed in the record) or ``("offset", c)`` (zero cells are
    transformed as log(y + c); positive cells are untouched either way).
    """
    if zero_policy == "drop":
        policy, offset = "drop", None
    elif (
        isinstance(zero_policy, tuple)
        and len(zero_policy) == 2
        and zero_policy[0] == "offset"
    ):
        policy, offset = "offset", float(zero_policy[1])
        if offset <= 0:
            raise TriangleError("offset must be positive")
    else:
        raise TriangleError(f"unknown zero_policy {zero_policy!r}")

    values = np.full((tri.n, tri.n), np.nan)
    touched = []
    for i, j, a in tri.cells(tags=(OBSERVED, HOLDOUT)):
        if a < 0:
            raise TriangleError(f"negative amount at ({i},{j})")
        if a > 0:
            values[i - 1, j - 1] = np.log(a)
        elif policy == "offset":
            values[i - 1, j - 1] = np.log(a + offset)
            touched.append((i, j))
        else:
            touched.append((i, j))
    record = {"policy": policy, "cells": touched}
    if offset is not None:
        record["offset"] = offset
    return LogTriangle(
        n=tri.n,
        values=values,
        mask=tri.mask.copy(),
        origin_year=tri.origin_year,
        zero_policy=record,
    )


def holdout_split(tri, k: int):
    """Re-mask the last ``k`` calendar diagonals of the upper triangle as holdout.

    The mask is re-derived from scratch: an upper-triangle cell is holdout iff
    i + j - 1 > n - k, observed otherwise; future cells are untouched. Works on
    both Triangle and LogTriangle. k = 0 restores the all-observed mask.
    """
    n = tri.n
    if not 0 <= k < n:
        raise TriangleError(f"holdout diagonals k={k} must satisfy 0 <= k < n={n}")
    mask = tri.mask.copy()
    for i in range(1, n + 1):
        for j in range(1, n - i + 2):
            mask[i - 1, j - 1] = HOLDOUT if i + j - 1 > n - k else OBSERVED
    if isinstance(tri, LogTriangle):
        return LogTriangle(
            n=n,
            values=tri.values.copy(),
            mask=mask,
            origin_year=tri.origin_year,
            zero_policy=tri.zero_policy,
        )
    return Triangle(n=n, amounts=tri.amounts.copy(), mask=mask, origin_year=tri.origin_year)


def cumulative(tri: Triangle) -> Triangle:
    """Row-wise running sums C_ij = sum_{k<=j} y_ik over upper-triangle cells."""
    amounts = np.full((tri.n, tri.n), np.nan)
    for i in range(1, tri.n + 1):
        run = 0.0
        for j in range(1, tri.n - i + 2):
            run += tri.amounts[i - 1, j - 1]
            amounts[i - 1, j - 1] = run
    return Triangle(n=tri.n, amounts=amounts, mask=tri.mask.copy(), origin_year=tri.origin_year)


# ---------------------------------------------------------------------------
# summaries and bundled data
# ---------------------------------------------------------------------------


def summary_stats(values: np.ndarray) -> dict:
    """Mean, median, sd (ddof=1), skewness and excess kurtosis of a sample.

    Skewness is m3 / m2^1.5 and excess kurtosis m4 / m2^2 - 3 with central
    sample moments (no bias correction), the convention that reproduces the
    published case-study log-claim summaries.
    """
    z = np.asarray(values, dtype=float)
    if z.size < 2:
        raise TriangleError("need at least two values for summary statistics")
    c = z - z.mean()
    m2 = np.mean(c**2)
    return {
        "mean": float(z.mean()),
        "median": float(np.median(z)),
        "sd": float(z.std(ddof=1)),
        "skewness": float(np.mean(c**3) / m2**1.5),
        "excess_kurtosis": float(np.mean(c**4) / m2**2 - 3.0),
    }


def load_chan2008() -> Triangle:
    """Load the bundled 18-year case-study triangle (includes its zero cells)."""
    from importlib.resources import files

    text = files("skewreserve.data").joinpath("chan2008.csv").read_text()
    return parse_triangle(text, format="long-csv")
