"""Price ingestion and log-return panels.

Prices arrive as a wide CSV (``date,<id1>,...,<idN>``); one column is
designated the hedge target and the rest become hedging instruments.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import (
    DegeneratePanel,
    DuplicateDate,
    FewerThanTwoRows,
    LengthMismatch,
    MalformedCsv,
    NonPositivePrice,
    UnknownTarget,
)


@dataclass(frozen=True)
class PricePanel:
    """Strictly positive prices, rows ascending by date."""

    dates: tuple
    columns: tuple
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim != 2 or prices.shape != (len(self.dates), len(self.columns)):
            raise MalformedCsv(
                f"price matrix shape {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.columns)} columns"
            )
        if len(self.dates) < 2:
            raise FewerThanTwoRows(f"need at least 2 price rows, got {len(self.dates)}")
        if len(set(self.dates)) != len(self.dates):
            raise DuplicateDate("duplicate dates in price panel")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise MalformedCsv("dates must be strictly increasing")
        bad = np.argwhere(~(prices > 0))
        if bad.size:
            i, j = bad[0]
            raise NonPositivePrice(self.dates[i], self.columns[j], prices[i, j])
        prices.flags.writeable = False
        object.__setattr__(self, "prices", prices)


@dataclass(frozen=True)
class ReturnPanel:
    """Aligned log returns: target vector ``y`` and instrument matrix ``x``."""

    dates: tuple
    target_name: str
    y: np.ndarray
    x: np.ndarray
    instrument_names: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim != 1 or x.ndim != 2:
            raise LengthMismatch("y must be 1-D and x 2-D")
        if not (len(y) == x.shape[0] == len(self.dates)):
            raise LengthMismatch(
                f"y ({len(y)}), x ({x.shape[0]}) and dates ({len(self.dates)}) "
                "must have equal length"
            )
        if x.shape[1] != len(self.instrument_names):
            raise LengthMismatch("x column count differs from instrument_names")
        if self.target_name in self.instrument_names:
            raise DegeneratePanel(f"target {self.target_name!r} also listed as an instrument")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise MalformedCsv("return panel contains non-finite entries")
        y.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "instrument_names", tuple(self.instrument_names))

    @classmethod
    def from_arrays(cls, x, y, instrument_names=None, target_name="y", dates=None):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if instrument_names is None:
            instrument_names = tuple(f"x{j}" for j in range(x.shape[1]))
        if dates is None:
            dates = tuple(range(x.shape[0]))
        return cls(tuple(dates), target_name, np.asarray(y, dtype=float), x,
                   tuple(instrument_names))

    @property
    def n_obs(self) -> int:
        return self.x.shape[0]

    @property
    def n_instruments(self) -> int:
        return self.x.shape[1]

    def take(self, rows) -> "ReturnPanel":
        """Return the panel restricted to (possibly repeated) row indices."""
        rows = np.asarray(rows, dtype=int)
        return ReturnPanel(
            tuple(self.dates[i] for i in rows), self.target_name,
            self.y[rows], self.x[rows], self.instrument_names, dict(self.meta),
        )

    def centered(self) -> "ReturnPanel":
        """Demeaned copy; the removed means are kept in ``meta``."""
        meta = dict(self.meta)
        meta["y_mean"] = float(self.y.mean())
        meta["x_mean"] = self.x.mean(axis=0).tolist()
        return ReturnPanel(self.dates, self.target_name, self.y - self.y.mean(),
                           self.x - self.x.mean(axis=0), self.instrument_names, meta)

    def joint(self) -> np.ndarray:
        """``[y | x]`` as one k x (N+1) matrix."""
        return np.column_stack([self.y, self.x])


def _parse_date(text, lineno):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        try:
            return dt.datetime.fromisoformat(text.strip())
        except ValueError:
            raise MalformedCsv(f"line {lineno}: not an ISO-8601 date: {text!r}") from None


def load_price_csv(path) -> PricePanel:
    """Read a wide price CSV into a :class:`PricePanel`.

    Rows are sorted ascending by date. Missing, non-numeric-finite or
    non-positive prices raise :class:`NonPositivePrice` naming the cell;
    nothing is imputed.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCsv(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0].lower() != "date":
            raise MalformedCsv(f"{path}: first header cell must be 'date'")
        columns = header[1:]
        if not columns:
            raise MalformedCsv(f"{path}: no instrument columns")
        if len(set(columns)) != len(columns) or any(not c for c in columns):
            raise MalformedCsv(f"{path}: instrument identifiers must be unique and non-empty")

        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise MalformedCsv(
                    f"{path}: line {lineno} has {len(record)} cells, expected {len(header)}"
                )
            label = record[0].strip()
            key = _parse_date(label, lineno)
            values = []
            for name, cell in zip(columns, record[1:]):
                cell = cell.strip()
                if not cell:
                    raise NonPositivePrice(label, name, None)
                try:
                    value = float(cell)
                except ValueError:
                    raise MalformedCsv(
                        f"{path}: line {lineno}, column {name!r}: not a number: {cell!r}"
                    ) from None
                if not (math.isfinite(value) and value > 0):
                    raise NonPositivePrice(label, name, value)
                values.append(value)
            rows.append((key, label, values))

    if len(rows) < 2:
        raise FewerThanTwoRows(f"{path}: need at least 2 price rows, got {len(rows)}")
    rows.sort(key=lambda r: r[0])
    keys = [r[0] for r in rows]
    for a, b in zip(keys, keys[1:]):
        if a == b:
            raise DuplicateDate(f"{path}: duplicate date {a.isoformat()}")
    return PricePanel(
        tuple(r[1] for r in rows), tuple(columns),
        np.array([r[2] for r in rows], dtype=float),
    )


def to_returns(panel: PricePanel, target: str) -> ReturnPanel:
    """Log returns with ``target`` split out as ``y``.

    Entry ``(t, j)`` is ``ln(p[t+1, j] / p[t, j])``; dates are those of the
    later price in each pair.
    """
    if target not in panel.columns:
        raise UnknownTarget(f"target {target!r} not among columns {list(panel.columns)}")
    if len(panel.columns) < 2:
        raise DegeneratePanel("only the target column is present; no instruments remain")
    logp = np.log(panel.prices)
    returns = np.diff(logp, axis=0)
    j = panel.columns.index(target)
    keep = [i for i in range(len(panel.columns)) if i != j]
    return ReturnPanel(
        tuple(panel.dates[1:]), target, returns[:, j], returns[:, keep],
        tuple(panel.columns[i] for i in keep),
    )


def write_price_csv(path, dates: Sequence, columns: Sequence[str], prices) -> None:
    prices = np.asarray(prices, dtype=float)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *columns])
        for d, row in zip(dates, prices):
            writer.writerow([d, *(repr(float(v)) for v in row)])


def load_cost_csv(path) -> dict:
    """Read a ``variable,cost`` table into ``{name: cost}``."""
    path = Path(path)
    costs = {}
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise MalformedCsv(f"{path}: empty cost file") from None
        if header != ["variable", "cost"]:
            raise MalformedCsv(f"{path}: header must be 'variable,cost', got {header}")
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != 2:
                raise MalformedCsv(f"{path}: line {lineno} must have 2 cells")
            name, value = record[0].strip(), record[1].strip()
            if name in costs:
                raise MalformedCsv(f"{path}: duplicate variable {name!r}")
            try:
                costs[name] = float(value)
            except ValueError:
                raise MalformedCsv(f"{path}: line {lineno}: bad cost {value!r}") from None
    return costs


def write_cost_csv(path, costs: dict) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variable", "cost"])
        for name, value in costs.items():
            writer.writerow([name, f"{value:.6f}"])
