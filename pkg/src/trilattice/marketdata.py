"""CSV ingestion and serialization: price histories, option chains, surfaces.

All files are UTF-8 with '.' decimal separators; malformed rows are rejected
with their row number rather than coerced. Surface files round-trip
bit-exactly through ``write_surface``/``read_surface``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .calibrate import ReturnSeries
from .errors import DuplicateQuote, EmptyChain, InsufficientData, SchemaError
from .implied import Quote, QuoteSet, SurfaceGrid
from .lattice import Convention

__all__ = [
    "PriceHistory",
    "load_prices",
    "to_returns",
    "load_chain",
    "write_surface",
    "read_surface",
]

_PRICES_HEADER = ["date", "adj_close"]
_CHAIN_HEADER = ["expiry_steps", "strike", "price"]
_SURFACE_HEADER = ["T", "M", "value"]


@dataclass(frozen=True)
class PriceHistory:
    """Daily adjusted closes with strictly increasing dates."""

    dates: tuple[date, ...]
    adj_close: np.ndarray

    def __post_init__(self) -> None:
        prices = np.asarray(self.adj_close, dtype=float)
        if len(self.dates) != prices.size:
            raise ValueError("dates and prices must have equal length")
        if prices.size and (not np.all(np.isfinite(prices)) or np.any(prices <= 0.0)):
            raise ValueError("prices must be positive and finite")
        for a, b in zip(self.dates, self.dates[1:]):
            if a >= b:
                raise ValueError(f"dates must be strictly increasing: {a} >= {b}")
        object.__setattr__(self, "adj_close", prices)

    def __len__(self) -> int:
        return len(self.dates)


def _parse_float(field: str, what: str, row: int) -> float:
    text = field.strip()
    if "," in text:
        raise SchemaError(f"{what} {text!r} uses a non-'.' decimal separator", row=row)
    try:
        value = float(text)
    except ValueError as exc:
        raise SchemaError(f"{what} {text!r} is not numeric", row=row) from exc
    if not math.isfinite(value):
        raise SchemaError(f"{what} {text!r} is not finite", row=row)
    return value


def _read_rows(path: str | Path, expected_header: list[str]) -> list[list[str]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise SchemaError(f"{path} is empty; expected header {expected_header}")
    header = [c.strip().lower() for c in rows[0]]
    if header != expected_header:
        raise SchemaError(
            f"{path} header {header} does not match expected {expected_header}"
        )
    return rows[1:]


def load_prices(path: str | Path) -> PriceHistory:
    """Load and validate a price-history CSV (header: date, adj_close)."""
    body = _read_rows(path, _PRICES_HEADER)
    if not body:
        raise SchemaError(f"{path} contains no data rows")
    dates: list[date] = []
    prices: list[float] = []
    for i, row in enumerate(body, start=2):  # header is row 1
        if len(row) != 2:
            raise SchemaError(f"expected 2 fields, got {len(row)}", row=i)
        try:
            dates.append(date.fromisoformat(row[0].strip()))
        except ValueError as exc:
            raise SchemaError(f"date {row[0]!r} is not ISO formatted", row=i) from exc
        value = _parse_float(row[1], "price", i)
        if value <= 0.0:
            raise SchemaError(f"price {value} is not positive", row=i)
        prices.append(value)
    for i, (a, b) in enumerate(zip(dates, dates[1:]), start=3):
        if a >= b:
            raise SchemaError(f"dates not strictly increasing ({a} >= {b})", row=i)
    return PriceHistory(tuple(dates), np.array(prices))


def to_returns(h: PriceHistory, convention: Convention, dt: float = 1.0) -> ReturnSeries:
    """Per-step returns of a price history in the requested convention."""
    if len(h) < 2:
        raise InsufficientData("need at least two prices to form returns")
    ratios = h.adj_close[1:] / h.adj_close[:-1]
    if convention is Convention.ARITHMETIC:
        values = ratios - 1.0
    else:
        values = np.log(ratios)
    return ReturnSeries(values, convention, dt)


def load_chain(path: str | Path, s0: float) -> QuoteSet:
    """Load an option-chain CSV (header: expiry_steps, strike, price)."""
    body = _read_rows(path, _CHAIN_HEADER)
    if not body:
        raise EmptyChain(f"{path} contains no quotes")
    quotes: list[Quote] = []
    seen: set[tuple[int, float]] = set()
    for i, row in enumerate(body, start=2):
        if len(row) != 3:
            raise SchemaError(f"expected 3 fields, got {len(row)}", row=i)
        steps_f = _parse_float(row[0], "expiry_steps", i)
        steps = int(steps_f)
        if steps != steps_f or steps < 1:
            raise SchemaError(f"expiry_steps {row[0]!r} is not a positive integer", row=i)
        strike = _parse_float(row[1], "strike", i)
        price = _parse_float(row[2], "price", i)
        if strike <= 0.0:
            raise SchemaError(f"strike {strike} is not positive", row=i)
        if price <= 0.0:
            raise SchemaError(f"price {price} is not positive", row=i)
        key = (steps, strike)
        if key in seen:
            raise DuplicateQuote(f"row {i}: duplicate quote (T={steps}, K={strike})")
        seen.add(key)
        quotes.append(Quote(steps, strike, price))
    return QuoteSet(S0=s0, quotes=tuple(quotes))


def _matrix_companion(path: Path) -> Path:
    return path.with_name(path.stem + "_matrix" + path.suffix)


def write_surface(grid: SurfaceGrid, path: str | Path) -> Path:
    """Write a surface as long-format rows plus a dense-matrix companion.

    Long format: a bandwidth comment line, the header T,M,value, then one row
    per grid node in maturity-major order. Values are written with repr so a
    reread reproduces the grid bit-exactly.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# bandwidth_T={grid.bandwidth[0]!r} bandwidth_M={grid.bandwidth[1]!r}\n")
        writer = csv.writer(fh)
        writer.writerow(_SURFACE_HEADER)
        for i, t in enumerate(grid.t_axis):
            for j, m in enumerate(grid.m_axis):
                writer.writerow([repr(float(t)), repr(float(m)),
                                 repr(float(grid.values[i, j]))])
    companion = _matrix_companion(path)
    with companion.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["T\\M"] + [repr(float(m)) for m in grid.m_axis])
        for i, t in enumerate(grid.t_axis):
            writer.writerow([repr(float(t))]
                            + [repr(float(v)) for v in grid.values[i]])
    return path


def read_surface(path: str | Path) -> SurfaceGrid:
    """Reread a long-format surface file written by ``write_surface``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# bandwidth_T="):
            raise SchemaError(f"{path} is missing the bandwidth comment line")
        try:
            parts = dict(p.split("=") for p in first[2:].split())
            bandwidth = (float(parts["bandwidth_T"]), float(parts["bandwidth_M"]))
        except (ValueError, KeyError) as exc:
            raise SchemaError(f"{path} has a malformed bandwidth line") from exc
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows or [c.strip() for c in rows[0]] != _SURFACE_HEADER:
        raise SchemaError(f"{path} header does not match {_SURFACE_HEADER}")
    t_vals: list[float] = []
    m_vals: list[float] = []
    entries: list[float] = []
    for i, row in enumerate(rows[1:], start=3):
        if len(row) != 3:
            raise SchemaError(f"expected 3 fields, got {len(row)}", row=i)
        t = _parse_float(row[0], "T", i)
        m = _parse_float(row[1], "M", i)
        if not t_vals or t != t_vals[-1]:
            t_vals.append(t)
        if len(t_vals) == 1:
            m_vals.append(m)
        entries.append(_parse_float(row[2], "value", i))
    n_t, n_m = len(t_vals), len(m_vals)
    if n_t * n_m != len(entries):
        raise SchemaError(f"{path} does not contain a complete {n_t}x{n_m} grid")
    values = np.array(entries).reshape(n_t, n_m)
    return SurfaceGrid(np.array(t_vals), np.array(m_vals), values, bandwidth)
