"""Raw series metadata, samples, and the sliding reference/test window pair.

Time indices are 1-based: the first row of a stream is sample ``t = 1``.
An epoch that starts at ``t_start`` uses rows ``t_start + 1 .. t_start + m``
as the reference window and the next ``m`` rows as the initial test window.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional, TextIO

import numpy as np


class LightError(Exception):
    """Base class for all errors raised by lightcd."""


class DimensionMismatchError(LightError, ValueError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"expected {expected} dimensions, got {actual}")
        self.expected = expected
        self.actual = actual


class ParseError(LightError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class BoundsSource(str, enum.Enum):
    CONFIGURED = "configured"
    INFERRED = "inferred"


@dataclass
class SeriesMeta:
    n: int
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    bounds_source: BoundsSource = BoundsSource.CONFIGURED

    def __post_init__(self):
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float)
        self.upper_bounds = np.asarray(self.upper_bounds, dtype=float)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.lower_bounds.shape != (self.n,) or self.upper_bounds.shape != (self.n,):
            raise DimensionMismatchError(self.n, len(self.lower_bounds))
        if np.any(self.lower_bounds > self.upper_bounds):
            raise ValueError("lower bound exceeds upper bound")


@dataclass(frozen=True)
class Sample:
    t: int
    values: np.ndarray


def infer_bounds(window: np.ndarray) -> SeriesMeta:
    """Column-wise min/max of ``window`` as inferred bounds."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[0] == 0 or window.shape[1] == 0:
        raise ValueError("cannot infer bounds from an empty window")
    return SeriesMeta(
        n=window.shape[1],
        lower_bounds=window.min(axis=0),
        upper_bounds=window.max(axis=0),
        bounds_source=BoundsSource.INFERRED,
    )


def minmax_normalize(values: np.ndarray, meta: SeriesMeta) -> np.ndarray:
    """Map each dimension to [0, 1] using ``meta`` bounds; constant dims map to 0."""
    span = meta.upper_bounds - meta.lower_bounds
    span = np.where(span > 0, span, 1.0)
    return (np.asarray(values, dtype=float) - meta.lower_bounds) / span


@dataclass
class WindowPair:
    """Fixed reference window plus a ring-buffered test window.

    ``test`` is stored physically as a ring; ``cursor`` points at the slot
    holding the oldest row, which is the next one to be overwritten.
    """

    ref: np.ndarray
    test: np.ndarray
    t_start: int = 0
    cursor: int = 0
    last_t: Optional[int] = None
    m: int = field(init=False)

    def __post_init__(self):
        self.ref = np.array(self.ref, dtype=float)
        self.test = np.array(self.test, dtype=float)
        if self.ref.ndim != 2 or self.ref.shape != self.test.shape:
            raise ValueError("ref and test must be m x n matrices of equal shape")
        self.m = self.ref.shape[0]
        if self.last_t is None:
            self.last_t = self.t_start + 2 * self.m

    @classmethod
    def from_rows(cls, rows: np.ndarray, t_start: int = 0) -> "WindowPair":
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] % 2:
            raise ValueError("need an even number (2m) of rows")
        m = rows.shape[0] // 2
        return cls(ref=rows[:m], test=rows[m:], t_start=t_start)

    @property
    def n(self) -> int:
        return self.ref.shape[1]

    def test_rows(self) -> np.ndarray:
        """Test window in logical (oldest first) order."""
        return np.roll(self.test, -self.cursor, axis=0)

    def push(self, sample: Sample) -> tuple[int, np.ndarray]:
        """Overwrite the oldest test row with ``sample``.

        Returns the ring slot that was written and a copy of the evicted row.
        """
        values = np.asarray(sample.values, dtype=float)
        if values.shape != (self.n,):
            raise DimensionMismatchError(self.n, values.size)
        if sample.t != self.last_t + 1:
            raise ValueError(f"expected t={self.last_t + 1}, got t={sample.t}")
        slot = self.cursor
        evicted = self.test[slot].copy()
        self.test[slot] = values
        self.cursor = (slot + 1) % self.m
        self.last_t = sample.t
        return slot, evicted


def iter_csv(handle: TextIO, n: Optional[int] = None) -> Iterator[np.ndarray]:
    """Yield one float row per CSV line, streaming.

    A first line that does not parse as numbers is treated as a header.
    Every row must have the same length (``n`` if given, else the first
    row's length).
    """
    reader = csv.reader(handle)
    for lineno, fields in enumerate(reader, start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        try:
            row = np.array([float(f) for f in fields])
        except ValueError:
            if lineno == 1:
                continue
            raise ParseError(lineno, "non-numeric field") from None
        if n is None:
            n = row.size
        elif row.size != n:
            raise ParseError(lineno, f"expected {n} fields, got {row.size}")
        if not np.all(np.isfinite(row)):
            raise ParseError(lineno, "non-finite value")
        yield row
