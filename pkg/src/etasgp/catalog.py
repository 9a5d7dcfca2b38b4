"""Marked spatio-temporal catalogs, observation windows and CSV I/O.

A catalog is stored column-wise (times, locations, magnitudes) in numpy
arrays. Events are kept sorted by time with ties in insertion order.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import CatalogParseError, DomainError, EmptyCatalogError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "x", "y", "m")


class Event(NamedTuple):
    t: float
    x: tuple[float, float]
    m: float


@dataclass(frozen=True)
class DomainWindow:
    """Rectangular space-time window plus magnitude of completeness."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    t_range: tuple[float, float]
    m0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x_range", tuple(float(v) for v in self.x_range))
        object.__setattr__(self, "y_range", tuple(float(v) for v in self.y_range))
        object.__setattr__(self, "t_range", tuple(float(v) for v in self.t_range))
        object.__setattr__(self, "m0", float(self.m0))
        for name in ("x_range", "y_range", "t_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
                raise DomainError(f"{name} must satisfy min < max, got {(lo, hi)}")

    @property
    def area(self) -> float:
        return (self.x_range[1] - self.x_range[0]) * (self.y_range[1] - self.y_range[0])

    @property
    def duration(self) -> float:
        return self.t_range[1] - self.t_range[0]

    def contains_xy(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return ((xy[:, 0] >= self.x_range[0]) & (xy[:, 0] <= self.x_range[1])
                & (xy[:, 1] >= self.y_range[0]) & (xy[:, 1] <= self.y_range[1]))

    def contains_t(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t >= self.t_range[0]) & (t <= self.t_range[1])

    def uniform_xy(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` locations uniformly on the spatial window."""
        lo = np.array([self.x_range[0], self.y_range[0]])
        hi = np.array([self.x_range[1], self.y_range[1]])
        return lo + (hi - lo) * rng.random((n, 2))

    def with_t_range(self, t_range) -> "DomainWindow":
        return replace(self, t_range=tuple(t_range))

    def to_dict(self) -> dict:
        return {"x_range": list(self.x_range), "y_range": list(self.y_range),
                "t_range": list(self.t_range), "m0": self.m0}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainWindow":
        return cls(tuple(d["x_range"]), tuple(d["y_range"]), tuple(d["t_range"]),
                   float(d.get("m0", 0.0)))


@dataclass(frozen=True, eq=False)
class Catalog:
    """Time-ordered marked point pattern inside a :class:`DomainWindow`.

    ``z`` optionally holds branching labels for simulated catalogs:
    0 marks a background event, ``j > 0`` the 1-based index of the parent.
    """

    t: np.ndarray
    xy: np.ndarray
    m: np.ndarray
    window: DomainWindow
    z: np.ndarray | None = None
    n_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        xy = np.array(self.xy, dtype=float).reshape(-1, 2)
        m = np.array(self.m, dtype=float).reshape(-1)
        if not (len(t) == len(xy) == len(m)):
            raise ValueError("t, xy and m must have equal length")
        if len(t) and np.any(np.diff(t) < 0):
            raise ValueError("events must be sorted by time; use Catalog.from_unsorted")
        w = self.window
        if len(t):
            if not np.all(w.contains_t(t)):
                raise DomainError("event time outside the window")
            if not np.all(w.contains_xy(xy)):
                raise DomainError("event location outside the window")
            if np.any(m < w.m0):
                raise DomainError("event magnitude below m0")
        for arr in (t, xy, m):
            arr.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "m", m)
        if self.z is not None:
            z = np.array(self.z, dtype=np.int64).reshape(-1)
            if len(z) != len(t):
                raise ValueError("z must align with events")
            z.setflags(write=False)
            object.__setattr__(self, "z", z)

    @classmethod
    def from_unsorted(cls, t, xy, m, window: DomainWindow, **kw) -> "Catalog":
        t = np.asarray(t, dtype=float).reshape(-1)
        order = np.argsort(t, kind="stable")
        return cls(t[order], np.asarray(xy, dtype=float).reshape(-1, 2)[order],
                   np.asarray(m, dtype=float).reshape(-1)[order], window, **kw)

    @classmethod
    def empty(cls, window: DomainWindow) -> "Catalog":
        return cls(np.empty(0), np.empty((0, 2)), np.empty(0), window)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(float(self.t[i]), (float(self.xy[i, 0]), float(self.xy[i, 1])),
                     float(self.m[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def events(self) -> list[Event]:
        return list(self)

    @property
    def m0(self) -> float:
        return self.window.m0

    def subset(self, mask, window: DomainWindow | None = None) -> "Catalog":
        """Catalog of the events selected by a boolean mask (labels dropped)."""
        mask = np.asarray(mask, dtype=bool)
        return Catalog(self.t[mask], self.xy[mask], self.m[mask], window or self.window)


def load_catalog(path, window: DomainWindow) -> Catalog:
    """Read a ``t,x,y,m`` CSV file into a :class:`Catalog`.

    Events outside ``window`` or below its ``m0`` are dropped; the number
    of dropped rows is stored in ``Catalog.n_dropped`` and logged.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise EmptyCatalogError(f"{path} is empty")
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    if tuple(header[:4]) != CSV_COLUMNS:
        raise CatalogParseError(f"expected header starting with t,x,y,m, got {header}",
                                header_line)
    if len(header) > 4:
        warnings.warn(f"{path}: ignoring extra columns {header[4:]}", stacklevel=2)
    values = np.empty((len(rows) - 1, 4))
    for k, (line, row) in enumerate(rows[1:]):
        if len(row) < 4:
            raise CatalogParseError(f"expected 4 fields, got {len(row)}", line)
        try:
            values[k] = [float(v) for v in row[:4]]
        except ValueError as exc:
            raise CatalogParseError(f"non-numeric field ({exc})", line) from None
        if not np.all(np.isfinite(values[k])):
            raise CatalogParseError("non-finite field", line)
    t, xy, m = values[:, 0], values[:, 1:3], values[:, 3]
    keep = window.contains_t(t) & window.contains_xy(xy) & (m >= window.m0)
    n_dropped = int(np.count_nonzero(~keep))
    if n_dropped:
        logger.info("%s: dropped %d of %d events outside window or below m0",
                    path, n_dropped, len(t))
    return Catalog.from_unsorted(t[keep], xy[keep], m[keep], window, n_dropped=n_dropped)


def write_catalog(cat: Catalog, path) -> None:
    """Write ``cat`` as ``t,x,y,m`` CSV with round-trip exact floats."""
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for t, (x, y), m in zip(cat.t, cat.xy, cat.m):
            fh.write(",".join(format(float(v), ".17g") for v in (t, x, y, m)) + "\n")


def split_catalog(cat: Catalog, t_split: float) -> tuple[Catalog, Catalog]:
    """Split at ``t_split``: events with ``t <= t_split`` train, the rest test."""
    t_min, t_max = cat.window.t_range
    if not (t_min < t_split < t_max):
        raise DomainError(f"t_split={t_split} must lie strictly inside {cat.window.t_range}")
    left = cat.t <= t_split
    train = cat.subset(left, cat.window.with_t_range((t_min, t_split)))
    test = cat.subset(~left, cat.window.with_t_range((t_split, t_max)))
    return train, test


def concatenate(first: Catalog, second: Catalog, window: DomainWindow | None = None) -> Catalog:
    """Join two catalogs (e.g. history and test) into one time-sorted catalog."""
    if window is None:
        w1, w2 = first.window, second.window
        window = w1.with_t_range((min(w1.t_range[0], w2.t_range[0]),
                                  max(w1.t_range[1], w2.t_range[1])))
    return Catalog.from_unsorted(np.concatenate([first.t, second.t]),
                                 np.concatenate([first.xy, second.xy]),
                                 np.concatenate([first.m, second.m]), window)
