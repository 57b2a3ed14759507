"""Point patterns, observation windows, lattices and count aggregation.

Every downstream estimator works on the types defined here.  Coordinates are
planar (the unit is whatever the caller uses, kilometres by convention) and
time stamps are integer days.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Union

import numpy as np

CsvSource = Union[str, os.PathLike, IO[str], IO[bytes], bytes]


class PatternError(ValueError):
    """Base class for data-model errors."""


class ParseError(PatternError):
    """Malformed CSV input; ``line`` is the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyPatternError(PatternError):
    """No events survived ingestion."""


class GridConsistencyError(PatternError):
    """An event falls outside the bounding box of the lattice."""


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------

def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-14 else (1 if v > 0 else -1)

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - 1e-14 <= c[0] <= max(a[0], b[0]) + 1e-14
                and min(a[1], b[1]) - 1e-14 <= c[1] <= max(a[1], b[1]) + 1e-14)

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(p1, p2, p3):
        return True
    if o2 == 0 and on_segment(p1, p2, p4):
        return True
    if o3 == 0 and on_segment(p3, p4, p1):
        return True
    if o4 == 0 and on_segment(p3, p4, p2):
        return True
    return False


def _is_simple(vertices: np.ndarray) -> bool:
    k = len(vertices)
    edges = [(vertices[i], vertices[(i + 1) % k]) for i in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == k - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def shoelace_area(vertices: np.ndarray) -> float:
    """Signed polygon area (positive for counter-clockwise order)."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class ObservationWindow:
    """Closed simple polygon.  Vertices are stored counter-clockwise."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise PatternError("window needs at least 3 vertices of shape (k, 2)")
        if np.allclose(v[0], v[-1]) and len(v) > 3:
            v = v[:-1]
        if not np.all(np.isfinite(v)):
            raise PatternError("window vertices must be finite")
        if not _is_simple(v):
            raise PatternError("window polygon is self-intersecting")
        a = shoelace_area(v)
        if abs(a) <= 0:
            raise PatternError("window polygon has zero area")
        if a < 0:
            v = v[::-1].copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def rectangle(cls, x_min: float, y_min: float, x_max: float, y_max: float) -> "ObservationWindow":
        return cls(np.array([[x_min, y_min], [x_max, y_min], [x_max, y_max], [x_min, y_max]]))

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @property
    def is_rectangle(self) -> bool:
        if len(self.vertices) != 4:
            return False
        x0, y0, x1, y1 = self.bbox
        corners = {(x0, y0), (x1, y0), (x1, y1), (x0, y1)}
        return {tuple(map(float, p)) for p in self.vertices} == corners

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of each edge, shape (k, 2) each."""
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def contains(self, xy, tol: float = 1e-12) -> np.ndarray:
        """Closed containment test: boundary points count as inside."""
        pts = np.atleast_2d(np.asarray(xy, dtype=float))
        px, py = pts[:, 0], pts[:, 1]
        a, b = self.edges()
        inside = np.zeros(len(pts), dtype=bool)
        on_edge = np.zeros(len(pts), dtype=bool)
        for (ax, ay), (bx, by) in zip(a, b):
            crosses = (ay > py) != (by > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = ax + (py - ay) * (bx - ax) / (by - ay)
            inside ^= crosses & (px < xint)
            ex, ey = bx - ax, by - ay
            L2 = ex * ex + ey * ey
            s = np.clip(((px - ax) * ex + (py - ay) * ey) / L2, 0.0, 1.0)
            d2 = (ax + s * ex - px) ** 2 + (ay + s * ey - py) ** 2
            on_edge |= d2 <= tol * tol * max(L2, 1.0)
        return inside | on_edge


def load_window(source: CsvSource) -> ObservationWindow:
    """Read polygon vertices ``x,y`` (one per line, optional header)."""
    rows = []
    for lineno, row in _iter_csv(source):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            rows.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            if lineno == 1:
                continue  # header
            raise ParseError(lineno, f"cannot parse vertex {row!r}")
    return ObservationWindow(np.array(rows))


# ---------------------------------------------------------------------------
# lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridSpec:
    """Regular lattice of ``m`` x ``p`` cells; index ``(i, j)`` is 0-based.

    The centroid of cell ``(i, j)`` is ``(x_min + (i + 0.5) dx, y_min + (j + 0.5) dy)``.
    ``mask[i, j]`` is True when that centroid lies in the window.
    """

    x_min: float
    y_min: float
    dx: float
    dy: float
    m: int
    p: int
    mask: np.ndarray = None

    def __post_init__(self):
        if self.dx <= 0 or self.dy <= 0:
            raise PatternError("cell sides must be positive")
        if self.m < 1 or self.p < 1:
            raise PatternError("grid needs at least one cell per axis")
        mask = np.ones((self.m, self.p), dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.m, self.p):
            raise PatternError(f"mask shape {mask.shape} != ({self.m}, {self.p})")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_window(cls, window: ObservationWindow, m: int = 128, p: int = 128) -> "GridSpec":
        x0, y0, x1, y1 = window.bbox
        dx, dy = (x1 - x0) / m, (y1 - y0) / p
        g = cls(x0, y0, dx, dy, m, p)
        cx, cy = g.centroids()
        mask = window.contains(np.column_stack([cx.ravel(), cy.ravel()])).reshape(m, p)
        return cls(x0, y0, dx, dy, m, p, mask)

    @property
    def x_max(self) -> float:
        return self.x_min + self.m * self.dx

    @property
    def y_max(self) -> float:
        return self.y_min + self.p * self.dy

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.p)

    def centroids(self) -> tuple[np.ndarray, np.ndarray]:
        """Centroid coordinate arrays, each of shape (m, p)."""
        xs = self.x_min + (np.arange(self.m) + 0.5) * self.dx
        ys = self.y_min + (np.arange(self.p) + 0.5) * self.dy
        return np.meshgrid(xs, ys, indexing="ij")

    def cell_index(self, xy) -> tuple[np.ndarray, np.ndarray]:
        """Cell indices under the half-open rule ``[left, right) x [bottom, top)``.

        Points lying exactly on the outer right/top edge of the lattice go to
        the last cell so the closed window is still partitioned.
        """
        pts = np.atleast_2d(np.asarray(xy, dtype=float))
        fi = (pts[:, 0] - self.x_min) / self.dx
        fj = (pts[:, 1] - self.y_min) / self.dy
        i = np.floor(fi).astype(np.int64)
        j = np.floor(fj).astype(np.int64)
        i[(i == self.m) & np.isclose(pts[:, 0], self.x_max, rtol=0, atol=1e-12 * max(1.0, abs(self.x_max)))] = self.m - 1
        j[(j == self.p) & np.isclose(pts[:, 1], self.y_max, rtol=0, atol=1e-12 * max(1.0, abs(self.y_max)))] = self.p - 1
        bad = (i < 0) | (i >= self.m) | (j < 0) | (j >= self.p)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise GridConsistencyError(f"point {tuple(pts[k])} lies outside the grid bounding box")
        return i, j


@dataclass(frozen=True, eq=False)
class Raster:
    """Cell values on a grid; masked-out cells hold NaN."""

    grid: GridSpec
    values: np.ndarray
    units: str = "intensity"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise PatternError(f"raster shape {v.shape} != grid shape {self.grid.shape}")
        v[~self.grid.mask] = np.nan
        if not np.all(np.isfinite(v[self.grid.mask])):
            raise PatternError("raster values must be finite on masked-in cells")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def filled(self, fill: float = 0.0) -> np.ndarray:
        return np.where(self.grid.mask, self.values, fill)

    def integral(self) -> float:
        """Riemann sum over masked-in cells."""
        return float(np.sum(self.filled()) * self.grid.cell_area)

    def at(self, xy) -> np.ndarray:
        """Cell value at each point (nearest-cell lookup)."""
        i, j = self.grid.cell_index(xy)
        return self.filled()[i, j]


# ---------------------------------------------------------------------------
# point patterns
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpatioTemporalPointPattern:
    """Events ``(x, y, t)`` with integer day stamps, sorted by ``(t, x, y)``."""

    xy: np.ndarray
    t: np.ndarray
    window: ObservationWindow
    t_range: tuple[int, int]

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        t_raw = np.asarray(self.t).reshape(-1)
        if len(t_raw) != len(xy):
            raise PatternError("xy and t lengths differ")
        if t_raw.size and not np.all(np.asarray(t_raw, dtype=float) == np.round(np.asarray(t_raw, dtype=float))):
            raise PatternError("time stamps must be integer days")
        t = np.asarray(t_raw, dtype=np.int64)
        T0, T1 = int(self.t_range[0]), int(self.t_range[1])
        if T0 > T1:
            raise PatternError("t_range must satisfy T0 <= T1")
        if t.size and (t.min() < T0 or t.max() > T1):
            raise PatternError("time stamps outside t_range")
        if len(xy) and not np.all(self.window.contains(xy)):
            raise PatternError("events outside the observation window")
        order = np.lexsort((xy[:, 1], xy[:, 0], t)) if len(t) else np.arange(0)
        xy, t = xy[order].copy(), t[order].copy()
        xy.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "t_range", (T0, T1))

    @property
    def n(self) -> int:
        return len(self.t)

    def __len__(self) -> int:
        return self.n

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.t_range[0], self.t_range[1] + 1)

    def day(self, t: int) -> np.ndarray:
        """Locations of events stamped ``t``."""
        lo, hi = np.searchsorted(self.t, [t, t + 1])
        return self.xy[lo:hi]

    def subset(self, keep) -> "SpatioTemporalPointPattern":
        keep = np.asarray(keep)
        return SpatioTemporalPointPattern(self.xy[keep], self.t[keep], self.window, self.t_range)

    def restrict_days(self, T0: int, T1: int) -> "SpatioTemporalPointPattern":
        keep = (self.t >= T0) & (self.t <= T1)
        return SpatioTemporalPointPattern(self.xy[keep], self.t[keep], self.window, (T0, T1))


def _iter_csv(source: CsvSource) -> Iterable[tuple[int, list[str]]]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            yield from _iter_csv(fh)
        return
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    if isinstance(source, io.RawIOBase) or isinstance(source, io.BufferedIOBase) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")
    for lineno, row in enumerate(csv.reader(source), start=1):
        yield lineno, row


def _parse_day(text: str) -> int:
    v = float(text)
    if not np.isfinite(v) or v != int(v):
        raise ValueError("fractional day")
    return int(v)


def load_point_pattern(source: CsvSource, window: ObservationWindow,
                       t_range: tuple[int, int] | None = None) -> tuple[SpatioTemporalPointPattern, int]:
    """Read an ``x,y,t`` CSV and keep the rows inside ``window`` and ``t_range``.

    Without ``t_range`` the span of the parsed days is used.

    Returns the pattern and the number of dropped rows.  Raises
    :class:`ParseError` for malformed rows and :class:`EmptyPatternError`
    when nothing is left.
    """
    xs, ys, ts = [], [], []
    header_seen = False
    for lineno, row in _iter_csv(source):
        if not row or all(not c.strip() for c in row):
            continue
        if not header_seen:
            header_seen = True
            if [c.strip().lower() for c in row] != ["x", "y", "t"]:
                raise ParseError(lineno, f"expected header 'x,y,t', got {row!r}")
            continue
        if len(row) != 3:
            raise ParseError(lineno, f"expected 3 fields, got {len(row)}")
        try:
            x, y = float(row[0]), float(row[1])
            t = _parse_day(row[2])
        except ValueError:
            raise ParseError(lineno, f"cannot parse row {row!r}") from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise ParseError(lineno, "non-finite coordinate")
        xs.append(x)
        ys.append(y)
        ts.append(t)
    if not header_seen:
        raise ParseError(1, "missing header 'x,y,t'")
    xy = np.column_stack([xs, ys]) if xs else np.zeros((0, 2))
    t = np.asarray(ts, dtype=np.int64)
    if t_range is None:
        if not len(t):
            raise EmptyPatternError("no events in file")
        t_range = (int(t.min()), int(t.max()))
    keep = (t >= t_range[0]) & (t <= t_range[1])
    if len(xy):
        keep &= window.contains(xy)
    dropped = int(len(t) - keep.sum())
    if not keep.any():
        raise EmptyPatternError(f"no events inside window and t_range (dropped {dropped})")
    return SpatioTemporalPointPattern(xy[keep], t[keep], window, t_range), dropped


def save_point_pattern(pattern: SpatioTemporalPointPattern, dest) -> None:
    """Write ``x,y,t`` with shortest round-trip float formatting."""
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        fh.write("x,y,t\n")
        for (x, y), t in zip(pattern.xy, pattern.t):
            fh.write(f"{float(x)!r},{float(y)!r},{int(t)}\n")
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------------------
# counts
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CellCountSeries:
    """Per-day cell counts; ``counts[k]`` belongs to day ``days[k]``."""

    grid: GridSpec
    days: np.ndarray
    counts: np.ndarray = field(repr=False)

    def slice(self, t: int) -> np.ndarray:
        k = int(t - self.days[0])
        if not 0 <= k < len(self.days):
            raise KeyError(t)
        return self.counts[k]

    def __getitem__(self, t: int) -> np.ndarray:
        return self.slice(t)

    def lexo(self, t: int) -> np.ndarray:
        """Cell counts of day ``t`` as a lexicographically ordered vector."""
        return self.slice(t).ravel()

    def window(self, T0: int, T1: int) -> "CellCountSeries":
        k0, k1 = int(T0 - self.days[0]), int(T1 - self.days[0])
        return CellCountSeries(self.grid, self.days[k0:k1 + 1], self.counts[k0:k1 + 1])

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=(1, 2))


def aggregate_counts(pattern: SpatioTemporalPointPattern, grid: GridSpec) -> CellCountSeries:
    """Count events per (day, cell) with half-open cell boundaries."""
    days = pattern.days
    counts = np.zeros((len(days), grid.m, grid.p), dtype=np.int64)
    if pattern.n:
        i, j = grid.cell_index(pattern.xy)
        np.add.at(counts, (pattern.t - days[0], i, j), 1)
    return CellCountSeries(grid, days, counts)


def daily_count_array(pattern: SpatioTemporalPointPattern) -> tuple[np.ndarray, np.ndarray]:
    days = pattern.days
    counts = np.bincount(pattern.t - days[0], minlength=len(days)).astype(np.int64)
    return days, counts


def daily_counts(pattern: SpatioTemporalPointPattern) -> list[tuple[int, int]]:
    """``[(t, N_t(R)), ...]`` for every day in the pattern's range, zero-filled."""
    days, counts = daily_count_array(pattern)
    return [(int(d), int(c)) for d, c in zip(days, counts)]
