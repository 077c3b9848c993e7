"""Observation windows, point patterns and evaluation grids.

Windows are open axis-aligned boxes in R^d. Point patterns are immutable
``(n, d)`` float arrays tied to the window they were observed in.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

POINTS_CSV_SCHEMA = "1"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Window:
    """Open box ``(lower[0], upper[0]) x ... x (lower[d-1], upper[d-1])``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _frozen(self.lower).reshape(-1)
        upper = _frozen(self.upper).reshape(-1)
        if lower.shape != upper.shape or lower.size == 0:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("window bounds must be finite")
        if not np.all(lower < upper):
            raise ValueError(f"empty window: lower={lower.tolist()} upper={upper.tolist()}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, dim: int = 2) -> "Window":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def from_bounds(cls, bounds: Sequence[float]) -> "Window":
        """Build from the flat ``xmin,xmax,ymin,ymax,...`` form used on the CLI."""
        b = [float(v) for v in bounds]
        if len(b) == 0 or len(b) % 2:
            raise ValueError("bounds must be pairs of min,max per axis")
        return cls(b[0::2], b[1::2])

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    def volume(self) -> float:
        return float(np.prod(self.sides))

    def diameter(self) -> float:
        return float(np.sqrt(np.sum(self.sides**2)))

    def dilate(self, r: float) -> "Window":
        return Window(self.lower - r, self.upper + r)

    def contains(self, x) -> bool | np.ndarray:
        """Strict containment; accepts one point or an ``(m, d)`` array."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point dimension {x.shape[-1]} does not match window dimension {self.dim}")
        inside = np.all((x > self.lower) & (x < self.upper), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def __eq__(self, other):
        if not isinstance(other, Window):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self):
        return f"Window(lower={self.lower.tolist()}, upper={self.upper.tolist()})"

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


def volume(w: Window) -> float:
    return w.volume()


def contains(w: Window, x) -> bool | np.ndarray:
    return w.contains(x)


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Distinct points strictly inside ``window``."""

    points: np.ndarray
    window: Window

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.window.dim)
        if pts.ndim != 2 or pts.shape[1] != self.window.dim:
            raise ValueError(f"points must have shape (n, {self.window.dim}), got {pts.shape}")
        if not np.all(self.window.contains(pts)):
            bad = int(np.flatnonzero(~self.window.contains(pts))[0])
            raise ValueError(f"point {bad} {pts[bad].tolist()} lies outside the open window")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("point pattern contains duplicate points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def dim(self) -> int:
        return self.window.dim

    def subset(self, keep) -> "PointPattern":
        return PointPattern(self.points[keep], self.window)


@dataclass(frozen=True, eq=False)
class Grid:
    """Midpoint lattice over a window.

    ``centers`` enumerates cells in C order over ``resolution``: the last
    axis varies fastest, so for d=2 the flat index is ``i * ny + j`` with
    ``i`` the x index and ``j`` the y index.
    """

    window: Window
    resolution: tuple[int, ...]
    centers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        res = tuple(int(r) for r in np.atleast_1d(self.resolution))
        if len(res) != self.window.dim:
            raise ValueError(f"resolution needs {self.window.dim} entries, got {len(res)}")
        if any(r < 1 for r in res):
            raise ValueError("every resolution entry must be >= 1")
        object.__setattr__(self, "resolution", res)
        axes = self.axes()
        mesh = np.meshgrid(*axes, indexing="ij")
        centers = np.stack([m.reshape(-1) for m in mesh], axis=-1)
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)

    @property
    def step(self) -> np.ndarray:
        return self.window.sides / np.asarray(self.resolution, dtype=float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.step))

    @property
    def n_cells(self) -> int:
        return math.prod(self.resolution)

    def axes(self) -> list[np.ndarray]:
        w = self.window
        return [
            w.lower[i] + (np.arange(r) + 0.5) * (w.sides[i] / r)
            for i, r in enumerate(self.resolution)
        ]


def make_grid(w: Window, resolution) -> Grid:
    res = np.atleast_1d(resolution)
    if res.size == 1 and w.dim > 1:
        res = np.repeat(res, w.dim)
    return Grid(w, tuple(int(r) for r in res))


def pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``a`` and ``b``."""
    out = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        diff = np.subtract.outer(a[:, k], b[:, k])
        out += diff * diff
    return out


# -- CSV point format ---------------------------------------------------------

def _axis_columns(header: list[str], dim: int | None) -> list[int]:
    names = [h.strip().lower() for h in header]
    numbered = []
    k = 1
    while f"x{k}" in names:
        numbered.append(names.index(f"x{k}"))
        k += 1
    if numbered:
        cols = numbered
    elif "x" in names and "y" in names:
        cols = [names.index("x"), names.index("y")]
    else:
        raise ValueError("CSV header must name coordinate columns x1..xd (or x,y)")
    if dim is not None:
        if len(cols) < dim:
            raise ValueError(f"CSV has {len(cols)} coordinate columns, window needs {dim}")
        cols = cols[:dim]
    return cols


def read_points_text(text: str, window: Window, source: str = "<csv>") -> PointPattern:
    rows = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(rows)
    except StopIteration:
        raise ValueError(f"{source}: missing header row") from None
    cols = _axis_columns(header, window.dim)
    extra = [h for i, h in enumerate(header) if i not in cols]
    if extra:
        log.warning("%s: ignoring extra columns %s", source, extra)
    pts = []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            pts.append([float(row[c]) for c in cols])
        except (IndexError, ValueError):
            raise ValueError(f"{source}: malformed row at line {lineno}: {row!r}") from None
    return PointPattern(np.array(pts, dtype=float).reshape(-1, window.dim), window)


def read_points_csv(path, window: Window) -> PointPattern:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        return read_points_text(fh.read(), window, source=str(path))


def write_points_csv(path, pattern: PointPattern) -> None:
    header = ["x", "y"] if pattern.dim == 2 else [f"x{k + 1}" for k in range(pattern.dim)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for p in pattern.points:
            writer.writerow([repr(float(v)) for v in p])
