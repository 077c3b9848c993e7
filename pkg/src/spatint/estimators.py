"""Fixed and adaptive (Abramson) kernel estimators of intensity.

All estimators evaluate directly: every evaluation point sums one kernel
term per data point. ``rasterize`` works through the grid in fixed-size
chunks so the result never depends on how many workers were used.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Grid, PointPattern, pairwise_sqdist
from .kernels import KernelSpec, box_integral, kernel_at_zero, profile

RASTER_SCHEMA = "1"
NODATA_VALUE = -9999
_CHUNK = 2048


class EdgeCorrection(str, enum.Enum):
    NONE = "none"
    GLOBAL = "global"
    LOCAL = "local"


def _as_ec(ec) -> EdgeCorrection:
    try:
        return EdgeCorrection(ec)
    except ValueError:
        raise ValueError(f"unknown edge correction {ec!r}; use none, global or local") from None


@dataclass(frozen=True, eq=False)
class ScaleFactors:
    """Per-point bandwidth multipliers ``c``, aligned with the pattern's points."""

    c: np.ndarray
    alpha: float = -0.5

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        if not np.all(c > 0):
            raise ValueError("scale factors must be strictly positive")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    def __len__(self):
        return self.c.size

    @classmethod
    def ones(cls, n: int, alpha: float = -0.5) -> "ScaleFactors":
        return cls(np.ones(n), alpha)


def _eval_points(pattern: PointPattern, x0) -> tuple[np.ndarray, bool]:
    x = np.asarray(x0, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if not np.all(pattern.window.contains(x)):
        raise ValueError("evaluation point lies outside the window")
    return x, single


def _check_h(h: float) -> None:
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h!r}")


def edge_weights(pattern: PointPattern, scales, k: KernelSpec) -> np.ndarray:
    """Local edge-correction weight of every data point at its own bandwidth."""
    if len(pattern) == 0:
        return np.zeros(0)
    return np.asarray(box_integral(k, pattern.points, scales, pattern.window), dtype=float)


def _sum_terms(x: np.ndarray, pts: np.ndarray, bw: np.ndarray, coef: np.ndarray, k: KernelSpec) -> np.ndarray:
    # sum_y coef_y * kappa((x - y) / bw_y), chunked over evaluation points
    out = np.empty(x.shape[0])
    inv_bw2 = 1.0 / bw**2
    for start in range(0, x.shape[0], _CHUNK):
        d2 = pairwise_sqdist(x[start:start + _CHUNK], pts)
        out[start:start + _CHUNK] = profile(k, d2 * inv_bw2) @ coef
    return out


def estimate_fixed(pattern: PointPattern, h: float, k: KernelSpec, x0, ec="none"):
    """Fixed-bandwidth kernel estimate at ``x0`` (one point or an ``(m, d)`` array)."""
    _check_h(h)
    ec = _as_ec(ec)
    x, single = _eval_points(pattern, x0)
    n, d = len(pattern), pattern.dim
    if n == 0:
        out = np.zeros(x.shape[0])
    else:
        coef = np.full(n, h ** (-d))
        if ec is EdgeCorrection.LOCAL:
            coef = coef / edge_weights(pattern, h, k)
        out = _sum_terms(x, pattern.points, np.full(n, float(h)), coef, k)
        if ec is EdgeCorrection.GLOBAL:
            out = out / np.atleast_1d(box_integral(k, x, h, pattern.window))
    return float(out[0]) if single else out


def pilot_estimates(pattern: PointPattern, h_g: float, k: KernelSpec) -> np.ndarray:
    """Locally edge-corrected fixed-bandwidth estimate at each data point."""
    _check_h(h_g)
    if len(pattern) == 0:
        raise ValueError("pilot estimates need a non-empty pattern")
    return estimate_fixed(pattern, h_g, k, pattern.points, ec=EdgeCorrection.LOCAL)


def scale_factors(pilot, alpha: float = -0.5) -> ScaleFactors:
    """Abramson factors ``(pilot / geometric_mean(pilot)) ** alpha``, in log space."""
    pilot = np.asarray(pilot, dtype=float).reshape(-1)
    if pilot.size == 0:
        raise ValueError("no pilot values")
    if not np.all(pilot > 0):
        raise ValueError("pilot intensities must be strictly positive")
    logp = np.log(pilot)
    return ScaleFactors(np.exp(alpha * (logp - logp.mean())), alpha)


def _check_sf(pattern: PointPattern, sf: ScaleFactors) -> None:
    if len(sf) != len(pattern):
        raise ValueError(f"{len(sf)} scale factors for {len(pattern)} points")


def estimate_adaptive(pattern: PointPattern, h: float, sf: ScaleFactors, k: KernelSpec, x0, ec="none"):
    """Adaptive estimate with per-point bandwidth ``h * c[i]``; ``ec`` is none or local."""
    _check_h(h)
    ec = _as_ec(ec)
    if ec is EdgeCorrection.GLOBAL:
        raise ValueError("adaptive estimator supports none/local edge correction only")
    _check_sf(pattern, sf)
    x, single = _eval_points(pattern, x0)
    if len(pattern) == 0:
        out = np.zeros(x.shape[0])
    else:
        bw = h * sf.c
        coef = bw ** (-pattern.dim)
        if ec is EdgeCorrection.LOCAL:
            coef = coef / edge_weights(pattern, bw, k)
        out = _sum_terms(x, pattern.points, bw, coef, k)
    return float(out[0]) if single else out


def adaptive_lower_bound(pattern: PointPattern, h: float, sf: ScaleFactors, k: KernelSpec) -> np.ndarray:
    """Self-contribution ``kappa(0) / (c h)**d``, a floor for the uncorrected estimate at data points."""
    return kernel_at_zero(k) / (h * sf.c) ** pattern.dim


@dataclass(frozen=True, eq=False)
class IntensityField:
    """Estimated intensity at the cell centres of ``grid``.

    ``values`` has shape ``grid.resolution`` (x index first).
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.resolution)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def to_csv(self, path) -> None:
        """Write one ``x,y,value`` row per cell in grid enumeration order."""
        centers = self.grid.centers
        d = self.grid.window.dim
        header = ["x", "y"] if d == 2 else [f"x{i + 1}" for i in range(d)]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(header + ["value"]) + "\n")
            for c, v in zip(centers, self.values.reshape(-1)):
                fh.write(",".join(repr(float(t)) for t in (*c, v)) + "\n")

    def to_ascii_grid(self, path) -> None:
        """Write an ESRI ASCII grid: header, then rows from the top (largest y) down.

        Square cells get a ``cellsize`` line; otherwise ``dx`` and ``dy`` lines
        are written instead.
        """
        if self.grid.window.dim != 2:
            raise ValueError("ASCII grids are two-dimensional")
        nx, ny = self.grid.resolution
        dx, dy = self.grid.step
        w = self.grid.window
        lines = [
            f"ncols {nx}",
            f"nrows {ny}",
            f"xllcorner {float(w.lower[0])!r}",
            f"yllcorner {float(w.lower[1])!r}",
        ]
        if math.isclose(dx, dy, rel_tol=1e-12):
            lines.append(f"cellsize {float(dx)!r}")
        else:
            lines += [f"dx {float(dx)!r}", f"dy {float(dy)!r}"]
        lines.append(f"NODATA_value {NODATA_VALUE}")
        rows = self.values.T[::-1]
        for row in rows:
            lines.append(" ".join(repr(float(v)) for v in row))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")


def rasterize(
    pattern: PointPattern,
    k: KernelSpec,
    grid: Grid,
    h: float,
    sf: Optional[ScaleFactors] = None,
    ec="local",
    threads: int = 1,
) -> IntensityField:
    """Evaluate the fixed (``sf is None``) or adaptive estimator at every cell centre."""
    if grid.window != pattern.window:
        raise ValueError("grid and pattern windows differ")
    _check_h(h)
    ec = _as_ec(ec)
    centers = grid.centers
    n, d = len(pattern), pattern.dim
    if n == 0:
        return IntensityField(grid, np.zeros(grid.n_cells))

    if sf is None:
        bw = np.full(n, float(h))
    else:
        if ec is EdgeCorrection.GLOBAL:
            raise ValueError("adaptive estimator supports none/local edge correction only")
        _check_sf(pattern, sf)
        bw = h * sf.c
    coef = bw ** (-d)
    if ec is EdgeCorrection.LOCAL:
        coef = coef / edge_weights(pattern, bw, k)

    if k.family == "gaussian" and d == 2 and ec is not EdgeCorrection.GLOBAL:
        # the Gaussian factorises over axes, so the lattice sum is one matrix product
        ax, ay = grid.axes()
        pts = pattern.points
        gx = np.exp(-0.5 * (np.subtract.outer(ax, pts[:, 0]) / bw) ** 2)
        gy = np.exp(-0.5 * (np.subtract.outer(ay, pts[:, 1]) / bw) ** 2)
        values = (gx * (k.normalizer * coef)) @ gy.T
        return IntensityField(grid, values)

    def block(start: int) -> np.ndarray:
        x = centers[start:start + _CHUNK]
        v = _sum_terms(x, pattern.points, bw, coef, k)
        if ec is EdgeCorrection.GLOBAL:
            v = v / box_integral(k, x, h, pattern.window)
        return v

    starts = range(0, grid.n_cells, _CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    return IntensityField(grid, np.concatenate(parts))
