"""Campbell-Mecke bandwidth selection, global and two-step adaptive.

The criterion ``T(h)`` sums reciprocal (uncorrected) intensity estimates
over the data points; its expectation at the true intensity is the window
volume. Bandwidths are roots of ``T(h) - volume``: the log-spaced probe
grid brackets sign changes and the smallest bracket is refined by
bisection.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import optimize

from .estimators import ScaleFactors, pilot_estimates, scale_factors
from .geometry import PointPattern, pairwise_sqdist
from .kernels import KernelSpec, profile

TRACE_SCHEMA = "1"
_DENSE_LIMIT = 3000


@dataclass(frozen=True)
class SearchConfig:
    """Bandwidth search range; ``None`` bounds default to fractions of the window diameter."""

    h_min: Optional[float] = None
    h_max: Optional[float] = None
    n_h: int = 64
    rtol: float = 1e-6

    def bounds(self, diameter: float) -> tuple[float, float]:
        lo = 1e-3 * diameter if self.h_min is None else float(self.h_min)
        hi = diameter if self.h_max is None else float(self.h_max)
        if not (0 < lo < hi):
            raise ValueError(f"invalid search range ({lo}, {hi})")
        if self.n_h < 2:
            raise ValueError("n_h must be at least 2")
        return lo, hi


@dataclass(frozen=True, eq=False)
class CriterionTrace:
    h_values: np.ndarray
    T_values: np.ndarray
    target: float

    @property
    def F_values(self) -> np.ndarray:
        return np.abs(self.T_values - self.target)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["h", "T", "F"])
            for h, t, f in zip(self.h_values, self.T_values, self.F_values):
                writer.writerow([repr(float(h)), repr(float(t)), repr(float(f))])


@dataclass(frozen=True, eq=False)
class BandwidthResult:
    h_selected: float
    trace: CriterionTrace
    converged: bool
    n_roots_bracketed: int
    bracket: Optional[tuple[float, float]] = None


class AdaptiveSelection(NamedTuple):
    h_global: float
    scale_factors: ScaleFactors
    result: BandwidthResult


def criterion_T(pattern: PointPattern, evaluator: Callable[[float], np.ndarray], h: float) -> float:
    """Sum of ``1 / evaluator(h)`` over the data points; the window volume if there are none."""
    if len(pattern) == 0:
        return pattern.window.volume()
    lam = np.asarray(evaluator(h), dtype=float)
    if lam.shape != (len(pattern),):
        raise ValueError("evaluator must return one intensity per data point")
    if not np.all(lam > 0):
        raise ZeroDivisionError("intensity estimate vanished at a data point")
    return float(np.sum(1.0 / lam))


class PointIntensity:
    """Uncorrected estimate at the data points as a function of ``h``.

    Each point ``y`` contributes ``(c_y h)^-d kappa((x - y) / (c_y h))``;
    ``c`` defaults to ones, which is the fixed-bandwidth estimator.
    """

    def __init__(self, pattern: PointPattern, k: KernelSpec, c=None):
        self.pattern = pattern
        self.kernel = k
        n = len(pattern)
        self.c = np.ones(n) if c is None else np.asarray(c, dtype=float)
        if self.c.shape != (n,):
            raise ValueError("scale factors misaligned with pattern")
        self._d2 = pairwise_sqdist(pattern.points, pattern.points) if n <= _DENSE_LIMIT else None

    def __call__(self, h: float) -> np.ndarray:
        pts, d = self.pattern.points, self.pattern.dim
        bw = h * self.c
        coef = bw ** (-d)
        inv_bw2 = 1.0 / bw**2
        if self._d2 is not None:
            return profile(self.kernel, self._d2 * inv_bw2) @ coef
        out = np.empty(len(pts))
        for start in range(0, len(pts), 1024):
            d2 = pairwise_sqdist(pts[start:start + 1024], pts)
            out[start:start + 1024] = profile(self.kernel, d2 * inv_bw2) @ coef
        return out


def find_bandwidth(T: Callable[[float], float], target: float, lo: float, hi: float,
                   n_h: int = 64, rtol: float = 1e-6) -> BandwidthResult:
    """Smallest root of ``T(h) - target`` bracketed on a log grid over ``[lo, hi]``."""
    hs = np.geomspace(lo, hi, n_h)
    ts = np.array([T(h) for h in hs])
    trace = CriterionTrace(hs, ts, float(target))
    g = ts - target

    exact = g == 0
    crossing = np.sign(g[:-1]) * np.sign(g[1:]) < 0
    n_roots = int(np.count_nonzero(exact) + np.count_nonzero(crossing))
    first_exact = int(np.argmax(exact)) if exact.any() else n_h
    first_cross = int(np.argmax(crossing)) if crossing.any() else n_h

    if first_exact == n_h and first_cross == n_h:
        best = int(np.argmin(np.abs(g)))
        return BandwidthResult(float(hs[best]), trace, False, 0)
    if first_exact <= first_cross:
        h = float(hs[first_exact])
        return BandwidthResult(h, trace, True, n_roots, (h, h))

    a, b = float(hs[first_cross]), float(hs[first_cross + 1])
    h, info = optimize.bisect(lambda x: T(x) - target, a, b, xtol=1e-300, rtol=rtol,
                              maxiter=400, full_output=True, disp=False)
    return BandwidthResult(float(h), trace, bool(info.converged), n_roots, (a, b))


def _search(pattern: PointPattern, evaluator: PointIntensity, search: Optional[SearchConfig]) -> BandwidthResult:
    search = search or SearchConfig()
    lo, hi = search.bounds(pattern.window.diameter())
    target = pattern.window.volume()
    return find_bandwidth(lambda h: criterion_T(pattern, evaluator, h), target, lo, hi,
                          search.n_h, search.rtol)


def _require_points(pattern: PointPattern) -> None:
    if len(pattern) == 0:
        raise ValueError("bandwidth selection needs a non-empty point pattern")


def select_global(pattern: PointPattern, k: KernelSpec, search: Optional[SearchConfig] = None) -> BandwidthResult:
    """Global bandwidth from the uncorrected fixed-bandwidth estimator."""
    _require_points(pattern)
    return _search(pattern, PointIntensity(pattern, k), search)


def select_with_factors(pattern: PointPattern, k: KernelSpec, sf: ScaleFactors,
                        search: Optional[SearchConfig] = None) -> BandwidthResult:
    """Adaptive bandwidth for frozen scale factors, uncorrected estimator."""
    _require_points(pattern)
    return _search(pattern, PointIntensity(pattern, k, sf.c), search)


def select_adaptive(pattern: PointPattern, k: KernelSpec, search: Optional[SearchConfig] = None,
                    alpha: float = -0.5, pilot_h: Optional[float] = None) -> AdaptiveSelection:
    """Two-step selection: global pilot bandwidth, Abramson factors, then adaptive ``h``.

    ``pilot_h`` skips the first search and uses the given pilot bandwidth.
    """
    _require_points(pattern)
    h_g = select_global(pattern, k, search).h_selected if pilot_h is None else float(pilot_h)
    pilot = pilot_estimates(pattern, h_g, k)
    sf = scale_factors(pilot, alpha)
    return AdaptiveSelection(h_g, sf, select_with_factors(pattern, k, sf, search))
