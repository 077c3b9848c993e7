"""Monte-Carlo comparison of global and adaptive bandwidth selection.

Each replication simulates a pattern, selects a bandwidth, rasterises the
locally edge-corrected estimate on the unit square and records its
integrated squared error divided by the expected number of points.

A replication's random stream is keyed by ``(intensity_id, family index,
replication)`` only, so both selectors see identical patterns and the
report does not depend on worker count or scheduling.
"""
from __future__ import annotations

import csv
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .estimators import IntensityField, rasterize
from .generators import FAMILIES, FAMILY_LABELS, IntensitySpec, simulate, study_config, substream_seed, study_intensity
from .geometry import Window, make_grid
from .kernels import KernelSpec
from .selection import SearchConfig, select_adaptive, select_global

REPORT_SCHEMA = "1"
SELECTORS = ("global", "adaptive")


def ise(estimate: IntensityField, truth: IntensitySpec) -> float:
    """Midpoint-rule integrated squared error against ``truth`` over the estimate's grid."""
    g = estimate.grid
    diff = estimate.values.reshape(-1) - truth(g.centers)
    return float(g.cell_volume * np.sum(diff * diff))


def expected_count(truth: IntensitySpec, method: str = "exact", resolution: int = 512) -> float:
    """Integral of ``truth`` over the unit square, closed form or midpoint quadrature."""
    if method == "exact":
        return truth.integral()
    if method == "quadrature":
        g = make_grid(Window.unit(), resolution)
        return float(np.sum(truth(g.centers)) * g.cell_volume)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    intensity_ids: tuple[int, ...] = tuple(range(1, 11))
    families: tuple[str, ...] = FAMILIES
    n_reps: int = 100
    selector: str = "global"
    kernel: KernelSpec = field(default_factory=KernelSpec.gaussian)
    grid_resolution: int = 128
    master_seed: int = 0
    search: SearchConfig = field(default_factory=SearchConfig)
    alpha: float = -0.5

    def __post_init__(self):
        object.__setattr__(self, "intensity_ids", tuple(int(i) for i in self.intensity_ids))
        object.__setattr__(self, "families", tuple(self.families))
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if self.grid_resolution < 32:
            raise ValueError("grid_resolution must be at least 32")
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}")
        if self.kernel.dim != 2:
            raise ValueError("the simulation study is planar")
        for i in self.intensity_ids:
            study_intensity(i)
        for f in self.families:
            if f not in FAMILIES:
                raise ValueError(f"unknown family {f!r}")


@dataclass(frozen=True)
class ReplicationRecord:
    intensity_id: int
    family: str
    selector: str
    rep: int
    seed: int
    n_points: int
    h_selected: float
    h_pilot: float
    converged: bool
    ise: float
    rel_ise: float
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error) or not self.converged


@dataclass(frozen=True)
class CellResult:
    intensity_id: int
    family: str
    selector: str
    mean_rel_mise: float
    stderr: float
    n_ok: int
    n_fail: int


RECORD_FIELDS = ["intensity_id", "family", "selector", "rep", "seed", "n_points", "h_selected",
                 "h_pilot", "converged", "ise", "rel_ise", "error"]
REPORT_FIELDS = ["intensity_id", "family", "selector", "mean_rel_mise", "stderr", "n_fail"]


@dataclass
class BenchmarkReport:
    selector: str
    intensity_ids: tuple[int, ...]
    families: tuple[str, ...]
    cells: list[CellResult]
    records: list[ReplicationRecord]

    def cell(self, intensity_id: int, family: str) -> CellResult:
        for c in self.cells:
            if c.intensity_id == intensity_id and c.family == family:
                return c
        raise KeyError((intensity_id, family))

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.records)

    def success_fraction(self) -> float:
        return 1.0 - self.n_failed / max(1, len(self.records))

    def to_csv(self, path) -> None:
        write_reports_csv(path, [self])

    def records_to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_FIELDS)
            for r in self.records:
                w.writerow([r.intensity_id, r.family, r.selector, r.rep, r.seed, r.n_points,
                            repr(r.h_selected), repr(r.h_pilot), int(r.converged),
                            repr(r.ise), repr(r.rel_ise), r.error])

    def format_table(self) -> str:
        """Aligned text table: one row per intensity, one column per family."""
        head = ["lambda"] + [FAMILY_LABELS[f] for f in self.families]
        rows = [head]
        for i in self.intensity_ids:
            row = [f"lambda_{i}"]
            for f in self.families:
                c = self.cell(i, f)
                txt = f"{c.mean_rel_mise:,.2f}" if math.isfinite(c.mean_rel_mise) else "n/a"
                if c.n_fail:
                    txt += f" ({c.n_fail} fail)"
                row.append(txt)
            rows.append(row)
        widths = [max(len(r[j]) for r in rows) for j in range(len(head))]
        lines = [f"selector: {self.selector}"]
        for k, r in enumerate(rows):
            lines.append("  ".join(r[0].ljust(widths[0]) if j == 0 else r[j].rjust(widths[j])
                                   for j in range(len(r))))
            if k == 0:
                lines.append("-" * len(lines[-1]))
        return "\n".join(lines) + "\n"


def write_reports_csv(path, reports: Sequence[BenchmarkReport]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for rep in reports:
            for c in rep.cells:
                w.writerow([c.intensity_id, c.family, c.selector, repr(c.mean_rel_mise), repr(c.stderr), c.n_fail])


def aggregate(records: Sequence[ReplicationRecord], selector: str, intensity_ids, families) -> BenchmarkReport:
    """Fold replication records (in replication order) into per-cell means."""
    records = sorted(records, key=lambda r: (r.intensity_id, families.index(r.family), r.rep))
    cells = []
    for i in intensity_ids:
        for f in families:
            rs = [r for r in records if r.intensity_id == i and r.family == f]
            vals = np.array([r.rel_ise for r in rs if not r.error and math.isfinite(r.rel_ise)])
            mean = float(np.mean(vals)) if vals.size else math.nan
            se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
            cells.append(CellResult(i, f, selector, mean, se, int(vals.size), sum(r.failed for r in rs)))
    return BenchmarkReport(selector, tuple(intensity_ids), tuple(families), cells, list(records))


def read_records_csv(path) -> list[ReplicationRecord]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ReplicationRecord(
                int(row["intensity_id"]), row["family"], row["selector"], int(row["rep"]), int(row["seed"]),
                int(row["n_points"]), float(row["h_selected"]), float(row["h_pilot"]),
                bool(int(row["converged"])), float(row["ise"]), float(row["rel_ise"]), row["error"],
            ))
    return out


_GRIDS: dict = {}


def _grid(resolution: int):
    if resolution not in _GRIDS:
        _GRIDS[resolution] = make_grid(Window.unit(), resolution)
    return _GRIDS[resolution]


def run_replication(cfg: ExperimentConfig, intensity_id: int, family: str, rep: int) -> ReplicationRecord:
    seed = substream_seed(cfg.master_seed, intensity_id, FAMILIES.index(family), rep)
    truth = study_intensity(intensity_id)
    n_points, h, h_pilot, converged = 0, math.nan, math.nan, False
    try:
        pattern = simulate(study_config(family, intensity_id), seed=seed)
        n_points = len(pattern)
        if cfg.selector == "global":
            res = select_global(pattern, cfg.kernel, cfg.search)
            sf = None
        else:
            h_pilot, sf, res = select_adaptive(pattern, cfg.kernel, cfg.search, cfg.alpha)
        h, converged = res.h_selected, res.converged
        est = rasterize(pattern, cfg.kernel, _grid(cfg.grid_resolution), h, sf, ec="local")
        err = ise(est, truth)
        return ReplicationRecord(intensity_id, family, cfg.selector, rep, seed, n_points, h, h_pilot,
                                 converged, err, err / expected_count(truth))
    except Exception as exc:  # recorded, never fatal for the run
        msg = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        if not str(exc):
            msg += " " + traceback.format_exc(limit=1).replace("\n", " ")
        return ReplicationRecord(intensity_id, family, cfg.selector, rep, seed, n_points, h, h_pilot,
                                 converged, math.nan, math.nan, msg)


def _run_task(args) -> ReplicationRecord:
    return run_replication(*args)


def run_experiment(cfg: ExperimentConfig, threads: int = 1, progress=None) -> BenchmarkReport:
    """Run every (intensity, family, replication) task and aggregate.

    ``threads > 1`` spreads replications over worker processes; the result
    is identical to the serial run.
    """
    tasks = [(cfg, i, f, r) for i in cfg.intensity_ids for f in cfg.families for r in range(cfg.n_reps)]
    records: list[Optional[ReplicationRecord]] = [None] * len(tasks)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for k, rec in enumerate(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * threads)))):
                records[k] = rec
                if progress:
                    progress(k + 1, len(tasks))
    else:
        for k, t in enumerate(tasks):
            records[k] = _run_task(t)
            if progress:
                progress(k + 1, len(tasks))
    return aggregate(records, cfg.selector, cfg.intensity_ids, cfg.families)


@dataclass(frozen=True)
class SelectorComparison:
    intensity_id: int
    family: str
    winner: str
    ratio: float  # adaptive mean / global mean


def compare_selectors(report_global: BenchmarkReport, report_adaptive: BenchmarkReport) -> list[SelectorComparison]:
    """Per-cell winner (smaller mean relative MISE) and adaptive/global ratio."""
    layout_g = [(c.intensity_id, c.family) for c in report_global.cells]
    layout_a = [(c.intensity_id, c.family) for c in report_adaptive.cells]
    if layout_g != layout_a:
        raise ValueError("reports have different cell layouts")
    out = []
    for cg, ca in zip(report_global.cells, report_adaptive.cells):
        if ca.mean_rel_mise < cg.mean_rel_mise:
            winner = "adaptive"
        elif cg.mean_rel_mise < ca.mean_rel_mise:
            winner = "global"
        else:
            winner = "tie"
        ratio = ca.mean_rel_mise / cg.mean_rel_mise if cg.mean_rel_mise else math.nan
        out.append(SelectorComparison(cg.intensity_id, cg.family, winner, ratio))
    return out


def format_comparison(rows: Sequence[SelectorComparison]) -> str:
    lines = ["intensity  family            winner    adaptive/global"]
    for r in rows:
        lines.append(f"lambda_{r.intensity_id:<3d} {r.family:<17s} {r.winner:<9s} {r.ratio:.4f}")
    return "\n".join(lines) + "\n"
