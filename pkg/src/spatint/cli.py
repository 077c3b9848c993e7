"""Command-line interface: ``spatint {select,estimate,simulate,benchmark}``.

Exit codes: 0 success, 1 input or configuration error, 2 numerical
non-convergence or too many failed benchmark replications.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .benchmark import (REPORT_SCHEMA, SELECTORS, ExperimentConfig, compare_selectors, format_comparison,
                        run_experiment, write_reports_csv)
from .estimators import RASTER_SCHEMA, EdgeCorrection, rasterize
from .generators import GeneratorConfig, IntensitySpec, simulate, study_config, study_intensity
from .geometry import POINTS_CSV_SCHEMA, Window, make_grid, read_points_csv, write_points_csv
from .kernels import parse_kernel
from .selection import TRACE_SCHEMA, SearchConfig, select_adaptive, select_global

log = logging.getLogger("spatint")

CONFIG_SCHEMA = "1"
MIN_SUCCESS = 0.95


class ConfigError(ValueError):
    pass


def _strict(d: dict, allowed: set, where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    version = d.get("schema_version", CONFIG_SCHEMA)
    if str(version) != CONFIG_SCHEMA:
        raise ConfigError(f"{where}: unsupported schema_version {version!r}")
    return d


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _window_from(obj) -> Window:
    if isinstance(obj, dict):
        _strict(obj, {"lower", "upper"}, "window")
        return Window(obj["lower"], obj["upper"])
    return Window.from_bounds(obj)


def _parse_bounds(text: str) -> Window:
    try:
        return Window.from_bounds(text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --window {text!r}: {exc}") from None


def _parse_alpha(value, dim: int) -> float:
    if isinstance(value, str) and value.strip().lower() == "inv-d":
        return -1.0 / dim
    return float(value)


def _search_from(obj: dict) -> SearchConfig:
    _strict(obj, {"h_min", "h_max", "n_h", "rtol"}, "search")
    return SearchConfig(**obj)


RUN_KEYS = {"schema_version", "window", "kernel", "alpha", "search", "resolution",
            "edge_correction", "h", "pilot_h", "adaptive", "auto"}


def _run_settings(args) -> dict:
    """Merge ``--config`` with explicit flags; flags win."""
    cfg = _strict(_load_json(args.config), RUN_KEYS, str(args.config)) if args.config else {}
    s = {
        "window": _window_from(cfg["window"]) if "window" in cfg else None,
        "kernel": cfg.get("kernel", "gaussian"),
        "alpha": cfg.get("alpha", -0.5),
        "search": _search_from(cfg.get("search", {})),
        "resolution": cfg.get("resolution", 128),
        "edge_correction": cfg.get("edge_correction", "local"),
        "h": cfg.get("h"),
        "pilot_h": cfg.get("pilot_h"),
        "adaptive": bool(cfg.get("adaptive", False)),
        "auto": bool(cfg.get("auto", False)),
    }
    if getattr(args, "window", None):
        s["window"] = _parse_bounds(args.window)
    if s["window"] is None:
        raise ConfigError("a window is required (--window xmin,xmax,ymin,ymax or config 'window')")
    for key in ("kernel", "alpha", "edge_correction", "h", "pilot_h"):
        v = getattr(args, key, None)
        if v is not None:
            s[key] = v
    if getattr(args, "resolution", None):
        s["resolution"] = [int(r) for r in args.resolution.split(",")]
    if getattr(args, "adaptive", False):
        s["adaptive"] = True
    if getattr(args, "auto", False):
        s["auto"] = True
    overrides = {k: getattr(args, k) for k in ("h_min", "h_max", "n_h") if getattr(args, k, None) is not None}
    if overrides:
        s["search"] = replace(s["search"], **overrides)
    dim = s["window"].dim
    s["kernel"] = parse_kernel(s["kernel"], dim)
    s["alpha"] = _parse_alpha(s["alpha"], dim)
    return s


def _trace_prefix(args) -> Path:
    return Path(args.trace) if args.trace else Path(Path(args.points).stem)


def _run_selection(pattern, s, prefix: Path, out=print):
    """Global (and optionally adaptive) selection; writes traces; returns (h, sf, converged)."""
    g = select_global(pattern, s["kernel"], s["search"])
    g.trace.to_csv(f"{prefix}.global.trace.csv")
    out(f"h_global {g.h_selected!r}")
    converged = g.converged
    if not g.converged:
        log.warning("global selection did not bracket a root; using grid argmin")
    if not s["adaptive"]:
        return g.h_selected, None, converged
    pilot_h = s["pilot_h"] if s["pilot_h"] is not None else g.h_selected
    h_pilot, sf, a = select_adaptive(pattern, s["kernel"], s["search"], s["alpha"], pilot_h=pilot_h)
    a.trace.to_csv(f"{prefix}.adaptive.trace.csv")
    out(f"h_pilot {h_pilot!r}")
    out(f"h_adaptive {a.h_selected!r}")
    if not a.converged:
        log.warning("adaptive selection did not bracket a root; using grid argmin")
    return a.h_selected, sf, converged and a.converged


def cmd_select(args) -> int:
    s = _run_settings(args)
    pattern = read_points_csv(args.points, s["window"])
    if len(pattern) == 0:
        raise ConfigError("bandwidth selection needs a non-empty point pattern")
    _, _, converged = _run_selection(pattern, s, _trace_prefix(args))
    return 0 if converged else 2


def cmd_estimate(args) -> int:
    s = _run_settings(args)
    pattern = read_points_csv(args.points, s["window"])
    ec = EdgeCorrection(s["edge_correction"])
    converged = True
    sf = None
    if s["auto"]:
        if len(pattern) == 0:
            raise ConfigError("--auto needs a non-empty point pattern")
        h, sf, converged = _run_selection(pattern, s, _trace_prefix(args))
        if s["h"] is not None:
            log.warning("--h ignored because --auto was given")
    else:
        if s["h"] is None:
            raise ConfigError("give a bandwidth with --h or use --auto")
        h = float(s["h"])
        if s["adaptive"]:
            if len(pattern) == 0:
                raise ConfigError("--adaptive needs a non-empty point pattern")
            pilot_h = s["pilot_h"] if s["pilot_h"] is not None else select_global(pattern, s["kernel"], s["search"]).h_selected
            _, sf, _ = select_adaptive(pattern, s["kernel"], s["search"], s["alpha"], pilot_h=pilot_h)
    grid = make_grid(s["window"], s["resolution"])
    est = rasterize(pattern, s["kernel"], grid, h, sf, ec=ec, threads=args.threads)
    out = Path(args.out)
    est.to_csv(f"{out}.csv")
    if grid.window.dim == 2:
        est.to_ascii_grid(f"{out}.asc")
    print(f"h {h!r}")
    print(f"integral {est.integral()!r}")
    return 0 if converged else 2


SIM_KEYS = {"schema_version", "family", "rate", "radius", "mean_daughters", "seed", "window",
            "intensity", "study_family", "intensity_id"}


def _intensity_from(obj) -> IntensitySpec:
    if isinstance(obj, int):
        return study_intensity(obj)
    _strict(obj, {"id", "kind", "a", "b"}, "intensity")
    if "id" in obj and obj["id"] is not None and set(obj) <= {"id"}:
        return study_intensity(int(obj["id"]))
    return IntensitySpec(obj["kind"], float(obj["a"]), float(obj.get("b", 0.0)), obj.get("id"))


def generator_config(cfg: dict) -> tuple[GeneratorConfig, Window]:
    _strict(cfg, SIM_KEYS, "simulate config")
    seed = int(cfg.get("seed", 0))
    if "study_family" in cfg:
        if "intensity_id" not in cfg:
            raise ConfigError("study_family needs intensity_id")
        clash = {"family", "rate", "radius", "mean_daughters", "intensity", "window"} & set(cfg)
        if clash:
            raise ConfigError(f"study configs fix the process; remove {', '.join(sorted(clash))}")
        return study_config(cfg["study_family"], int(cfg["intensity_id"]), seed), Window.unit()
    if "family" not in cfg or "rate" not in cfg:
        raise ConfigError("simulate config needs 'family' and 'rate' (or 'study_family')")
    w = _window_from(cfg["window"]) if "window" in cfg else Window.unit()
    intensity = _intensity_from(cfg["intensity"]) if cfg.get("intensity") is not None else None
    gc = GeneratorConfig(cfg["family"], float(cfg["rate"]), radius=cfg.get("radius"),
                         mean_daughters=cfg.get("mean_daughters"), seed=seed, intensity=intensity)
    return gc, w


def cmd_simulate(args) -> int:
    gc, w = generator_config(_load_json(args.config))
    pattern = simulate(gc, w)
    out = Path(args.out)
    write_points_csv(out, pattern)
    sidecar = {"schema_version": CONFIG_SCHEMA, "generator": gc.to_dict(), "window": w.to_dict(),
               "n_points": len(pattern), "version": __version__}
    Path(f"{out}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{len(pattern)} points -> {out}")
    return 0


BENCH_KEYS = {"schema_version", "intensity_ids", "families", "n_reps", "selectors", "kernel",
              "grid_resolution", "master_seed", "alpha", "search"}


def experiment_configs(cfg: dict) -> list[ExperimentConfig]:
    _strict(cfg, BENCH_KEYS, "benchmark config")
    base = ExperimentConfig()
    kw = {}
    for key in ("intensity_ids", "families"):
        if key in cfg:
            kw[key] = tuple(cfg[key])
    for key in ("n_reps", "grid_resolution", "master_seed"):
        if key in cfg:
            kw[key] = int(cfg[key])
    if "kernel" in cfg:
        kw["kernel"] = parse_kernel(cfg["kernel"], 2)
    if "alpha" in cfg:
        kw["alpha"] = _parse_alpha(cfg["alpha"], 2)
    if "search" in cfg:
        kw["search"] = _search_from(cfg["search"])
    selectors = cfg.get("selectors", list(SELECTORS))
    if isinstance(selectors, str):
        selectors = [selectors]
    return [replace(base, selector=sel, **kw) for sel in selectors]


def cmd_benchmark(args) -> int:
    configs = experiment_configs(_load_json(args.config))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for cfg in configs:
        rep = run_experiment(cfg, threads=args.threads)
        reports[cfg.selector] = rep
        (out / f"report_{cfg.selector}.txt").write_text(rep.format_table(), encoding="utf-8")
        rep.records_to_csv(out / f"records_{cfg.selector}.csv")
        sys.stdout.write(rep.format_table() + "\n")
    write_reports_csv(out / "report.csv", list(reports.values()))
    if "global" in reports and "adaptive" in reports:
        text = format_comparison(compare_selectors(reports["global"], reports["adaptive"]))
        (out / "comparison.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
    total = sum(len(r.records) for r in reports.values())
    failed = sum(r.n_failed for r in reports.values())
    if failed:
        log.warning("%d of %d replications failed or did not converge", failed, total)
    return 0 if total and (1 - failed / total) >= MIN_SUCCESS else 2


def _version_text() -> str:
    return (f"spatint {__version__} (schemas: points-csv {POINTS_CSV_SCHEMA}, raster {RASTER_SCHEMA}, "
            f"trace {TRACE_SCHEMA}, report {REPORT_SCHEMA}, config {CONFIG_SCHEMA})")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spatint", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=_version_text())
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, points=True):
        if points:
            sp.add_argument("points", help="CSV with header x,y (or x1..xd)")
            sp.add_argument("--window", help="xmin,xmax,ymin,ymax[,...]")
            sp.add_argument("--config", help="JSON run config; explicit flags override it")
            sp.add_argument("--kernel", help="gaussian | box | beta:<gamma> (default gaussian)")
            sp.add_argument("--alpha", help="Abramson power, a number or inv-d (default -0.5)")
            sp.add_argument("--adaptive", action="store_true", help="two-step adaptive selection")
            sp.add_argument("--pilot-h", type=float, help="fix the pilot bandwidth instead of selecting it")
            sp.add_argument("--h-min", type=float)
            sp.add_argument("--h-max", type=float)
            sp.add_argument("--n-h", type=int)
            sp.add_argument("--trace", help="prefix for criterion trace CSVs (default: points file stem)")
        sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("select", help="select global / adaptive bandwidths")
    common(sp)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("estimate", help="rasterise an intensity estimate")
    common(sp)
    sp.add_argument("--h", type=float, help="bandwidth (adaptive: the global multiplier)")
    sp.add_argument("--auto", action="store_true", help="select the bandwidth first")
    sp.add_argument("--ec", dest="edge_correction", choices=[e.value for e in EdgeCorrection])
    sp.add_argument("--resolution", help="cells per axis, e.g. 128 or 128,64 (default 128)")
    sp.add_argument("--out", required=True, help="output prefix; writes <out>.csv and <out>.asc")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("simulate", help="simulate a point pattern from a JSON config")
    sp.add_argument("config")
    sp.add_argument("--out", required=True, help="points CSV; a <out>.json sidecar is written too")
    common(sp, points=False)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("benchmark", help="run the simulation study from a JSON config")
    sp.add_argument("config")
    sp.add_argument("--out-dir", required=True)
    common(sp, points=False)
    sp.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValueError, KeyError, TypeError, OSError, NotImplementedError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
