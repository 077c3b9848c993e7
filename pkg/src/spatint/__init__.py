"""Kernel intensity estimation for spatial point patterns with non-parametric
global and adaptive (Abramson) bandwidth selection."""

__version__ = "0.1.0"

from .estimators import (  # noqa: E402
    EdgeCorrection,
    IntensityField,
    ScaleFactors,
    estimate_adaptive,
    estimate_fixed,
    pilot_estimates,
    rasterize,
    scale_factors,
)
from .geometry import Grid, PointPattern, Window, make_grid, read_points_csv, write_points_csv  # noqa: E402
from .kernels import KernelSpec, box_integral, density, kernel_at_zero, parse_kernel  # noqa: E402
from .selection import (  # noqa: E402
    BandwidthResult,
    CriterionTrace,
    SearchConfig,
    criterion_T,
    select_adaptive,
    select_global,
)
