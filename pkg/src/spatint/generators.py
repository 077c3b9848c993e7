"""Seeded simulation of Poisson, Matérn cluster and Matérn II hard-core patterns.

Random streams
--------------
Every sampler accepts ``seed`` as anything :func:`numpy.random.default_rng`
understands (an int, a ``SeedSequence`` or a ``Generator``). Bit streams
come from PCG64. Independent substreams are derived with
:func:`substream`: ``SeedSequence(master_seed, spawn_key=key)`` where
``key`` is a tuple of non-negative integers, e.g. ``(intensity_id,
family_index, replication)`` in the benchmark. A substream depends only on
its key, never on the order in which substreams are created, so parallel
runs reproduce serial ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointPattern, Window

CLUSTER_RADIUS = 0.05

# two discs of radius 0.1 centred at (0.5, 0.6) and (0.5, 0.4)
FEATURE_CENTERS = ((0.5, 0.6), (0.5, 0.4))
FEATURE_RADIUS2 = 0.01


def substream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key)))


def substream_seed(master_seed: int, *key: int) -> int:
    """A 64-bit integer seed for ``key``; ``default_rng(seed)`` replays the replication alone."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def in_feature(points) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=float))
    hit = np.zeros(p.shape[0], dtype=bool)
    for cx, cy in FEATURE_CENTERS:
        hit |= (p[:, 0] - cx) ** 2 + (p[:, 1] - cy) ** 2 < FEATURE_RADIUS2
    return hit


@dataclass(frozen=True)
class IntensitySpec:
    """Planar intensity ``a`` (constant), ``a + b x^4`` (trend) or ``a + b 1_S`` (feature).

    For the feature form ``b`` is the full jump inside ``S``; the tabulated
    specs carry their ``/ pi`` inside ``b``.
    """

    kind: str
    a: float
    b: float = 0.0
    id: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("constant", "trend", "feature"):
            raise ValueError(f"unknown intensity kind {self.kind!r}")
        if not (self.a > 0 and self.b >= 0):
            raise ValueError("intensity needs a > 0 and b >= 0")

    def __call__(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "constant":
            return np.full(p.shape[0], float(self.a))
        if self.kind == "trend":
            return self.a + self.b * p[:, 0] ** 4
        return self.a + self.b * in_feature(p)

    @property
    def sup(self) -> float:
        """Supremum over the unit square."""
        return float(self.a) if self.kind == "constant" else float(self.a + self.b)

    def integral(self) -> float:
        """Exact integral over the unit square."""
        if self.kind == "constant":
            return float(self.a)
        if self.kind == "trend":
            return self.a + self.b / 5.0
        return self.a + self.b * len(FEATURE_CENTERS) * math.pi * FEATURE_RADIUS2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "id": self.id}


_STUDY_INTENSITIES = {
    1: ("constant", 50.0, 0.0),
    2: ("constant", 250.0, 0.0),
    3: ("trend", 5.0, 225.0),
    4: ("trend", 10.0, 200.0),
    5: ("trend", 25.0, 1125.0),
    6: ("trend", 50.0, 1000.0),
    7: ("feature", 5.0, 45 * 50 / math.pi),
    8: ("feature", 10.0, 40 * 50 / math.pi),
    9: ("feature", 25.0, 225 * 50 / math.pi),
    10: ("feature", 50.0, 200 * 50 / math.pi),
}


def study_intensity(i: int) -> IntensitySpec:
    if i not in _STUDY_INTENSITIES:
        raise ValueError(f"intensity id must be in 1..10, got {i}")
    kind, a, b = _STUDY_INTENSITIES[i]
    return IntensitySpec(kind, a, b, id=i)


def _uniform_in(w: Window, n: int, rng: np.random.Generator) -> np.ndarray:
    pts = w.lower + w.sides * rng.random((n, w.dim))
    # random() is half-open; redraw the (probability ~1e-16) boundary hits
    bad = ~w.contains(pts) if n else np.zeros(0, dtype=bool)
    while bad.any():
        pts[bad] = w.lower + w.sides * rng.random((int(bad.sum()), w.dim))
        bad = ~w.contains(pts)
    return pts


def _check_positive(**kw) -> None:
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v!r}")


def sample_homogeneous_poisson(rate: float, w: Window, seed=None) -> PointPattern:
    _check_positive(rate=rate)
    rng = np.random.default_rng(seed)
    n = rng.poisson(rate * w.volume())
    return PointPattern(_uniform_in(w, n, rng), w)


def _uniform_in_ball(n: int, r: float, dim: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((0, dim))
    while out.shape[0] < n:
        need = n - out.shape[0]
        cand = rng.uniform(-r, r, size=(2 * need + 8, dim))
        cand = cand[np.sum(cand**2, axis=1) <= r * r]
        out = np.vstack([out, cand[:need]])
    return out


def sample_matern_cluster(parent_rate: float, mean_daughters: float, radius: float,
                          w: Window, seed=None) -> PointPattern:
    """Poisson parents on ``w`` dilated by ``radius``, Poisson daughters uniform in each ball."""
    _check_positive(parent_rate=parent_rate, mean_daughters=mean_daughters, radius=radius)
    rng = np.random.default_rng(seed)
    outer = w.dilate(radius)
    parents = _uniform_in(outer, rng.poisson(parent_rate * outer.volume()), rng)
    counts = rng.poisson(mean_daughters, size=parents.shape[0])
    offsets = _uniform_in_ball(int(counts.sum()), radius, w.dim, rng)
    daughters = np.repeat(parents, counts, axis=0) + offsets
    return PointPattern(daughters[w.contains(daughters)], w)


def sample_matern_hardcore(ground_rate: float, radius: float, w: Window, seed=None) -> PointPattern:
    """Matérn type II: keep a ground point unless a higher-marked one lies within ``radius``."""
    _check_positive(ground_rate=ground_rate, radius=radius)
    if w.dim != 2:
        raise NotImplementedError("hard-core simulation is planar only")
    rng = np.random.default_rng(seed)
    outer = w.dilate(radius)
    ground = _uniform_in(outer, rng.poisson(ground_rate * outer.volume()), rng)
    marks = rng.random(ground.shape[0])
    pairs = cKDTree(ground).query_pairs(radius, output_type="ndarray")
    killed = np.zeros(ground.shape[0], dtype=bool)
    if pairs.size:
        i, j = pairs[:, 0], pairs[:, 1]
        killed[i[marks[i] < marks[j]]] = True
        killed[j[marks[j] < marks[i]]] = True
    keep = ~killed & w.contains(ground)
    return PointPattern(ground[keep], w)


def hardcore_intensity(ground_rate: float, radius: float) -> float:
    area = math.pi * radius * radius
    return -math.expm1(-ground_rate * area) / area


def thin(pattern: PointPattern, spec: IntensitySpec, base_rate: float, seed=None) -> PointPattern:
    """Keep each point independently with probability ``spec(point) / base_rate``."""
    rng = np.random.default_rng(seed)
    if len(pattern) == 0:
        return pattern
    p = spec(pattern.points) / base_rate
    if np.any(p > 1 + 1e-12):
        raise ValueError(f"retention probability {p.max():.6g} exceeds 1; base_rate below sup of intensity")
    keep = rng.random(len(pattern)) < p
    return pattern.subset(keep)


# -- configured simulation ----------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """A stationary process optionally thinned to ``intensity``.

    ``rate`` is the Poisson rate, the cluster parent rate or the hard-core
    ground rate depending on ``family``.
    """

    family: str
    rate: float
    radius: Optional[float] = None
    mean_daughters: Optional[float] = None
    seed: int = 0
    intensity: Optional[IntensitySpec] = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.family == "poisson":
            _check_positive(rate=self.rate)
        elif self.family == "matern_cluster":
            _check_positive(rate=self.rate, radius=self.radius, mean_daughters=self.mean_daughters)
        elif self.family == "matern_hardcore":
            _check_positive(rate=self.rate, radius=self.radius)
        else:
            raise ValueError(f"unknown family {self.family!r}")

    def stationary_intensity(self) -> float:
        if self.family == "poisson":
            return float(self.rate)
        if self.family == "matern_cluster":
            return float(self.rate * self.mean_daughters)
        return hardcore_intensity(self.rate, self.radius)

    def to_dict(self) -> dict:
        out = {"family": self.family, "rate": self.rate, "seed": self.seed}
        if self.radius is not None:
            out["radius"] = self.radius
        if self.mean_daughters is not None:
            out["mean_daughters"] = self.mean_daughters
        if self.intensity is not None:
            out["intensity"] = self.intensity.to_dict()
        out.update(self.extra)
        return out


def simulate(cfg: GeneratorConfig, w: Optional[Window] = None, seed=None) -> PointPattern:
    """Draw one pattern; ``seed`` overrides ``cfg.seed`` (pass a Generator to share a stream)."""
    w = w or Window.unit()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    if cfg.family == "poisson":
        pattern = sample_homogeneous_poisson(cfg.rate, w, rng)
    elif cfg.family == "matern_cluster":
        pattern = sample_matern_cluster(cfg.rate, cfg.mean_daughters, cfg.radius, w, rng)
    else:
        pattern = sample_matern_hardcore(cfg.rate, cfg.radius, w, rng)
    if cfg.intensity is not None:
        pattern = thin(pattern, cfg.intensity, cfg.stationary_intensity(), rng)
    return pattern


# the five model columns of the simulation study
FAMILIES = ("poisson", "cluster5", "cluster10", "hardcore0.9", "hardcore0.5")
FAMILY_LABELS = {
    "poisson": "Poisson",
    "cluster5": "cluster nu=5",
    "cluster10": "cluster nu=10",
    "hardcore0.9": "hard core nu=0.9",
    "hardcore0.5": "hard core nu=0.5",
}
_HARDCORE_SCALE = {0.9: 10.0, 0.5: 2.0}


def family_config(family: str, base_rate: float, intensity: Optional[IntensitySpec] = None,
                  seed: int = 0) -> GeneratorConfig:
    """Stationary process of intensity ``base_rate`` for one study column."""
    if family == "poisson":
        cfg = GeneratorConfig("poisson", base_rate)
    elif family in ("cluster5", "cluster10"):
        nu = 5.0 if family == "cluster5" else 10.0
        cfg = GeneratorConfig("matern_cluster", base_rate / nu, radius=CLUSTER_RADIUS, mean_daughters=nu)
    elif family in ("hardcore0.9", "hardcore0.5"):
        nu = 0.9 if family == "hardcore0.9" else 0.5
        m = _HARDCORE_SCALE[nu]
        cfg = GeneratorConfig("matern_hardcore", -m * base_rate * math.log(nu),
                              radius=(m * math.pi * base_rate) ** -0.5)
    else:
        raise ValueError(f"unknown study family {family!r}; choose from {', '.join(FAMILIES)}")
    return replace(cfg, seed=seed, intensity=intensity, extra={"study_family": family})


def study_config(family: str, intensity_id: int, seed: int = 0) -> GeneratorConfig:
    """Study column ``family`` thinned to study intensity ``intensity_id``."""
    spec = study_intensity(intensity_id)
    return family_config(family, spec.sup, spec, seed)
