"""Run configuration: INI sections parsed into the objects the pipelines need.

Schema (all sections optional unless noted)::

    [geometry]        preset = euclidean-product | rotational | hyperbolic-leaf
                      path = chart.csv          (tabulated chart instead of a preset)
    [domain]          shape = disk | rectangle | polyline   (required)
                      center = x1, x2 ; radius = r           (disk)
                      lower = x1, x2 ; upper = x1, x2        (rectangle)
                      path = boundary.csv                    (polyline)
                      resolution = 65 ; pad = 0
    [curvature]       kind = family | table
                      c0, c1, c2, z0, spatial = one | x1 | x2 | radius2
                      path = curvature.csv                   (table)
    [boundary_data]   kind = quadratic | table
                      a0, a1, a2, a11, a12, a22              (quadratic)
                      (table values come from the ``phi`` column of the polyline file)
    [solver]          newton_tol, max_iter, initial_step, min_step, growth, backoff
    [reference]       kind = none | cap | data
                      radius, offset, center                 (cap: sqrt(R^2 - |x - c|^2) - offset)
    [barriers]        enabled = false ; mu_pad = 1 ; tol_grad = 0.0866...
    [convergence]     resolutions = 33, 65, 129
    [output]          directory = out
"""
from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .boundary import CircleBoundary, PolygonBoundary, rectangle
from .curvature import BoundaryData, PrescribedCurvature, curvature_family, quadratic_data, tabulated_curvature
from .errors import ConfigError, InputError
from .mesh import MIN_RESOLUTION, read_polyline_csv
from .solver import Schedule

SECTIONS = ("geometry", "domain", "curvature", "boundary_data", "solver", "reference", "barriers",
            "convergence", "output")


@dataclass
class Reference:
    kind: str = "none"
    radius: float = 1.0
    offset: float = 0.0
    center: tuple = (0.0, 0.0)

    def exact(self, data: BoundaryData):
        """Analytic solution as a function of chart points, or ``None``."""
        if self.kind == "none":
            return None
        if self.kind == "data":
            return data
        c = np.asarray(self.center, dtype=float)
        return lambda x: np.sqrt(self.radius**2 - np.sum((np.asarray(x) - c) ** 2, axis=-1)) - self.offset


@dataclass
class RunConfig:
    source: Path
    text: str
    chart: geometry.GeometryChart
    boundary: object
    resolution: int
    pad: int
    curvature: PrescribedCurvature
    data: BoundaryData
    schedule: Schedule
    newton_tol: float
    max_iter: int
    reference: Reference
    barriers: bool
    mu_pad: float
    tol_grad: float
    resolutions: list
    output: Path
    raw: dict = field(default_factory=dict, repr=False)


def _floats(text, count=None, key="value"):
    try:
        vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"{key}: expected {count} numbers, got {len(vals)}")
    return vals


def _path(base: Path, text: str) -> Path:
    p = Path(text)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError(f"referenced file does not exist: {p}")
    return p


def _rows(path: Path, required):
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not set(required) <= set(rows[0]):
        raise ConfigError(f"{path.name}: needs columns {', '.join(required)}")
    try:
        return {k: np.array([float(r[k]) for r in rows]) for k in required}
    except ValueError as exc:
        raise ConfigError(f"{path.name}: {exc}") from None


def _tensor_axes(columns, names):
    axes = [np.unique(columns[n]) for n in names]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != len(columns[names[0]]):
        raise ConfigError("tabulated values must fill a tensor grid")
    idx = tuple(np.searchsorted(a, columns[n]) for a, n in zip(axes, names))
    return axes, shape, idx


def load_chart(section, base: Path):
    if "path" in section:
        cols = _rows(_path(base, section["path"]), ("x1", "x2", "g11", "g12", "g22", "rho"))
        (x1, x2), shape, idx = _tensor_axes(cols, ("x1", "x2"))
        grids = {}
        for key in ("g11", "g12", "g22", "rho"):
            grid = np.empty(shape)
            grid[idx] = cols[key]
            grids[key] = grid
        return geometry.tabulated(x1, x2, grids["g11"], grids["g12"], grids["g22"], grids["rho"])
    try:
        return geometry.preset(section.get("preset", "euclidean-product"))
    except InputError as exc:
        raise ConfigError(str(exc)) from None


def load_boundary(section, base: Path):
    shape = section.get("shape")
    trace = None
    if shape == "disk":
        boundary = CircleBoundary(_floats(section.get("center", "0, 0"), 2, "center"),
                                  float(section.get("radius", "1")))
    elif shape == "rectangle":
        boundary = rectangle(_floats(section["lower"], 2, "lower"), _floats(section["upper"], 2, "upper"))
    elif shape == "polyline":
        loops, trace = read_polyline_csv(_path(base, section["path"]))
        boundary = PolygonBoundary(loops)
    else:
        raise ConfigError(f"domain shape must be disk, rectangle or polyline, got {shape!r}")
    return boundary, trace


def load_curvature(section, base: Path):
    kind = section.get("kind", "family")
    if kind == "family":
        return curvature_family(*(float(section.get(k, d)) for k, d in
                                  (("c0", "0"), ("c1", "0"), ("c2", "0"), ("z0", "1"))),
                                spatial=section.get("spatial", "one"))
    if kind == "table":
        cols = _rows(_path(base, section["path"]), ("x1", "x2", "z", "H"))
        axes, shape, idx = _tensor_axes(cols, ("x1", "x2", "z"))
        table = np.empty(shape)
        table[idx] = cols["H"]
        return tabulated_curvature(*axes, table)
    raise ConfigError(f"curvature kind must be family or table, got {kind!r}")


def load_data(section, boundary, trace):
    kind = section.get("kind", "quadratic")
    if kind == "quadratic":
        return quadratic_data(*(float(section.get(k, "0")) for k in ("a0", "a1", "a2", "a11", "a12", "a22")))
    if kind == "table":
        if trace is None or not isinstance(boundary, PolygonBoundary):
            raise ConfigError("tabulated boundary data needs a polyline domain with a phi column")
        return BoundaryData(vertex_values=boundary.align_vertex_values(trace), label="vertex table")
    raise ConfigError(f"boundary_data kind must be quadratic or table, got {kind!r}")


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    if not parser.has_section("domain"):
        raise ConfigError("missing [domain] section")
    sec = {name: parser[name] if parser.has_section(name) else {} for name in SECTIONS}
    base = path.parent
    try:
        chart = load_chart(sec["geometry"], base)
        boundary, trace = load_boundary(sec["domain"], base)
        curvature = load_curvature(sec["curvature"], base)
        data = load_data(sec["boundary_data"], boundary, trace)
        resolution = int(sec["domain"].get("resolution", "65"))
        pad = int(sec["domain"].get("pad", "0"))
        solver = sec["solver"]
        schedule = Schedule(*(float(solver.get(k, d)) for k, d in
                              (("initial_step", "0.25"), ("min_step", "1e-4"), ("growth", "2"), ("backoff", "0.5"))))
        newton_tol = float(solver.get("newton_tol", "1e-10"))
        max_iter = int(solver.get("max_iter", "50"))
        ref = sec["reference"]
        reference = Reference(ref.get("kind", "none"), float(ref.get("radius", "1")), float(ref.get("offset", "0")),
                              tuple(_floats(ref.get("center", "0, 0"), 2, "center")))
        bar = sec["barriers"]
        barriers = str(bar.get("enabled", "false")).strip().lower() in ("1", "true", "yes", "on")
        mu_pad = float(bar.get("mu_pad", "1"))
        tol_grad = float(bar.get("tol_grad", repr(float(0.05 * np.sqrt(3.0)))))
        resolutions = [int(v) for v in _floats(sec["convergence"].get("resolutions", str(resolution)),
                                               key="resolutions")]
        output = Path(sec["output"].get("directory", "out"))
    except (KeyError, ValueError, InputError) as exc:
        raise ConfigError(f"{path.name}: {exc}") from None
    if reference.kind not in ("none", "cap", "data"):
        raise ConfigError(f"reference kind must be none, cap or data, got {reference.kind!r}")
    if resolution < MIN_RESOLUTION or any(n < MIN_RESOLUTION for n in resolutions):
        raise ConfigError(f"resolution must be at least {MIN_RESOLUTION}")
    if min(schedule.initial_step, schedule.min_step, schedule.growth, schedule.backoff) <= 0:
        raise ConfigError("schedule parameters must be positive")
    if newton_tol <= 0 or max_iter < 1 or mu_pad <= 0:
        raise ConfigError("newton_tol, max_iter and mu_pad must be positive")
    return RunConfig(path, text, chart, boundary, resolution, pad, curvature, data, schedule, newton_tol,
                     max_iter, reference, barriers, mu_pad, tol_grad, resolutions, output,
                     {name: dict(sec[name]) for name in SECTIONS})
