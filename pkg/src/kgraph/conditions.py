"""Checkers for the structural hypotheses of the existence theory.

Each checker samples the relevant inequality, returns its worst margin and
reports pass when the margin is no worse than a small tolerance.  The checks
are sufficient conditions; failure does not prevent a solve.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boundary import geodesic_curvature
from .curvature import BoundaryData, PrescribedCurvature
from .errors import InputError
from .geometry import DIM, ambient_ricci_min, cylinder_mean_curvature
from .io import write_json
from .mesh import ADJACENT, INTERIOR, DiscreteDomain, parallel_curvature_field

MONOTONE_TOL = 1e-10
RICCI_TOL = 1e-8
HEIGHT_SAMPLES = 33
SIGMA_SAMPLES = 33
ENDPOINT_REFINEMENT = (1e-4, 1e-3, 1e-2)


@dataclass
class ConditionReport:
    check: str
    passed: bool
    margin: float
    tolerance: float
    worst_location: list
    samples: dict = field(default_factory=dict, repr=False)
    samples_csv_path: str | None = None

    def write(self, directory) -> Path:
        """Write ``<check>.json`` and ``<check>_samples.csv`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{self.check}_samples.csv"
        names = list(self.samples)
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            for row in zip(*(np.asarray(self.samples[k]).ravel() for k in names)):
                writer.writerow([format(float(v), ".17g") for v in row])
        self.samples_csv_path = csv_path.name
        return write_json(directory / f"{self.check}.json", self.as_dict())

    def as_dict(self) -> dict:
        return {
            "check": self.check,
            "pass": bool(self.passed),
            "margin": float(self.margin),
            "tolerance": float(self.tolerance),
            "worst_location": [float(v) for v in self.worst_location],
            "samples_csv_path": self.samples_csv_path,
        }


def _report(name, margins, locations, tol, samples):
    k = int(np.argmin(margins))
    worst = float(margins[k])
    return ConditionReport(name, worst >= -tol, worst, tol, list(np.atleast_1d(locations[k])), samples)


def _domain_points(domain: DiscreteDomain):
    return np.concatenate([domain.points, domain.dirichlet_points])


def check_flow_monotonicity(domain: DiscreteDomain, curvature: PrescribedCurvature, height: float,
                            tol: float = MONOTONE_TOL, samples: int = HEIGHT_SAMPLES) -> ConditionReport:
    """``H`` must not increase along the flow of ``Y``: ``dH/dz <= 0``.

    Sampled on every domain node over heights ``|z| <= height``.  The margin
    is the smallest value of ``-dH/dz``.
    """
    if samples < 2:
        raise InputError("need at least two height samples")
    pts = _domain_points(domain)
    z = np.linspace(-abs(height), abs(height), samples)
    X = np.repeat(pts[:, None, :], samples, axis=1)
    Z = np.broadcast_to(z, X.shape[:-1])
    margin = 0.0 - curvature.d_z(X, Z) + 0.0
    loc = np.concatenate([X, Z[..., None]], axis=-1).reshape(-1, 3)
    flat = margin.ravel()
    return _report("flow_monotonicity", flat, loc, tol,
                   {"x1": loc[:, 0], "x2": loc[:, 1], "z": loc[:, 2], "margin": flat})


def boundary_cylinder_curvature(domain: DiscreteDomain, spacing: float | None = None):
    """Samples of the boundary with the mean curvature of the Killing cylinder over them."""
    samples = domain.boundary.samples(domain.h if spacing is None else spacing)
    base, normal = geodesic_curvature(domain.chart, samples)
    h_cyl = cylinder_mean_curvature(domain.chart, samples.points, normal, base)
    return samples, h_cyl


def check_serrin(domain: DiscreteDomain, curvature: PrescribedCurvature, data: BoundaryData,
                 sigma_samples: int = SIGMA_SAMPLES, tol: float | None = None) -> ConditionReport:
    """Cylinder mean curvature dominates ``|H(y, sigma phi(y))|`` on the boundary."""
    if sigma_samples < 2:
        raise InputError("need at least two sigma samples")
    tol = 1e-8 + 2.0 * domain.h if tol is None else tol
    samples, h_cyl = boundary_cylinder_curvature(domain)
    phi = data.trace(domain.boundary, samples.points, samples.loop, samples.s)
    refine = np.array(ENDPOINT_REFINEMENT)
    sigma = np.unique(np.concatenate([np.linspace(0.0, 1.0, sigma_samples), refine, 1.0 - refine]))
    values = np.abs(curvature(np.repeat(samples.points[:, None, :], len(sigma), axis=1),
                              phi[:, None] * sigma[None, :]))
    sup_h = values.max(axis=1)
    margin = h_cyl - sup_h
    return _report("serrin", margin, samples.points, tol,
                   {"x1": samples.points[:, 0], "x2": samples.points[:, 1], "h_cyl": h_cyl,
                    "sup_abs_h": sup_h, "margin": margin})


def check_ricci_slope(domain: DiscreteDomain, curvature: PrescribedCurvature, data: BoundaryData,
                      tol: float = RICCI_TOL) -> ConditionReport:
    """``|grad H| <= H^2 + Ric/n`` evaluated at height ``phi`` of the nearest boundary point.

    Nodes without a unique nearest boundary point are skipped.
    """
    dist = domain.dist
    sel = ((domain.mask == INTERIOR) | (domain.mask == ADJACENT)) & dist.unique
    if not np.any(sel):
        raise InputError("no node with a unique nearest boundary point")
    x = domain.grid_points[sel]
    z = data.trace(domain.boundary, dist.foot[sel], dist.foot_loop[sel], dist.foot_s[sel])
    chart = domain.chart
    dx = curvature.d_x(x, z)
    dz = curvature.d_z(x, z)
    slope = np.sqrt(np.einsum("ni,nij,nj->n", dx, chart.g_inv(x), dx) + dz**2 / chart.warp(x) ** 2)
    bound = curvature(x, z) ** 2 + ambient_ricci_min(chart, x) / DIM
    margin = bound - slope
    return _report("ricci_slope", margin, x, tol,
                   {"x1": x[:, 0], "x2": x[:, 1], "z": z, "slope": slope, "bound": bound, "margin": margin})


def check_cylinder_monotonicity(domain: DiscreteDomain, tol: float | None = None) -> ConditionReport:
    """Parallel cylinders are at least as mean convex as the boundary cylinder at their foot.

    Nodes whose foot is a polygon corner are skipped: the boundary has no
    finite curvature there.
    """
    tol = 1e-8 + 2.0 * domain.h if tol is None else tol
    dist = domain.dist
    sel = ((domain.mask == INTERIOR) | (domain.mask == ADJACENT)) & dist.regular
    if not np.any(sel):
        raise InputError("regular band is empty")
    foot = domain.boundary.samples_at(dist.foot_loop[sel], dist.foot_s[sel])
    smooth = foot.corner == 0 if foot.corner is not None else np.ones(len(foot.s), dtype=bool)
    sel[sel] = smooth
    if not np.any(sel):
        raise InputError("every regular node projects onto a corner")
    foot = domain.boundary.samples_at(dist.foot_loop[sel], dist.foot_s[sel])
    inner = parallel_curvature_field(domain)[sel]
    base, normal = geodesic_curvature(domain.chart, foot)
    at_foot = cylinder_mean_curvature(domain.chart, foot.points, normal, base)
    margin = inner - at_foot
    x = domain.grid_points[sel]
    return _report("cylinder_monotonicity", margin, x, tol,
                   {"x1": x[:, 0], "x2": x[:, 1], "d": dist.distance[sel], "h_cyl_d": inner,
                    "h_cyl_foot": at_foot, "margin": margin})
