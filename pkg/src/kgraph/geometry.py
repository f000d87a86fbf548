"""Warped-product geometry of the base chart.

The ambient manifold is the warped product ``g + rho**2 dz**2`` over a
two-dimensional chart.  ``Y = d/dz`` is the Killing field and ``rho = |Y|``.
All routines are vectorised over a trailing coordinate axis: a point array has
shape ``(..., 2)`` and tensors carry their indices last.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import ContractError, DomainError, InputError

DIM = 2
FIRST_STEP = 1e-5
SECOND_STEP = 1e-4
UNIT_TOL = 1e-8

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GeometryChart:
    """Metric ``g`` and warping ``rho`` on a 2D chart.

    Only ``metric`` and ``rho`` are required.  Missing derivative callbacks
    fall back to central differences with step ``FIRST_STEP * scale`` for first
    derivatives and ``SECOND_STEP * scale`` for second derivatives.

    Attributes
    ----------
    metric_deriv : callable, optional
        ``x -> dg`` with ``dg[..., k, i, j] = d_k g_ij``.
    point_distance : callable, optional
        Closed-form geodesic distance ``(x, y) -> d(x, y)`` in ``(M, g)``.
    valid : callable, optional
        ``x -> bool`` mask of chart points.
    """

    name: str
    metric: ArrayFn
    rho: ArrayFn
    metric_deriv: Optional[ArrayFn] = None
    rho_grad: Optional[ArrayFn] = None
    rho_hess: Optional[ArrayFn] = None
    ricci_base: Optional[ArrayFn] = None
    point_distance: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    valid: Optional[ArrayFn] = None
    scale: float = 1.0
    exact_christoffel: bool = field(default=False)

    dim = DIM

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != DIM:
            raise ContractError(f"points must have trailing dimension {DIM}")
        if self.valid is not None and not np.all(self.valid(x)):
            raise DomainError(f"point outside the {self.name} chart")
        return x

    def g(self, x) -> np.ndarray:
        return self.metric(self.check(x))

    def g_inv(self, x) -> np.ndarray:
        return np.linalg.inv(self.g(x))

    def warp(self, x) -> np.ndarray:
        return self.rho(self.check(x))

    def dg(self, x) -> np.ndarray:
        x = self.check(x)
        if self.metric_deriv is not None:
            return self.metric_deriv(x)
        return _gradient(self.metric, x, FIRST_STEP * self.scale)

    def grad_rho(self, x) -> np.ndarray:
        x = self.check(x)
        if self.rho_grad is not None:
            return self.rho_grad(x)
        return _gradient(self.rho, x, FIRST_STEP * self.scale)

    def hess_rho(self, x) -> np.ndarray:
        """Chart second partials of ``rho`` (not the covariant Hessian)."""
        x = self.check(x)
        if self.rho_hess is not None:
            return self.rho_hess(x)
        if self.rho_grad is not None:
            return _gradient(self.rho_grad, x, FIRST_STEP * self.scale)
        return _second_partials(self.rho, x, SECOND_STEP * self.scale)

    def christoffel(self, x) -> np.ndarray:
        """``gamma[..., k, i, j] = Gamma^k_ij`` of the Levi-Civita connection."""
        x = self.check(x)
        dg = self.dg(x)
        ginv = np.linalg.inv(self.metric(x))
        # lowered[l, i, j] = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
        lowered = 0.5 * (
            np.einsum("...ilj->...lij", dg)
            + np.einsum("...jli->...lij", dg)
            - dg
        )
        return np.einsum("...kl,...lij->...kij", ginv, lowered)

    def ricci(self, x) -> np.ndarray:
        """Ricci tensor of ``(M, g)`` with lower indices."""
        x = self.check(x)
        if self.ricci_base is not None:
            return self.ricci_base(x)
        gamma = self.christoffel(x)
        dgamma = _gradient(self.christoffel, x, SECOND_STEP * self.scale)
        # dgamma[..., m, k, i, j] = d_m Gamma^k_ij
        term1 = np.einsum("...kkij->...ij", dgamma)
        term2 = np.einsum("...jkik->...ij", dgamma)
        term3 = np.einsum("...kkl,...lij->...ij", gamma, gamma)
        term4 = np.einsum("...kjl,...lik->...ij", gamma, gamma)
        return term1 - term2 + term3 - term4


def _gradient(fn: ArrayFn, x: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient; the derivative index is inserted after the batch axes."""
    batch = x.shape[:-1]
    parts = []
    for axis in range(DIM):
        shift = np.zeros(DIM)
        shift[axis] = step
        parts.append((fn(x + shift) - fn(x - shift)) / (2.0 * step))
    out = np.stack(parts, axis=len(batch))
    return out


def _second_partials(fn: ArrayFn, x: np.ndarray, step: float) -> np.ndarray:
    batch = x.shape[:-1]
    out = np.empty(batch + (DIM, DIM))
    f0 = fn(x)
    for a in range(DIM):
        ea = np.zeros(DIM)
        ea[a] = step
        out[..., a, a] = (fn(x + ea) - 2.0 * f0 + fn(x - ea)) / step**2
        for b in range(a + 1, DIM):
            eb = np.zeros(DIM)
            eb[b] = step
            mixed = (fn(x + ea + eb) - fn(x + ea - eb) - fn(x - ea + eb) + fn(x - ea - eb)) / (4 * step**2)
            out[..., a, b] = mixed
            out[..., b, a] = mixed
    return out


def _identity(x):
    return np.broadcast_to(np.eye(DIM), x.shape[:-1] + (DIM, DIM)).copy()


def _zeros(*tail):
    def fn(x):
        return np.zeros(x.shape[:-1] + tail)
    return fn


def euclidean_product() -> GeometryChart:
    """Flat chart with ``rho = 1``: the Riemannian product with a line."""
    return GeometryChart(
        name="euclidean-product",
        metric=_identity,
        rho=lambda x: np.ones(x.shape[:-1]),
        metric_deriv=_zeros(DIM, DIM, DIM),
        rho_grad=_zeros(DIM),
        rho_hess=_zeros(DIM, DIM),
        ricci_base=_zeros(DIM, DIM),
        point_distance=lambda x, y: np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1),
        exact_christoffel=True,
    )


def rotational() -> GeometryChart:
    """Meridian half-plane ``(r, z)`` of Euclidean space; ``Y`` is the rotation field."""

    def rho_grad(x):
        out = np.zeros(x.shape)
        out[..., 0] = 1.0
        return out

    return GeometryChart(
        name="rotational",
        metric=_identity,
        rho=lambda x: x[..., 0].copy(),
        metric_deriv=_zeros(DIM, DIM, DIM),
        rho_grad=rho_grad,
        rho_hess=_zeros(DIM, DIM),
        ricci_base=_zeros(DIM, DIM),
        point_distance=lambda x, y: np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1),
        valid=lambda x: x[..., 0] > 0.0,
        exact_christoffel=True,
    )


def hyperbolic_leaf() -> GeometryChart:
    """Upper half-plane ``(x2, x3)`` of hyperbolic space with ``rho = 1/x3``."""

    def metric(x):
        return _identity(x) / x[..., 1, None, None] ** 2

    def metric_deriv(x):
        out = np.zeros(x.shape[:-1] + (DIM, DIM, DIM))
        val = -2.0 / x[..., 1] ** 3
        out[..., 1, 0, 0] = val
        out[..., 1, 1, 1] = val
        return out

    def rho_grad(x):
        out = np.zeros(x.shape)
        out[..., 1] = -1.0 / x[..., 1] ** 2
        return out

    def rho_hess(x):
        out = np.zeros(x.shape[:-1] + (DIM, DIM))
        out[..., 1, 1] = 2.0 / x[..., 1] ** 3
        return out

    def distance(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        chord = np.linalg.norm(x - y, axis=-1)
        return 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(x[..., 1] * y[..., 1])))

    return GeometryChart(
        name="hyperbolic-leaf",
        metric=metric,
        rho=lambda x: 1.0 / x[..., 1],
        metric_deriv=metric_deriv,
        rho_grad=rho_grad,
        rho_hess=rho_hess,
        ricci_base=lambda x: -metric(x),
        point_distance=distance,
        valid=lambda x: x[..., 1] > 0.0,
        exact_christoffel=True,
    )


def tabulated(x1: np.ndarray, x2: np.ndarray, g11, g12, g22, rho, name="tabulated") -> GeometryChart:
    """Chart built from per-node metric components on a tensor grid.

    Components are interpolated by bicubic splines; Christoffel symbols and
    curvature then come from finite differences of the interpolant.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.size < 4 or x2.size < 4:
        raise InputError("tabulated charts need at least 4 nodes per axis")
    splines = [RectBivariateSpline(x1, x2, np.asarray(c, dtype=float)) for c in (g11, g12, g22, rho)]
    lo = np.array([x1[0], x2[0]])
    hi = np.array([x1[-1], x2[-1]])
    span = float(max(hi - lo))

    def ev(spline, x):
        flat = x.reshape(-1, DIM)
        return spline.ev(flat[:, 0], flat[:, 1]).reshape(x.shape[:-1])

    def metric(x):
        a, b, c = (ev(s, x) for s in splines[:3])
        return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

    def valid(x):
        # the finite-difference halo may step slightly past the table
        pad = 10 * SECOND_STEP * span
        return np.all((x >= lo - pad) & (x <= hi + pad), axis=-1)

    return GeometryChart(
        name=name,
        metric=metric,
        rho=lambda x: ev(splines[3], x),
        valid=valid,
        scale=span,
    )


PRESETS = {
    "euclidean-product": euclidean_product,
    "rotational": rotational,
    "hyperbolic-leaf": hyperbolic_leaf,
}


def preset(name: str) -> GeometryChart:
    try:
        return PRESETS[name]()
    except KeyError:
        raise InputError(f"unknown geometry preset {name!r}; choose from {sorted(PRESETS)}") from None


def tangential_Y_acceleration(chart: GeometryChart, x) -> np.ndarray:
    """Chart components of ``nabla_Y Y = -1/2 grad(rho^2)``."""
    x = chart.check(x)
    rho = chart.warp(x)
    covector = rho[..., None] * chart.grad_rho(x)
    return -np.einsum("...ij,...j->...i", chart.g_inv(x), covector)


def covariant_hessian_rho(chart: GeometryChart, x) -> np.ndarray:
    x = chart.check(x)
    return chart.hess_rho(x) - np.einsum("...kij,...k->...ij", chart.christoffel(x), chart.grad_rho(x))


def ambient_ricci_form(chart: GeometryChart, x) -> np.ndarray:
    """Ambient Ricci restricted to the leaf: ``Ric_g - Hess rho / rho``."""
    x = chart.check(x)
    return chart.ricci(x) - covariant_hessian_rho(chart, x) / chart.warp(x)[..., None, None]


def ambient_ricci_min(chart: GeometryChart, x) -> np.ndarray:
    """Smallest ambient Ricci curvature over unit directions tangent to the leaf."""
    x = chart.check(x)
    form = ambient_ricci_form(chart, x)
    lower = np.linalg.cholesky(chart.g(x))
    inv = np.linalg.inv(lower)
    reduced = inv @ form @ np.swapaxes(inv, -1, -2)
    reduced = 0.5 * (reduced + np.swapaxes(reduced, -1, -2))
    return np.linalg.eigvalsh(reduced)[..., 0]


def metric_norm(chart: GeometryChart, x, vector) -> np.ndarray:
    g = chart.g(x)
    vector = np.asarray(vector, dtype=float)
    return np.sqrt(np.einsum("...i,...ij,...j->...", vector, g, vector))


def flow_line_curvature(chart: GeometryChart, x, normal) -> np.ndarray:
    """``rho^-2 <nabla_Y Y, N>``: contribution of the flow lines to the cylinder curvature."""
    x = chart.check(x)
    normal = np.asarray(normal, dtype=float)
    accel = tangential_Y_acceleration(chart, x)
    pairing = np.einsum("...i,...ij,...j->...", accel, chart.g(x), normal)
    return pairing / chart.warp(x) ** 2


def cylinder_mean_curvature(chart: GeometryChart, x, normal, base_curvature) -> np.ndarray:
    """Mean curvature of the Killing cylinder over a hypersurface of the leaf.

    Parameters
    ----------
    normal : array_like
        Unit normal (in ``g``) of the base hypersurface, chart components.
    base_curvature : array_like
        Mean curvature of the base hypersurface with respect to ``normal``.
    """
    x = chart.check(x)
    norm = metric_norm(chart, x, normal)
    if np.any(np.abs(norm - 1.0) > UNIT_TOL):
        raise ContractError("normal must be a unit vector for the chart metric")
    kappa = flow_line_curvature(chart, x, normal)
    return ((DIM - 1) * np.asarray(base_curvature, dtype=float) + kappa) / DIM


@dataclass
class AmbientTermCache:
    """Per-node geometric quantities reused by every residual evaluation."""

    points: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    gamma: np.ndarray
    trace_gamma: np.ndarray
    rho: np.ndarray
    accel: np.ndarray
    ricci_min: np.ndarray

    @classmethod
    def build(cls, chart: GeometryChart, points) -> "AmbientTermCache":
        points = chart.check(np.asarray(points, dtype=float))
        g = chart.g(points)
        g_inv = np.linalg.inv(g)
        gamma = chart.christoffel(points)
        return cls(
            points=points,
            g=g,
            g_inv=g_inv,
            gamma=gamma,
            trace_gamma=np.einsum("...ij,...kij->...k", g_inv, gamma),
            rho=chart.warp(points),
            accel=tangential_Y_acceleration(chart, points),
            ricci_min=ambient_ricci_min(chart, points),
        )
