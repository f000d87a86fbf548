"""Prescribed mean curvature ``H(x, z)`` and Dirichlet data ``phi(x)``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ContractError, InputError

STEP = 1e-6


@dataclass(frozen=True)
class PrescribedCurvature:
    """Vectorised ``H(x, z)``; ``x`` has shape ``(..., 2)`` and ``z`` shape ``(...)``.

    Derivative callbacks are optional and default to central differences.
    """

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dz: Optional[Callable] = None
    dx: Optional[Callable] = None
    label: str = "custom"

    def __call__(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.broadcast_to(np.asarray(z, dtype=float), x.shape[:-1])
        return np.broadcast_to(self.value(x, z), x.shape[:-1]).astype(float)

    def d_z(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.broadcast_to(np.asarray(z, dtype=float), x.shape[:-1])
        if self.dz is not None:
            return np.broadcast_to(self.dz(x, z), x.shape[:-1]).astype(float)
        step = STEP * (1.0 + np.abs(z))
        return (self(x, z + step) - self(x, z - step)) / (2.0 * step)

    def d_x(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.broadcast_to(np.asarray(z, dtype=float), x.shape[:-1])
        if self.dx is not None:
            return np.broadcast_to(self.dx(x, z), x.shape).astype(float)
        parts = []
        for axis in range(2):
            e = np.zeros(2)
            e[axis] = STEP
            parts.append((self(x + e, z) - self(x - e, z)) / (2.0 * STEP))
        return np.stack(parts, axis=-1)

    def negated_reflection(self) -> "PrescribedCurvature":
        """``-H(x, -z)``: the curvature seen by ``-u`` when ``u`` has curvature ``H``."""
        base = self
        return PrescribedCurvature(
            value=lambda x, z: -base(x, -z),
            dz=lambda x, z: base.d_z(x, -z),
            dx=lambda x, z: -base.d_x(x, -z),
            label=f"reflected({self.label})",
        )


def constant_curvature(c: float) -> PrescribedCurvature:
    c = float(c)
    return PrescribedCurvature(
        value=lambda x, z: np.full(np.shape(z), c),
        dz=lambda x, z: np.zeros(np.shape(z)),
        dx=lambda x, z: np.zeros(np.shape(x)),
        label=f"constant({c!r})",
    )


SPATIAL = {
    "one": (lambda x: np.ones(x.shape[:-1]), lambda x: np.zeros(x.shape)),
    "x1": (lambda x: x[..., 0], lambda x: np.stack([np.ones(x.shape[:-1]), np.zeros(x.shape[:-1])], -1)),
    "x2": (lambda x: x[..., 1], lambda x: np.stack([np.zeros(x.shape[:-1]), np.ones(x.shape[:-1])], -1)),
    "radius2": (lambda x: np.sum(x**2, axis=-1), lambda x: 2.0 * x),
}


def curvature_family(c0=0.0, c1=0.0, c2=0.0, z0=1.0, spatial="one") -> PrescribedCurvature:
    """``H = c0 + c1 s(x) + c2 tanh(z / z0)`` with ``s`` from a small library."""
    if spatial not in SPATIAL:
        raise InputError(f"unknown spatial profile {spatial!r}; choose from {sorted(SPATIAL)}")
    if z0 == 0:
        raise InputError("z0 must be non-zero")
    s, ds = SPATIAL[spatial]
    c0, c1, c2, z0 = float(c0), float(c1), float(c2), float(z0)

    def value(x, z):
        return c0 + c1 * s(x) + c2 * np.tanh(z / z0)

    def dz(x, z):
        return c2 / z0 / np.cosh(z / z0) ** 2

    def dx(x, z):
        return c1 * ds(x) * np.ones(np.shape(z))[..., None]

    return PrescribedCurvature(value=value, dz=dz, dx=dx,
                               label=f"family(c0={c0!r}, c1={c1!r}, c2={c2!r}, z0={z0!r}, s={spatial})")


def tabulated_curvature(x1, x2, z, table) -> PrescribedCurvature:
    """Cubic interpolation of ``H`` sampled on a ``(x1, x2, z)`` tensor grid."""
    table = np.asarray(table, dtype=float)
    axes = tuple(np.asarray(a, dtype=float) for a in (x1, x2, z))
    if table.shape != tuple(len(a) for a in axes):
        raise InputError("curvature table shape does not match its axes")
    method = "cubic" if min(table.shape) >= 4 else "linear"
    interp = RegularGridInterpolator(axes, table, method=method, bounds_error=False, fill_value=None)

    def value(x, z):
        pts = np.concatenate([x, np.asarray(z)[..., None]], axis=-1)
        return interp(pts.reshape(-1, 3)).reshape(pts.shape[:-1])

    return PrescribedCurvature(value=value, label="tabulated")


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet data.

    An expression (``value`` with optional ``grad``/``hess``) doubles as the
    global extension used by the barrier constructions.  A per-vertex table
    only defines the trace.
    """

    value: Optional[Callable[[np.ndarray], np.ndarray]] = None
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    vertex_values: Optional[list] = None
    label: str = "custom"

    @property
    def has_extension(self) -> bool:
        return self.value is not None

    def __call__(self, x):
        if self.value is None:
            raise ContractError("tabulated boundary data has no extension off the boundary")
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.value(x), x.shape[:-1]).astype(float)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.broadcast_to(self.grad(x), x.shape).astype(float)
        parts = []
        for axis in range(2):
            e = np.zeros(2)
            e[axis] = STEP
            parts.append((self(x + e) - self(x - e)) / (2 * STEP))
        return np.stack(parts, axis=-1)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        if self.hess is not None:
            return np.broadcast_to(self.hess(x), x.shape + (2,)).astype(float)
        step = 1e-4
        out = []
        for axis in range(2):
            e = np.zeros(2)
            e[axis] = step
            out.append((self.gradient(x + e) - self.gradient(x - e)) / (2 * step))
        hess = np.stack(out, axis=-2)
        return 0.5 * (hess + np.swapaxes(hess, -1, -2))

    def trace(self, boundary, points, loop, s):
        """Values at boundary points, from the expression or the vertex table."""
        if self.value is not None:
            return self(points)
        out = np.empty(len(s))
        for k, vals in enumerate(self.vertex_values):
            sel = loop == k
            if not np.any(sel):
                continue
            first = boundary.loop_first[k]
            knots = boundary.seg_s0[first:first + len(vals)]
            knots = np.append(knots, boundary.lengths[k])
            vals = np.append(vals, vals[0])
            out[sel] = np.interp(s[sel] % boundary.lengths[k], knots, vals)
        return out

    def shifted(self, offset: float) -> "BoundaryData":
        offset = float(offset)
        if self.value is None:
            return BoundaryData(vertex_values=[np.asarray(v) + offset for v in self.vertex_values],
                                label=f"{self.label}+{offset!r}")
        base = self
        return BoundaryData(value=lambda x: base(x) + offset, grad=base.gradient, hess=base.hessian,
                            label=f"{self.label}+{offset!r}")


def quadratic_data(a0=0.0, a1=0.0, a2=0.0, a11=0.0, a12=0.0, a22=0.0) -> BoundaryData:
    """``phi = a0 + a1 x1 + a2 x2 + a11 x1^2 + a12 x1 x2 + a22 x2^2``."""
    a0, a1, a2, a11, a12, a22 = map(float, (a0, a1, a2, a11, a12, a22))

    def value(x):
        x1, x2 = x[..., 0], x[..., 1]
        return a0 + a1 * x1 + a2 * x2 + a11 * x1**2 + a12 * x1 * x2 + a22 * x2**2

    def grad(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([a1 + 2 * a11 * x1 + a12 * x2, a2 + a12 * x1 + 2 * a22 * x2], axis=-1)

    def hess(x):
        h = np.array([[2 * a11, a12], [a12, 2 * a22]])
        return np.broadcast_to(h, x.shape[:-1] + (2, 2)).copy()

    return BoundaryData(value=value, grad=grad, hess=hess,
                        label=f"quadratic({a0!r}, {a1!r}, {a2!r}, {a11!r}, {a12!r}, {a22!r})")
