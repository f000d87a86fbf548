"""Discrete prescribed-mean-curvature operator for Killing graphs.

For a graph ``z = u(x)`` the operator reads

    Q u = W^2 Lap u - Hess u(grad u, grad u)
          - rho^-2 (rho^-2 + W^2) <V, grad u> + n sigma H(x, u) W^3,

with ``W^2 = rho^-2 + |grad u|^2`` and ``V = nabla_Y Y``.  ``H`` is measured
so that the upward spherical cap of radius ``R`` has ``H = 1/R``.

Residual rows of cut nodes are multiplied by their shortest arm fraction.
This keeps every row on the same ``1/h^2`` scale and is used consistently by
the solver, so the discrete solution is unchanged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .curvature import BoundaryData, PrescribedCurvature
from .errors import ContractError, CutLocusError, NumericError
from .geometry import DIM
from .mesh import DiscreteDomain, DiscreteField, distance_derivatives, parallel_curvature_field

log = logging.getLogger(__name__)

W_FLOOR = 1e-8


@dataclass(frozen=True)
class OperatorContext:
    domain: DiscreteDomain
    curvature: PrescribedCurvature
    sigma: float = 1.0

    def at(self, sigma: float) -> "OperatorContext":
        return replace(self, sigma=float(sigma))

    @property
    def w_floor(self) -> float:
        return W_FLOOR / float(self.domain.cache.rho.max())


def derivatives(domain: DiscreteDomain, interior, trace):
    """Discrete ``(p, U)``: covariant gradient components and chart second partials."""
    q = np.einsum("nms,ns->nm", domain.stencil, domain.stencil_values(interior, trace))
    p = q[:, :2]
    U = np.empty((len(q), 2, 2))
    U[:, 0, 0] = q[:, 2]
    U[:, 0, 1] = U[:, 1, 0] = q[:, 3]
    U[:, 1, 1] = q[:, 4]
    return p, U


def _pointwise(ctx: OperatorContext, x, u, p, U, cache, want_jac=False):
    """Operator and its partial derivatives from pointwise jet data."""
    G = cache.g_inv
    gamma = cache.gamma
    inv_rho2 = 1.0 / cache.rho**2
    V = cache.accel
    P = np.einsum("nij,nj->ni", G, p)
    S = np.einsum("ni,ni->n", p, P)
    W2 = inv_rho2 + S
    W = np.sqrt(W2)
    if np.any(W < ctx.w_floor):
        log.warning("W floor active at %d nodes", int(np.sum(W < ctx.w_floor)))
        W = np.maximum(W, ctx.w_floor)
    hess = U - np.einsum("nkij,nk->nij", gamma, p)
    lap = np.einsum("nij,nij->n", G, hess)
    hpp = np.einsum("ni,nj,nij->n", P, P, hess)
    Vp = np.einsum("ni,ni->n", V, p)
    H = ctx.curvature(x, u)
    nsig = DIM * ctx.sigma
    value = W2 * lap - hpp - inv_rho2 * (2 * inv_rho2 + S) * Vp + nsig * H * W**3
    if not want_jac:
        return value, None
    dU = W2[:, None, None] * G - P[:, :, None] * P[:, None, :]
    dp = (
        2 * P * lap[:, None]
        - W2[:, None] * cache.trace_gamma
        - 2 * np.einsum("nik,nj,nij->nk", G, P, hess)
        + np.einsum("ni,nj,nkij->nk", P, P, gamma)
        - inv_rho2[:, None] * (2 * P * Vp[:, None] + (2 * inv_rho2 + S)[:, None] * V)
        + (3 * nsig * H * W)[:, None] * P
    )
    dz = nsig * ctx.curvature.d_z(x, u) * W**3
    partial = np.stack([dp[:, 0], dp[:, 1], dU[:, 0, 0], 2 * dU[:, 0, 1], dU[:, 1, 1]], axis=1)
    return value, (partial, dz)


def residual(ctx: OperatorContext, u: DiscreteField, weighted: bool = True) -> np.ndarray:
    """Operator at every unknown node."""
    domain = ctx.domain
    p, U = derivatives(domain, u.interior, u.trace)
    with np.errstate(over="ignore", invalid="ignore"):
        value, _ = _pointwise(ctx, domain.points, u.interior, p, U, domain.cache)
    bad = ~np.isfinite(value)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite residual at node {tuple(int(v) for v in domain.nodes[k])}, "
                           f"x = {tuple(float(v) for v in domain.points[k])}")
    if weighted:
        value = value * domain.row_weight
    return value


def jacobian(ctx: OperatorContext, u: DiscreteField, weighted: bool = True) -> sp.csr_matrix:
    """Exact derivative of :func:`residual` with respect to the unknown values."""
    domain = ctx.domain
    p, U = derivatives(domain, u.interior, u.trace)
    _, (partial, dz) = _pointwise(ctx, domain.points, u.interior, p, U, domain.cache, want_jac=True)
    coeff = np.einsum("nm,nms->ns", partial, domain.stencil)
    coeff[:, 0] += dz
    if weighted:
        coeff *= domain.row_weight[:, None]
    n = domain.n_unknowns
    rows = np.repeat(np.arange(n), 9).reshape(n, 9)
    cols = np.empty((n, 9), dtype=np.int64)
    cols[:, 0] = np.arange(n)
    cols[:, 1:] = domain.arm_target
    keep = np.ones((n, 9), dtype=bool)
    keep[:, 1:] = domain.arm_kind == 0
    return sp.csr_matrix((coeff[keep], (rows[keep], cols[keep])), shape=(n, n))


def gradient_norm(domain: DiscreteDomain, u: DiscreteField) -> np.ndarray:
    """``|grad u|_g`` at the unknown nodes."""
    p, _ = derivatives(domain, u.interior, u.trace)
    return np.sqrt(np.einsum("ni,nij,nj->n", p, domain.cache.g_inv, p))


@dataclass(frozen=True)
class Profile:
    """A one-variable profile ``psi`` with its first two derivatives."""

    value: callable
    d1: callable
    d2: callable

    def scaled(self, factor: float) -> "Profile":
        return Profile(lambda t: factor * self.value(t), lambda t: factor * self.d1(t),
                       lambda t: factor * self.d2(t))


ZERO_PROFILE = Profile(np.zeros_like, np.zeros_like, np.zeros_like)


def transformed_residual(ctx: OperatorContext, profile: Profile, data: BoundaryData, nodes=None):
    """Operator applied to ``w = psi(d) + phi`` through the distance-function identity.

    The Laplacian of ``w`` is not differentiated on the grid; it is rebuilt
    from ``psi'``, ``psi''``, the mean curvature of the parallel cylinders and
    pointwise derivatives of ``phi``.  Only nodes of the regular band qualify.

    Parameters
    ----------
    nodes : array of int, optional
        Indices of unknown nodes; defaults to every regular unknown.

    Returns
    -------
    values : ndarray
    nodes : ndarray of int
    """
    domain = ctx.domain
    if not data.has_extension:
        raise ContractError("the transformed residual needs a global extension of the boundary data")
    regular = domain.unknown_regular
    if nodes is None:
        nodes = np.flatnonzero(regular)
    nodes = np.asarray(nodes, dtype=np.int64)
    if not np.all(regular[nodes]):
        raise CutLocusError("transformed residual requested outside the regular band")
    ij = domain.nodes[nodes]
    x = domain.points[nodes]
    cache = domain.cache
    G = cache.g_inv[nodes]
    gamma = cache.gamma[nodes]
    inv_rho2 = 1.0 / cache.rho[nodes] ** 2
    V = cache.accel[nodes]

    grad_d, hess_d = distance_derivatives(domain)
    dd = grad_d[ij[:, 0], ij[:, 1]]
    hess_dist = hess_d[ij[:, 0], ij[:, 1]] - np.einsum("nkij,nk->nij", gamma, dd)
    h_cyl = parallel_curvature_field(domain)[ij[:, 0], ij[:, 1]]
    t = domain.dist.distance[ij[:, 0], ij[:, 1]]
    d1 = profile.d1(t)
    d2 = profile.d2(t)

    p_phi = data.gradient(x)
    hess_phi = data.hessian(x) - np.einsum("nkij,nk->nij", gamma, p_phi)
    p_w = d1[:, None] * dd + p_phi
    grad_w = np.einsum("nij,nj->ni", G, p_w)
    grad_phi = np.einsum("nij,nj->ni", G, p_phi)
    grad_dist = np.einsum("nij,nj->ni", G, dd)
    W2 = inv_rho2 + np.einsum("ni,ni->n", p_w, grad_w)
    W = np.maximum(np.sqrt(W2), ctx.w_floor)
    w = profile.value(t) + data(x)
    lap_phi = np.einsum("nij,nij->n", G, hess_phi)
    value = (
        -DIM * d1 * W2 * h_cyl
        - d1 * np.einsum("ni,nj,nij->n", grad_phi, grad_phi, hess_dist)
        + d2 * W2
        - d2 * np.einsum("ni,ni->n", grad_dist, p_w) ** 2
        + W2 * lap_phi
        - np.einsum("ni,nj,nij->n", grad_w, grad_w, hess_phi)
        - inv_rho2**2 * np.einsum("ni,ni->n", V, p_w)
        - inv_rho2 * W2 * np.einsum("ni,ni->n", V, p_phi)
        + DIM * ctx.sigma * ctx.curvature(x, w) * W**3
    )
    return value, nodes
