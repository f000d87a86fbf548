"""Height and boundary barriers, their certification, and the gradient dichotomy."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .conditions import check_flow_monotonicity
from .curvature import BoundaryData, PrescribedCurvature
from .errors import ContractError, CutLocusError, GeometryError, NumericError, PreconditionError
from .geometry import DIM
from .mesh import ADJACENT, INTERIOR, DiscreteDomain, DiscreteField, distance_derivatives
from .operator import OperatorContext, Profile, gradient_norm, transformed_residual

HEIGHT_SAMPLES = 17
INVARIANT_TOL = 1e-12
SQRT3 = float(np.sqrt(3.0))
FLAT_GRADIENT = 1e-12


def _sym_norm(form, g_inv):
    """Operator norm of a symmetric bilinear form with respect to the metric."""
    mixed = g_inv @ form
    return np.max(np.abs(np.linalg.eigvals(mixed).real), axis=-1)


def _domain_points(domain):
    return np.concatenate([domain.points, domain.dirichlet_points])


def _heights(level):
    return np.linspace(-level, level, HEIGHT_SAMPLES)


def data_norms(domain: DiscreteDomain, data: BoundaryData):
    """``(|phi|_0, |phi|_1, |phi|_2)`` as cumulative sums of derivative sups."""
    if not data.has_extension:
        raise ContractError("barriers need boundary data with a global extension")
    x = _domain_points(domain)
    chart = domain.chart
    g_inv = chart.g_inv(x)
    p = data.gradient(x)
    hess = data.hessian(x) - np.einsum("nkij,nk->nij", chart.christoffel(x), p)
    c0 = float(np.max(np.abs(data(x))))
    c1 = c0 + float(np.max(np.sqrt(np.einsum("ni,nij,nj->n", p, g_inv, p))))
    c2 = c1 + float(np.max(_sym_norm(hess, g_inv)))
    return c0, c1, c2


def sup_abs_curvature(domain, curvature, level):
    x = _domain_points(domain)
    z = _heights(level)
    X = np.repeat(x[:, None, :], len(z), axis=1)
    return float(np.max(np.abs(curvature(X, np.broadcast_to(z, X.shape[:-1])))))


def sup_ambient_slope(domain, curvature, level):
    x = _domain_points(domain)
    chart = domain.chart
    z = _heights(level)
    X = np.repeat(x[:, None, :], len(z), axis=1)
    Z = np.broadcast_to(z, X.shape[:-1])
    dx = curvature.d_x(X, Z)
    dz = curvature.d_z(X, Z)
    g_inv = chart.g_inv(X)
    rho = chart.warp(X)
    return float(np.max(np.sqrt(np.einsum("...i,...ij,...j->...", dx, g_inv, dx) + dz**2 / rho**2)))


@dataclass(frozen=True)
class HeightBarrier:
    """``phi_h(t) = exp(mu delta / rho_inf) / mu * (1 - exp(-mu t / rho_inf))``."""

    mu: float
    rho_inf: float
    diameter: float
    data_sup: float
    max_distance: float

    @property
    def rate(self) -> float:
        return self.mu / self.rho_inf

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(self.rate * self.diameter) / self.mu * -np.expm1(-self.rate * t)

    def d1(self, t):
        return np.exp(self.rate * (self.diameter - np.asarray(t, dtype=float))) / self.rho_inf

    def d2(self, t):
        return -self.rate * self.d1(t)

    def bound(self, t):
        return self.value(t) + self.data_sup

    @property
    def u_sup(self) -> float:
        return float(self.bound(self.max_distance))

    @property
    def profile(self) -> Profile:
        return Profile(self.value, self.d1, self.d2)


def flow_line_term(domain: DiscreteDomain) -> np.ndarray:
    """``rho^-2 <nabla_Y Y, grad d>`` on regular interior nodes (NaN elsewhere)."""
    grad, _ = distance_derivatives(domain)
    sel = domain.dist.regular & ((domain.mask == INTERIOR) | (domain.mask == ADJACENT))
    out = np.full(domain.shape, np.nan)
    x = domain.grid_points[sel]
    from .geometry import tangential_Y_acceleration
    accel = tangential_Y_acceleration(domain.chart, x)
    out[sel] = np.einsum("ni,ni->n", accel, grad[sel]) / domain.chart.warp(x) ** 2
    return out


def chart_diameter(domain: DiscreteDomain) -> float:
    chart = domain.chart
    if chart.point_distance is None:
        return 2.0 * float(domain.dist.distance.max())
    pts = domain.boundary.samples(domain.h).points
    if len(pts) > 512:
        pts = pts[:: int(np.ceil(len(pts) / 512))]
    return float(np.max(chart.point_distance(pts[:, None, :], pts[None, :, :])))


def build_height_barrier(domain: DiscreteDomain, curvature: PrescribedCurvature, data: BoundaryData,
                         mu_pad: float = 1.0) -> HeightBarrier:
    """Height barrier with ``mu = rho_inf * max(0, n sup|H| - min kappa) + mu_pad``."""
    if mu_pad <= 0:
        raise ContractError("mu_pad must be positive")
    x = _domain_points(domain)
    rho_inf = float(domain.chart.warp(x).min())
    data_sup = data_norms(domain, data)[0] if data.has_extension else float(np.max(np.abs(
        data.trace(domain.boundary, domain.dirichlet_points, domain.dirichlet_loop, domain.dirichlet_s))))
    h_sup = sup_abs_curvature(domain, curvature, data_sup)
    kappa = flow_line_term(domain)
    kappa_min = float(np.nanmin(kappa)) if np.any(np.isfinite(kappa)) else 0.0
    mu = rho_inf * max(0.0, DIM * h_sup - kappa_min) + mu_pad
    inside = (domain.mask == INTERIOR) | (domain.mask == ADJACENT)
    barrier = HeightBarrier(mu, rho_inf, chart_diameter(domain), data_sup,
                            float(domain.dist.distance[inside].max()))
    if not np.isfinite(barrier.u_sup):
        raise NumericError("height barrier overflows")
    return barrier


@dataclass(frozen=True)
class BarrierIngredients:
    n: int
    h0: float
    h1: float
    distance_c2: float
    data_c0: float
    data_c1: float
    data_c2: float
    rho_inf: float
    rho_sup: float
    accel_sup: float
    frame_sup: float
    tau: float
    u_sup: float


def barrier_constant(ing: BarrierIngredients) -> float:
    """The constant ``nu`` of the logarithmic boundary barrier."""
    if not ing.tau > 0:
        raise GeometryError("the regular band has zero width")
    values = np.array([ing.h0, ing.h1, ing.distance_c2, ing.data_c1, ing.data_c2, ing.accel_sup, ing.frame_sup])
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite barrier ingredient")
    nu = ((1.0 + 1.0 / ing.tau)
          * (1.0 + ing.n * ing.h0 + ing.distance_c2 + 2 * ing.n * ing.data_c2
             + ing.accel_sup / ing.rho_inf**2 + ing.n * ing.h1 * ing.frame_sup * ing.rho_sup**2)
          * (1.0 + 1.0 / ing.rho_inf + ing.data_c1) ** 4)
    if not np.isfinite(nu):
        raise NumericError("barrier constant overflows")
    return float(nu)


@dataclass(frozen=True)
class BoundaryBarrier:
    """``psi(t) = log(1 + k t) / nu`` on ``[0, a]`` with ``psi'(a) = 1``.

    ``k = nu exp(nu M)`` is kept through its logarithm so that large ``nu M``
    does not overflow.
    """

    nu: float
    height: float
    tau: float
    ingredients: BarrierIngredients

    @property
    def log_k(self) -> float:
        return float(np.log(self.nu) + self.nu * self.height)

    @property
    def width(self) -> float:
        return float(-np.expm1(-self.nu * self.height) / self.nu)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(t > 0, np.logaddexp(0.0, self.log_k + np.log(np.where(t > 0, t, 1.0))), 0.0) / self.nu

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        inv_k = np.exp(-self.log_k)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(t > 0, 1.0 / (self.nu * (inv_k + t)), np.exp(self.log_k - np.log(self.nu)))

    def d2(self, t):
        return -self.nu * self.d1(t) ** 2

    @property
    def profile(self) -> Profile:
        return Profile(self.value, self.d1, self.d2)

    def invariants(self, samples: int = 257) -> dict:
        a = self.width
        t = np.linspace(0.0, a, samples)
        d1 = self.d1(t)
        with np.errstate(over="ignore"):
            d2 = self.d2(t)
        return {
            "psi_at_zero": float(self.value(0.0)),
            "min_slope": float(d1.min()),
            "max_curvature": float(d2.max()),
            "max_t_slope": float(np.max(t[1:] * d1[1:])),
            "slope_at_width_minus_one": float(self.d1(a) - 1.0),
            "width": a,
            "inverse_nu": 1.0 / self.nu,
            "tau": self.tau,
        }

    def invariants_hold(self, tol: float = INVARIANT_TOL) -> bool:
        inv = self.invariants()
        return (abs(inv["psi_at_zero"]) <= tol
                and inv["min_slope"] >= 1.0 - tol
                and inv["max_curvature"] < 0.0
                and inv["max_t_slope"] <= 1.0 + tol
                and abs(inv["slope_at_width_minus_one"]) <= tol
                and inv["width"] <= inv["inverse_nu"] + tol
                and inv["inverse_nu"] < inv["tau"])


def barrier_ingredients(domain: DiscreteDomain, curvature: PrescribedCurvature, data: BoundaryData,
                        u_sup: float) -> BarrierIngredients:
    chart = domain.chart
    tau = domain.reach
    if not tau > 0:
        raise GeometryError("the regular band has zero width")
    c0, c1, c2 = data_norms(domain, data)
    x = _domain_points(domain)
    rho = chart.warp(x)
    from .geometry import tangential_Y_acceleration, metric_norm
    accel = metric_norm(chart, x, tangential_Y_acceleration(chart, x))

    inside = (domain.mask == INTERIOR) | (domain.mask == ADJACENT)
    band = inside & domain.dist.regular & (domain.dist.distance < tau)
    grad, hess = distance_derivatives(domain)
    bx = domain.grid_points[band]
    g_inv = chart.g_inv(bx)
    dd = grad[band]
    cov = hess[band] - np.einsum("nkij,nk->nij", chart.christoffel(bx), dd)
    d_c2 = (float(np.max(np.abs(domain.dist.distance[band])))
            + float(np.max(np.sqrt(np.einsum("ni,nij,nj->n", dd, g_inv, dd))))
            + float(np.max(_sym_norm(cov, g_inv))))
    return BarrierIngredients(
        n=DIM,
        h0=sup_abs_curvature(domain, curvature, c0),
        h1=sup_ambient_slope(domain, curvature, c0),
        distance_c2=d_c2,
        data_c0=c0,
        data_c1=c1,
        data_c2=c2,
        rho_inf=float(rho.min()),
        rho_sup=float(rho.max()),
        accel_sup=float(accel.max()),
        frame_sup=float(np.max(np.maximum(1.0, chart.warp(bx)))),
        tau=float(tau),
        u_sup=float(u_sup),
    )


def build_boundary_barrier(domain: DiscreteDomain, curvature: PrescribedCurvature, data: BoundaryData,
                           height: HeightBarrier) -> BoundaryBarrier:
    """Boundary barrier with the a priori height bound standing in for ``sup|u|``."""
    return boundary_barrier_from(barrier_ingredients(domain, curvature, data, height.u_sup))


def boundary_barrier_from(ing: BarrierIngredients) -> BoundaryBarrier:
    nu = barrier_constant(ing)
    if not 1.0 / nu < ing.tau:
        raise GeometryError("barrier band does not fit inside the regular band")
    return BoundaryBarrier(nu, ing.u_sup + ing.data_c0, ing.tau, ing)


@dataclass
class Certification:
    nodes: int
    super_fraction: float
    sub_fraction: float
    worst_super: float
    worst_sub: float
    certified: bool
    width: float

    def as_dict(self):
        return asdict(self)


def band_nodes(domain: DiscreteDomain, width: float) -> np.ndarray:
    d = domain.unknown_distance
    return np.flatnonzero(domain.unknown_regular & (d > 0) & (d < width))


def certify_boundary_barrier(ctx: OperatorContext, barrier: BoundaryBarrier, data: BoundaryData) -> Certification:
    """Evaluate ``Q(phi + psi(d)) < 0`` and ``Q(phi - psi(d)) > 0`` on the barrier band."""
    if barrier.width >= ctx.domain.reach:
        raise CutLocusError("barrier band reaches past the regular band")
    nodes = band_nodes(ctx.domain, barrier.width)
    if len(nodes) == 0:
        return Certification(0, float("nan"), float("nan"), float("nan"), float("nan"), False, barrier.width)
    upper, _ = transformed_residual(ctx, barrier.profile, data, nodes)
    lower, _ = transformed_residual(ctx, barrier.profile.scaled(-1.0), data, nodes)
    return Certification(
        nodes=len(nodes),
        super_fraction=float(np.mean(upper < 0)),
        sub_fraction=float(np.mean(lower > 0)),
        worst_super=float(upper.max()),
        worst_sub=float(lower.min()),
        certified=bool(np.all(upper < 0) and np.all(lower > 0)),
        width=barrier.width,
    )


@dataclass
class BoundsReport:
    height_violations: int
    height_margin: float
    height_worst: tuple
    gradient_violations: int
    gradient_margin: float
    band_violations: int
    band_margin: float
    band_nodes: int

    @property
    def passed(self) -> bool:
        return self.height_violations == 0 and self.gradient_violations == 0 and self.band_violations == 0

    def as_dict(self):
        out = asdict(self)
        out["pass"] = self.passed
        return out


def check_solution_bounds(u: DiscreteField, height: HeightBarrier, barrier: BoundaryBarrier | None,
                          data: BoundaryData, tol: float = 1e-12) -> BoundsReport:
    """Height bound everywhere, boundary gradient bound and the two-sided band bound."""
    domain = u.domain
    d = domain.unknown_distance
    height_gap = height.bound(d) - np.abs(u.interior)
    trace_gap = height.bound(0.0) - np.abs(u.trace)
    all_height = np.concatenate([height_gap, trace_gap])
    worst = tuple(float(v) for v in np.concatenate([domain.points, domain.dirichlet_points])[np.argmin(all_height)])
    grad_violations, grad_margin, band_violations, band_margin, nodes = 0, float("inf"), 0, float("inf"), 0
    if barrier is not None:
        grad = gradient_norm(domain, u)
        near = domain.near_boundary
        y = domain.dirichlet_points
        p = data.gradient(y)
        data_slope = float(np.max(np.sqrt(np.einsum("ni,nij,nj->n", p, domain.chart.g_inv(y), p))))
        limit = data_slope + float(barrier.d1(0.0)) + 10.0 * domain.h
        gap = limit - grad[near]
        grad_violations = int(np.sum(gap < -tol))
        grad_margin = float(gap.min()) if gap.size else float("inf")
        band = band_nodes(domain, barrier.width)
        nodes = len(band)
        if nodes:
            offset = np.abs(u.interior[band] - data(domain.points[band]))
            gap = barrier.value(d[band]) - offset
            band_violations = int(np.sum(gap < -tol))
            band_margin = float(gap.min())
    return BoundsReport(int(np.sum(all_height < -tol)), float(all_height.min()), worst, grad_violations, grad_margin,
                        band_violations, band_margin, nodes)


@dataclass
class DichotomyReport:
    a_values: list
    branches: list
    max_nodes: list
    scaled_gradients: list
    a_star: float | None

    def as_dict(self):
        return asdict(self)


def verify_gradient_dichotomy(ctx: OperatorContext, u: DiscreteField, a_values=None,
                              tol_grad: float = 0.05 * SQRT3) -> DichotomyReport:
    """Locate the maximum of ``|grad u| exp(A u)`` over a sweep of ``A``.

    Branch ``"boundary"``: the maximum sits on a node next to the boundary.
    Branch ``"interior"``: the maximum is interior and ``rho |grad u| <= sqrt 3 + tol_grad``.
    Branch ``"neither"`` otherwise.  ``a_star`` is the smallest sweep value from
    which on every larger value satisfies one of the first two branches.
    """
    domain = ctx.domain
    height = float(max(np.max(np.abs(u.interior)), np.max(np.abs(u.trace)) if u.trace.size else 0.0))
    if not check_flow_monotonicity(domain, ctx.curvature, height + 1.0).passed:
        raise PreconditionError("gradient dichotomy needs dH/dz <= 0")
    if a_values is None:
        a_values = 2.0 ** np.arange(0, 11)
    grad = gradient_norm(domain, u)
    scale = max(1.0, float(np.max(np.abs(u.interior)))) / domain.h
    grad = np.where(grad <= FLAT_GRADIENT * scale, 0.0, grad)
    scaled = grad * domain.cache.rho
    near = domain.near_boundary
    with np.errstate(divide="ignore"):
        log_grad = np.log(grad)
    branches, nodes, values = [], [], []
    for A in a_values:
        k = int(np.argmax(log_grad + A * u.interior))
        if not np.isfinite(log_grad[k]):
            branch = "interior"  # grad u vanishes identically
        elif near[k]:
            branch = "boundary"
        elif scaled[k] <= SQRT3 + tol_grad:
            branch = "interior"
        else:
            branch = "neither"
        branches.append(branch)
        nodes.append(k)
        values.append(float(scaled[k]))
    a_star = None
    for idx in range(len(a_values) - 1, -1, -1):
        if branches[idx] == "neither":
            break
        a_star = float(a_values[idx])
    return DichotomyReport([float(a) for a in a_values], branches, nodes, values, a_star)
