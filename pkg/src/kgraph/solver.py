"""Damped Newton iteration, continuation in the data scale, and solution probes."""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .conditions import check_flow_monotonicity
from .curvature import BoundaryData
from .errors import NumericError, PreconditionError, SolverError
from .mesh import DiscreteField
from .operator import OperatorContext, gradient_norm, jacobian, residual

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
BACKTRACK = 0.5
MIN_DAMPING = 2.0**-20


@dataclass
class NewtonResult:
    field: DiscreteField
    converged: bool
    iterations: int
    residual_norm: float
    damping: list
    message: str = ""


@dataclass
class SigmaStep:
    sigma: float
    accepted: bool
    iterations: int
    residual_norm: float
    damping: list
    max_boundary_gradient: float


@dataclass
class SolveReport:
    converged: bool
    sigma_reached: float
    steps: list = field(default_factory=list)
    newton_tol: float = 1e-10
    residual_norm: float = float("nan")
    gradient_growth: float = float("nan")
    hypotheses_failed: list = field(default_factory=list)
    message: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Schedule:
    initial_step: float = 0.25
    min_step: float = 1e-4
    growth: float = 2.0
    backoff: float = 0.5


def tolerance(ctx: OperatorContext, newton_tol: float) -> float:
    """Absolute residual tolerance: the relative one times ``rho_inf^-3``."""
    return newton_tol / float(ctx.domain.cache.rho.min()) ** 3


def newton_solve(ctx: OperatorContext, initial: DiscreteField, newton_tol: float = 1e-10,
                 max_iter: int = 50) -> NewtonResult:
    """Newton's method with Armijo backtracking on the sup-norm of the residual."""
    u = initial.copy()
    target = tolerance(ctx, newton_tol)
    damping = []
    try:
        res = residual(ctx, u)
    except NumericError as exc:
        return NewtonResult(u, False, 0, float("nan"), damping, str(exc))
    norm = float(np.max(np.abs(res)))
    for it in range(max_iter + 1):
        if not np.isfinite(norm):
            return NewtonResult(u, False, it, norm, damping, "non-finite residual")
        if norm <= target:
            return NewtonResult(u, True, it, norm, damping)
        if it == max_iter:
            break
        try:
            step = spla.spsolve(jacobian(ctx, u).tocsc(), -res)
        except RuntimeError as exc:
            raise SolverError(f"singular Jacobian: {exc}") from None
        if not np.all(np.isfinite(step)):
            raise SolverError("singular Jacobian: non-finite Newton step")
        alpha = 1.0
        while True:
            trial = DiscreteField(u.domain, u.interior + alpha * step, u.trace)
            try:
                trial_res = residual(ctx, trial)
                trial_norm = float(np.max(np.abs(trial_res)))
            except NumericError:
                trial_norm = float("nan")
            if np.isfinite(trial_norm) and trial_norm <= (1.0 - ARMIJO_C * alpha) * norm:
                break
            alpha *= BACKTRACK
            if alpha < MIN_DAMPING:
                damping.append(alpha)
                return NewtonResult(u, False, it, norm, damping, "line search stalled")
        damping.append(alpha)
        u, res, norm = trial, trial_res, trial_norm
        log.debug("newton it=%d alpha=%g residual=%.3e", it + 1, alpha, norm)
    return NewtonResult(u, False, max_iter, norm, damping, "iteration limit")


def _boundary_gradient(u: DiscreteField) -> float:
    grad = gradient_norm(u.domain, u)
    near = u.domain.near_boundary
    return float(grad[near].max()) if np.any(near) else 0.0


def continuation_solve(ctx: OperatorContext, data: BoundaryData, schedule: Schedule = Schedule(),
                       newton_tol: float = 1e-10, max_iter: int = 50, initial: DiscreteField | None = None):
    """Raise the data scale ``sigma`` from 0 to 1, each stage warm-started.

    At ``sigma = 0`` the zero function solves the problem exactly.  If the
    starting field already solves the target problem no march is needed.  A failed
    Newton solve halves the step; the march stops once the step falls below
    ``schedule.min_step``.

    Returns
    -------
    field : DiscreteField
        Last accepted solution.
    report : SolveReport
    """
    domain = ctx.domain
    trace = data.trace(domain.boundary, domain.dirichlet_points, domain.dirichlet_loop, domain.dirichlet_s)
    if initial is None:
        current = DiscreteField(domain, np.zeros(domain.n_unknowns), np.zeros_like(trace))
    else:
        current = initial.copy()
    sigma = 0.0
    step = schedule.initial_step
    report = SolveReport(converged=False, sigma_reached=0.0, newton_tol=newton_tol)
    history = []
    # the warm start may already solve the target problem (e.g. zero data and H = 0)
    final = newton_solve(ctx.at(1.0), DiscreteField(domain, current.interior, trace), newton_tol, max_iter=0)
    if final.converged:
        report.steps.append(SigmaStep(1.0, True, 0, final.residual_norm, [], _boundary_gradient(final.field)))
        report.residual_norm = final.residual_norm
        sigma, current = 1.0, final.field
    while sigma < 1.0:
        nxt = min(1.0, sigma + step)
        start = DiscreteField(domain, current.interior, nxt * trace)
        result = newton_solve(ctx.at(nxt), start, newton_tol, max_iter)
        grad = _boundary_gradient(result.field) if result.converged else float("nan")
        report.steps.append(SigmaStep(nxt, result.converged, result.iterations, result.residual_norm,
                                      result.damping, grad))
        if result.converged:
            sigma = nxt
            current = result.field
            history.append((sigma, grad))
            report.residual_norm = result.residual_norm
            step *= schedule.growth
        else:
            step *= schedule.backoff
            if step < schedule.min_step:
                report.message = f"continuation stalled at sigma={sigma!r}: {result.message}"
                break
    report.sigma_reached = sigma
    report.converged = sigma >= 1.0
    if len(history) >= 2 and history[-1][1] > 0 and history[-2][1] > 0:
        (s0, g0), (s1, g1) = history[-2], history[-1]
        report.gradient_growth = float(np.log(g1 / g0) / (s1 - s0))
    return current, report


@dataclass
class ProbeResult:
    verdict: str
    max_difference: float
    detail: str = ""


def _require_monotone(ctx: OperatorContext, height: float):
    report = check_flow_monotonicity(ctx.domain, ctx.curvature, height)
    if not report.passed:
        raise PreconditionError(
            f"H increases along the flow somewhere (margin {report.margin:.3e}); probes need dH/dz <= 0")


def uniqueness_probe(ctx: OperatorContext, data: BoundaryData, inits, newton_tol: float = 1e-10,
                     max_iter: int = 50) -> ProbeResult:
    """Solve from several initial guesses and compare the limits.

    The verdict is ``"unique"`` when every pair agrees within ``10 * newton_tol``
    (absolute, scaled like the residual tolerance), ``"distinct"`` otherwise and
    ``"inconclusive"`` if some solve fails.
    """
    domain = ctx.domain
    trace = data.trace(domain.boundary, domain.dirichlet_points, domain.dirichlet_loop, domain.dirichlet_s)
    starts = [DiscreteField(domain, np.asarray(v, dtype=float), ctx.sigma * trace) for v in inits]
    height = max(float(np.max(np.abs(s.interior))) for s in starts)
    height = max(height, float(np.max(np.abs(trace))) if trace.size else 0.0)
    _require_monotone(ctx, height + 1.0)
    limits = []
    for start in starts:
        result = newton_solve(ctx, start, newton_tol, max_iter)
        if not result.converged:
            return ProbeResult("inconclusive", float("nan"), f"solve failed: {result.message}")
        limits.append(result.field.interior)
    worst = max((float(np.max(np.abs(a - b))) for a, b in itertools.combinations(limits, 2)), default=0.0)
    bound = 10.0 * newton_tol
    return ProbeResult("unique" if worst <= bound else "distinct", worst)


def comparison_probe(ctx: OperatorContext, low: BoundaryData, high: BoundaryData, newton_tol: float = 1e-10,
                     schedule: Schedule = Schedule(), tol: float | None = None) -> ProbeResult:
    """Solve with ordered data and test the ordering of the solutions."""
    domain = ctx.domain
    args = (domain.boundary, domain.dirichlet_points, domain.dirichlet_loop, domain.dirichlet_s)
    t_low, t_high = low.trace(*args), high.trace(*args)
    if np.any(t_low > t_high):
        raise PreconditionError("boundary data are not ordered")
    height = float(max(np.max(np.abs(t_low)), np.max(np.abs(t_high))))
    _require_monotone(ctx, height + 1.0)
    u_low, rep_low = continuation_solve(ctx, low, schedule, newton_tol)
    u_high, rep_high = continuation_solve(ctx, high, schedule, newton_tol)
    if not (rep_low.converged and rep_high.converged):
        return ProbeResult("inconclusive", float("nan"), "a solve did not converge")
    tol = 10.0 * newton_tol if tol is None else tol
    gap = u_high.interior - u_low.interior
    worst = float(-gap.min())
    return ProbeResult("ordered" if worst <= tol else "violated", worst,
                       f"min(u_high - u_low) = {float(gap.min())!r}")
