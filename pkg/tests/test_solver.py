import numpy as np
import pytest

from conftest import (EQUIDISTANT_SLOPE, cap_exact, cap_solution, disk_domain, equidistant_curvature)
from kgraph.boundary import CircleBoundary
from kgraph.curvature import PrescribedCurvature, constant_curvature, quadratic_data
from kgraph.errors import PreconditionError
from kgraph.geometry import euclidean_product
from kgraph.mesh import DiscreteField, build_domain
from kgraph.operator import ZERO_PROFILE, OperatorContext, transformed_residual
from kgraph.solver import (
    Schedule,
    comparison_probe,
    continuation_solve,
    newton_solve,
    tolerance,
    uniqueness_probe,
)

ZERO = quadratic_data()


def zero_field(domain):
    return DiscreteField.from_function(domain, ZERO)


def sup_error(u, exact):
    return float(np.max(np.abs(u.interior - exact(u.domain.points))))


def test_exact_root_needs_no_iteration():
    domain = disk_domain("euclidean-product", 33)
    result = newton_solve(OperatorContext(domain, constant_curvature(1.0), sigma=0.0), zero_field(domain))
    assert result.converged and result.iterations == 0
    np.testing.assert_array_equal(result.field.interior, 0.0)


def test_minimal_zero_problem_takes_one_step():
    domain = disk_domain("euclidean-product", 33)
    u, report = continuation_solve(OperatorContext(domain, constant_curvature(0.0)), ZERO)
    assert report.converged and len(report.steps) == 1 and report.steps[0].sigma == 1.0
    np.testing.assert_array_equal(u.interior, 0.0)


def test_cap_continuation_is_short():
    _, _, report = cap_solution(65)
    assert report.converged and report.sigma_reached == 1.0
    assert len(report.steps) <= 8
    assert all(step.accepted for step in report.steps)
    assert report.residual_norm <= report.newton_tol


def test_cap_error_is_second_order():
    errors = [sup_error(cap_solution(n)[1], cap_exact) for n in (65, 129)]
    assert np.log2(errors[0] / errors[1]) >= 1.8


def test_equidistant_plane_is_recovered():
    h, spread = equidistant_curvature()
    assert spread < 1e-8
    exact = quadratic_data(a2=EQUIDISTANT_SLOPE)
    for n in (33, 65):
        domain = disk_domain("hyperbolic-leaf", n)
        u, report = continuation_solve(OperatorContext(domain, constant_curvature(h)), exact)
        assert report.converged
        assert sup_error(u, exact) <= 1e-12


def test_newton_limit_is_reported_not_raised():
    domain = disk_domain("euclidean-product", 33)
    result = newton_solve(OperatorContext(domain, constant_curvature(1.0)), zero_field(domain), max_iter=1)
    assert not result.converged and result.message == "iteration limit"
    assert result.iterations == 1 and len(result.damping) == 1


def test_stalled_continuation_keeps_last_good_sigma():
    domain = disk_domain("euclidean-product", 33)
    schedule = Schedule(initial_step=0.5, min_step=0.2)
    u, report = continuation_solve(OperatorContext(domain, constant_curvature(1.0)), ZERO, schedule, max_iter=1)
    assert not report.converged and report.sigma_reached < 1.0
    assert "stalled" in report.message
    assert not report.steps[-1].accepted


def test_serrin_violation_is_diagnosed():
    domain = build_domain(CircleBoundary((0, 0), 1.0), 65, euclidean_product())
    growth = {}
    for h in (0.4, 0.75):
        u, report = continuation_solve(OperatorContext(domain, constant_curvature(h)), ZERO)
        growth[h] = report.gradient_growth
        if h == 0.75:
            # zero data still admits the cap of radius 1/H, and the solve finds it
            assert report.converged
            radius = 1 / h
            cap = lambda x: np.sqrt(radius**2 - np.sum(x**2, axis=-1)) - np.sqrt(radius**2 - 1)
            assert sup_error(u, cap) < 1e-3
    assert np.isfinite(growth[0.75]) and growth[0.75] > growth[0.4]


def test_uniqueness_for_minimal_problem():
    domain = disk_domain("euclidean-product", 33)
    ctx = OperatorContext(domain, constant_curvature(0.0))
    bump = 0.2 * np.cos(np.pi * np.linalg.norm(domain.points, axis=1)) ** 2
    probe = uniqueness_probe(ctx, ZERO, [np.zeros(domain.n_unknowns), bump])
    assert probe.verdict == "unique" and probe.max_difference <= 1e-10


def test_uniqueness_for_cap():
    domain = disk_domain("euclidean-product", 65)
    ctx = OperatorContext(domain, constant_curvature(1.0))
    exact = cap_exact(domain.points)
    wiggle = 0.01 * np.sin(5 * domain.points[:, 0])
    probe = uniqueness_probe(ctx, ZERO, [np.zeros(domain.n_unknowns), exact + wiggle, exact - wiggle])
    assert probe.verdict == "unique" and probe.max_difference <= 1e-9


def test_uniqueness_refuses_increasing_curvature():
    domain = disk_domain("euclidean-product", 33)
    rising = PrescribedCurvature(value=lambda x, z: np.asarray(z, dtype=float) + 0 * x[..., 0],
                                 dz=lambda x, z: 1.0 + 0 * x[..., 0])
    with pytest.raises(PreconditionError):
        uniqueness_probe(OperatorContext(domain, rising), ZERO, [np.zeros(domain.n_unknowns)])


def test_comparison_with_equal_data():
    domain = disk_domain("euclidean-product", 33)
    probe = comparison_probe(OperatorContext(domain, constant_curvature(1.0)), ZERO, ZERO)
    assert probe.verdict == "ordered" and abs(probe.max_difference) <= 1e-9


def test_comparison_with_raised_data_is_strict():
    domain = disk_domain("euclidean-product", 33)
    ctx = OperatorContext(domain, constant_curvature(0.0))
    probe = comparison_probe(ctx, ZERO, quadratic_data(a0=0.1))
    assert probe.verdict == "ordered" and probe.max_difference < 0


def test_comparison_with_crossing_data_is_refused():
    domain = disk_domain("euclidean-product", 33)
    with pytest.raises(PreconditionError):
        comparison_probe(OperatorContext(domain, constant_curvature(0.0)), quadratic_data(a1=0.1), ZERO)


def test_refinement_is_stable():
    coarse = cap_solution(65)[1].grid()
    fine = cap_solution(129)[1].grid()
    shared = fine[::2, ::2]
    both = np.isfinite(coarse) & np.isfinite(shared)
    h = disk_domain("euclidean-product", 65).h
    assert np.max(np.abs(coarse[both] - shared[both])) <= h**2


def test_transformed_path_confirms_helicoid():
    domain = disk_domain("rotational", 65)
    ctx = OperatorContext(domain, constant_curvature(0.0))
    data = quadratic_data(a2=0.5)
    u, report = continuation_solve(ctx, data)
    assert report.converged and sup_error(u, data) <= 10 * report.newton_tol
    values, _ = transformed_residual(ctx, ZERO_PROFILE, data)
    assert np.max(np.abs(values)) <= 10 * tolerance(ctx, report.newton_tol)


def test_solves_are_deterministic():
    domain = disk_domain("rotational", 33)
    ctx = OperatorContext(domain, constant_curvature(0.2))
    data = quadratic_data(0.1, 0.0, 0.3)
    u1, r1 = continuation_solve(ctx, data)
    u2, r2 = continuation_solve(ctx, data)
    np.testing.assert_array_equal(u1.interior, u2.interior)
    assert r1.as_dict() == r2.as_dict()
