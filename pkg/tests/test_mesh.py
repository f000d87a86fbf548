import numpy as np
import pytest

from conftest import disk_domain
from kgraph.boundary import CircleBoundary, PolygonBoundary, rectangle
from kgraph.errors import CutLocusError, GeometryError, InputError, ResolutionError
from kgraph.geometry import euclidean_product, rotational
from kgraph.mesh import (
    ADJACENT,
    CSV_COLUMNS,
    INTERIOR,
    build_domain,
    distance_derivatives,
    nearest,
    parallel_curvature_field,
    parallel_hypersurface_curvature,
    read_polyline_csv,
    write_grid_csv,
)


def inside(domain):
    return (domain.mask == INTERIOR) | (domain.mask == ADJACENT)


def test_unit_square_interior_count():
    n = 33
    domain = build_domain(rectangle((0, 0), (1, 1)), n, euclidean_product())
    assert domain.n_unknowns == (n - 2) ** 2
    c = n // 2
    assert domain.dist.distance[c, c] == pytest.approx(0.5, abs=1e-12)


def test_disk_area_quadrature():
    domain = build_domain(CircleBoundary((0, 0), 1.0), 129, euclidean_product())
    assert abs(domain.area() / np.pi - 1.0) < 0.02


def test_disk_centre_is_on_cut_locus():
    domain = build_domain(CircleBoundary((0, 0), 1.0), 65, euclidean_product())
    assert domain.dist.distance[32, 32] == pytest.approx(1.0, abs=1e-3)
    assert not domain.dist.unique[32, 32]
    with pytest.raises(CutLocusError):
        nearest(domain, 32, 32)


def test_exact_distance_where_foot_is_unique():
    domain = build_domain(CircleBoundary((0, 0), 1.0), 65, euclidean_product())
    sel = inside(domain) & domain.dist.unique
    r = np.linalg.norm(domain.grid_points[sel], axis=-1)
    np.testing.assert_allclose(domain.dist.distance[sel], 1.0 - r, atol=1e-12)


def test_self_intersecting_polyline_is_rejected():
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float)
    with pytest.raises(InputError):
        build_domain(bowtie, 33, euclidean_product())


def test_annular_sector_with_crossing_edge_is_rejected():
    t = np.linspace(0, np.pi / 2, 9)
    outer = np.c_[np.cos(t), np.sin(t)]
    inner = 0.5 * np.c_[np.cos(t), np.sin(t)][::-1]
    sector = np.vstack([outer, inner])
    sector[3] = [0.2, 0.2]  # pull one outer vertex through the inner arc
    with pytest.raises(InputError):
        PolygonBoundary(sector)


def test_zero_length_edge():
    with pytest.raises(GeometryError):
        PolygonBoundary(np.array([[0, 0], [1, 0], [1, 0], [0, 1]], dtype=float))


def test_resolution_floor():
    with pytest.raises(ResolutionError):
        build_domain(CircleBoundary((0, 0), 1.0), 16, euclidean_product())


def test_thin_domain_is_rejected():
    with pytest.raises(ResolutionError):
        build_domain(rectangle((0, 0), (1.0, 0.02)), 33, euclidean_product(), box=(0, 1, -0.5, 0.5))


@pytest.mark.parametrize("preset", ["euclidean-product", "rotational", "hyperbolic-leaf"])
def test_distance_against_dense_boundary_sampling(preset):
    domain = disk_domain(preset, 65)
    chart = domain.chart
    samples = domain.boundary.samples(domain.h / 20).points
    sel = inside(domain)
    pts = domain.grid_points[sel]
    if chart.point_distance is not None:
        brute = np.min(chart.point_distance(pts[:, None, :], samples[None, :, :]), axis=1)
    else:
        brute = np.min(np.linalg.norm(pts[:, None, :] - samples[None, :, :], axis=-1), axis=1)
    assert np.max(np.abs(domain.dist.distance[sel] - brute)) <= 2 * domain.h


def test_eikonal_residual_shrinks_with_refinement():
    errors = []
    for n in (33, 65, 129):
        domain = disk_domain("hyperbolic-leaf", n)
        grad, _ = distance_derivatives(domain)
        sel = inside(domain) & domain.dist.regular & (domain.dist.distance < domain.dist.reach)
        x = domain.grid_points[sel]
        g = np.einsum("ni,nij,nj->n", grad[sel], domain.chart.g_inv(x), grad[sel])
        errors.append(np.max(np.abs(g - 1.0)))
    assert errors[2] < errors[1] < errors[0]
    assert errors[2] < 0.05


def test_boundary_nodes_have_zero_distance():
    domain = build_domain(rectangle((0, 0), (1, 1)), 33, euclidean_product())
    edge = domain.grid_points[:, 0, 1] == 0.0
    np.testing.assert_allclose(domain.dist.distance[edge, 0], 0.0, atol=1e-14)


def test_nearest_point_lies_on_boundary_and_realises_distance():
    domain = disk_domain("euclidean-product", 65)
    i, j = 20, 40
    foot = nearest(domain, i, j)
    assert np.linalg.norm(foot) == pytest.approx(0.5, abs=1e-12)
    assert np.linalg.norm(domain.grid_points[i, j] - foot) == pytest.approx(domain.dist.distance[i, j], abs=domain.h)


def test_parallel_curvature_on_disk():
    domain = build_domain(CircleBoundary((0, 0), 1.0), 129, euclidean_product())
    i, j = 64, 32  # (-0.5, 0): d = 0.5
    assert domain.dist.distance[i, j] == pytest.approx(0.5)
    assert parallel_hypersurface_curvature(domain, i, j) == pytest.approx(1.0, abs=5e-3)


def test_parallel_curvature_for_straight_boundary():
    domain = build_domain(rectangle((0, 0), (1, 1)), 65, euclidean_product())
    field = parallel_curvature_field(domain)
    # nodes near the middle of the bottom edge see a straight boundary only
    band = field[24:41, 2:10]
    np.testing.assert_allclose(band, 0.0, atol=1e-10)


def test_parallel_curvature_for_rotational_cylinder():
    r0 = 2.0
    domain = build_domain(rectangle((1.0, -0.5), (r0, 0.5)), 65, rotational())
    i, j = 56, 32
    d = domain.dist.distance[i, j]
    assert domain.grid_points[i, j, 0] == pytest.approx(r0 - d)
    assert parallel_hypersurface_curvature(domain, i, j) == pytest.approx(1.0 / (2 * (r0 - d)), rel=1e-6)


def test_parallel_curvature_increases_inward_on_disk():
    domain = build_domain(CircleBoundary((0, 0), 1.0), 129, euclidean_product())
    field = parallel_curvature_field(domain)
    ray = field[64, 1:60]
    ray = ray[np.isfinite(ray)]
    assert len(ray) > 40
    assert np.all(np.diff(ray) >= -1e-6)


def test_cut_locus_query_raises():
    domain = build_domain(CircleBoundary((0, 0), 1.0), 65, euclidean_product())
    with pytest.raises(CutLocusError):
        parallel_hypersurface_curvature(domain, 32, 32)


def test_nearest_is_idempotent_on_regular_band():
    domain = disk_domain("euclidean-product", 65)
    sel = inside(domain) & domain.dist.regular
    feet = domain.dist.foot[sel]
    again = domain.boundary.project(feet)[0]
    np.testing.assert_allclose(again, feet, atol=1e-12)


def test_grid_csv_round_trip(tmp_path):
    domain = disk_domain("euclidean-product", 33)
    path = write_grid_csv(domain, tmp_path / "grid.csv", {"u": np.zeros(domain.shape)})
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS + ["u"]
    assert len(lines) == 1 + 33 * 33
    d = np.array([float(r.split(",")[5]) for r in lines[1:]]).reshape(domain.shape)
    np.testing.assert_array_equal(d, domain.dist.distance)


def test_polyline_csv(tmp_path):
    path = tmp_path / "poly.csv"
    path.write_text("x1,x2,phi\n0,0,1\n1,0,2\n1,1,3\n0,1,4\n")
    loops, trace = read_polyline_csv(path)
    assert loops[0].shape == (4, 2)
    np.testing.assert_array_equal(trace[0], [1, 2, 3, 4])
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n0,0\n")
    with pytest.raises(InputError):
        read_polyline_csv(bad)


def test_clockwise_input_is_reoriented_and_values_follow():
    square = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=float)
    boundary = PolygonBoundary(square)
    assert boundary.reversed == [True]
    values = boundary.align_vertex_values([np.array([1.0, 2.0, 3.0, 4.0])])[0]
    np.testing.assert_array_equal(values, [4.0, 3.0, 2.0, 1.0])
    np.testing.assert_array_equal(boundary.loops[0][0], square[-1])


def test_hyperbolic_domain_reach_is_positive():
    domain = disk_domain("hyperbolic-leaf", 65)
    assert 0 < domain.reach < 0.6
