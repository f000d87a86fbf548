import json

import numpy as np
import pytest

from conftest import disk_domain
from kgraph.boundary import CircleBoundary, rectangle
from kgraph.conditions import (
    check_cylinder_monotonicity,
    check_flow_monotonicity,
    check_ricci_slope,
    check_serrin,
)
from kgraph.curvature import PrescribedCurvature, constant_curvature, curvature_family, quadratic_data
from kgraph.errors import InputError
from kgraph.geometry import euclidean_product
from kgraph.mesh import build_domain


@pytest.fixture(scope="module")
def unit_disk():
    return build_domain(CircleBoundary((0, 0), 1.0), 65, euclidean_product())


def linear_in_height(slope):
    return PrescribedCurvature(value=lambda x, z: slope * np.asarray(z, dtype=float) + 0 * x[..., 0],
                               dz=lambda x, z: slope + 0 * np.asarray(z, dtype=float))


def test_decreasing_in_height_passes(unit_disk):
    rep = check_flow_monotonicity(unit_disk, linear_in_height(-1.0), height=2.0)
    assert rep.passed and rep.margin == pytest.approx(1.0)


def test_increasing_in_height_fails(unit_disk):
    rep = check_flow_monotonicity(unit_disk, linear_in_height(1.0), height=2.0)
    assert not rep.passed and rep.margin == pytest.approx(-1.0)


def test_saturating_profile_margin(unit_disk):
    zbar = 1.5
    H = curvature_family(c2=-1.0, z0=1.0)
    rep = check_flow_monotonicity(unit_disk, H, height=zbar)
    assert rep.passed
    assert rep.margin == pytest.approx(1.0 / np.cosh(zbar) ** 2, rel=1e-6)


def test_monotonicity_needs_two_heights(unit_disk):
    with pytest.raises(InputError):
        check_flow_monotonicity(unit_disk, constant_curvature(0.0), 1.0, samples=1)


@pytest.mark.parametrize("h, margin, passed", [(0.4, 0.1, True), (0.6, -0.1, False), (0.0, 0.5, True)])
def test_serrin_on_unit_disk(unit_disk, h, margin, passed):
    rep = check_serrin(unit_disk, constant_curvature(h), quadratic_data())
    assert rep.passed is passed
    assert rep.margin == pytest.approx(margin, rel=1e-6)
    np.testing.assert_allclose(rep.samples["h_cyl"], 0.5, atol=1e-9)


def test_serrin_uses_the_data_scale(unit_disk):
    H = curvature_family(c0=0.2, c2=-0.2, z0=1.0)
    rep = check_serrin(unit_disk, H, quadratic_data(a0=1.0))
    # sup over sigma of |0.2 - 0.2 tanh(sigma)| is attained at sigma = 0
    assert rep.margin == pytest.approx(0.3, rel=1e-9)


def test_constant_curvature_ricci_margin_euclidean():
    domain = disk_domain("euclidean-product", 33)
    rep = check_ricci_slope(domain, constant_curvature(0.7), quadratic_data())
    assert rep.passed and rep.margin == pytest.approx(0.49)


def test_hyperbolic_ricci_margin():
    domain = disk_domain("hyperbolic-leaf", 65)
    rep = check_ricci_slope(domain, constant_curvature(2.0), quadratic_data())
    assert rep.passed and rep.margin == pytest.approx(3.0, rel=1e-6)


def test_hyperbolic_ricci_failure():
    domain = disk_domain("hyperbolic-leaf", 65)

    # |H| = 2 and |grad H| = 5 in the hyperbolic metric: x3 * |dH/dx2| = 5
    def dx(x, z):
        return np.stack([np.zeros(x.shape[:-1]), 5.0 / x[..., 1]], axis=-1)

    H = PrescribedCurvature(value=lambda x, z: np.full(x.shape[:-1], 2.0), dz=lambda x, z: 0 * x[..., 0], dx=dx)
    rep = check_ricci_slope(domain, H, quadratic_data())
    assert not rep.passed and rep.margin == pytest.approx(-2.0, rel=1e-6)


def test_ricci_slope_is_symmetric_under_reflection():
    domain = disk_domain("hyperbolic-leaf", 33)
    H = curvature_family(c0=1.5, c1=0.2, c2=-0.3, z0=0.7, spatial="x1")
    data = quadratic_data(0.1, 0.2, 0.3)
    mirrored = quadratic_data(-0.1, -0.2, -0.3)
    a = check_ricci_slope(domain, H, data)
    b = check_ricci_slope(domain, H.negated_reflection(), mirrored)
    np.testing.assert_allclose(a.samples["margin"], b.samples["margin"], atol=1e-8)


@pytest.mark.parametrize("preset", ["euclidean-product", "rotational", "hyperbolic-leaf"])
def test_cylinder_monotonicity_holds_on_convex_domains(preset):
    assert check_cylinder_monotonicity(disk_domain(preset, 65)).passed


def test_cylinder_monotonicity_on_strip():
    domain = build_domain(rectangle((0, 0), (4, 1)), 65, euclidean_product())
    rep = check_cylinder_monotonicity(domain)
    assert rep.passed
    # feet on corners are skipped; away from the corner bisectors both sides vanish
    np.testing.assert_array_equal(rep.samples["h_cyl_foot"], 0.0)
    middle = (rep.samples["x1"] > 1.0) & (rep.samples["x1"] < 3.0)
    assert middle.sum() > 1000
    np.testing.assert_allclose(rep.samples["h_cyl_d"][middle], 0.0, atol=1e-10)


def test_serrin_on_square_sees_straight_edges():
    domain = build_domain(rectangle((0, 0), (1, 1)), 33, euclidean_product())
    rep = check_serrin(domain, constant_curvature(0.1), quadratic_data())
    assert not rep.passed and rep.margin == pytest.approx(-0.1)
    assert np.sum(np.isinf(rep.samples["h_cyl"])) == 4


def test_serrin_fails_at_reflex_corner():
    ell = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float)
    domain = build_domain(ell, 33, euclidean_product())
    rep = check_serrin(domain, constant_curvature(0.0), quadratic_data())
    assert not rep.passed and rep.margin == -np.inf
    np.testing.assert_allclose(rep.worst_location, [1.0, 1.0])


def test_report_files(tmp_path, unit_disk):
    rep = check_serrin(unit_disk, constant_curvature(0.6), quadratic_data())
    path = rep.write(tmp_path)
    payload = json.loads(path.read_text())
    assert set(payload) == {"check", "pass", "margin", "tolerance", "worst_location", "samples_csv_path"}
    assert payload["pass"] is False and payload["margin"] < 0
    lines = (tmp_path / payload["samples_csv_path"]).read_text().splitlines()
    assert lines[0].split(",") == ["x1", "x2", "h_cyl", "sup_abs_h", "margin"]
    assert len(lines) > 100
