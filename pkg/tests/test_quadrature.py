import numpy as np
import pytest

from fieldinterp.quadrature import QuadratureSpec, composite_rule, gauss_legendre, graded_breakpoints, integrate_unit_cube, tensor_rule


@pytest.mark.parametrize("q", [2, 3, 8, 16, 24])
def test_gauss_legendre_exact_to_degree_2q_minus_1(q):
    x, w = gauss_legendre(q)
    for p in range(2 * q):
        assert abs(np.dot(w, x**p) - 1.0 / (p + 1)) <= 1e-13


def test_rule_arrays_are_read_only():
    x, w = gauss_legendre(8)
    with pytest.raises(ValueError):
        x[0] = 1.0


def test_graded_breakpoints_halve_towards_both_ends():
    b = graded_breakpoints(3)
    assert b[0] == 0.0 and b[-1] == 1.0
    assert b[1] == pytest.approx(1 / 8) and b[-2] == pytest.approx(1 - 1 / 8)
    assert np.all(np.diff(b) > 0)
    assert graded_breakpoints(0).tolist() == [0.0, 1.0]


def test_composite_rule_integrates_endpoint_singularity():
    x, w = composite_rule(16, graded_breakpoints(12))
    assert abs(np.dot(w, np.sqrt(x)) - 2 / 3) < 1e-10


def test_tensor_rule_ordering_and_mass():
    r = gauss_legendre(3)
    pts, wts = tensor_rule([r, r])
    assert pts.shape == (9, 2) and abs(wts.sum() - 1) < 1e-15
    # C order: last coordinate varies fastest
    assert pts[0, 0] == pts[1, 0] and pts[0, 1] != pts[1, 1]


def test_integrate_unit_cube_polynomial():
    val = integrate_unit_cube(lambda p: p[:, 0] ** 2 * p[:, 1] * p[:, 2] ** 3, 3, order=4)
    assert abs(val - (1 / 3) * (1 / 2) * (1 / 4)) < 1e-14


def test_quadrature_levels_and_validation():
    q = QuadratureSpec()
    assert q.levels(3, [0.5, 1.5, 1.5]) == [1, 0, 0]
    assert QuadratureSpec(subdivision=2).levels(2, [1.0, 1.0]) == [2, 2]
    for bad in (dict(order=1), dict(subdivision=-1), dict(scan_points=1)):
        with pytest.raises(ValueError):
            QuadratureSpec(**bad)
    assert QuadratureSpec().to_dict()["order"] == 8
