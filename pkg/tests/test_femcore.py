from math import factorial

import numpy as np
import pytest

from tfem.errors import CapabilityError, DomainError
from tfem.femcore import (DofMap, adjugate, circumradius, interpolate, mapping_data, p1_gradient_error,
                          quadrature, reference_element, shape_gradients, shape_values)
from tfem.mesh import BandSpec, Mesh, build_band_mesh, build_structured_mesh
from tfem.tempering import C_C


def _random_ref_points(dim, n, rng):
    p = rng.dirichlet(np.ones(dim + 1), size=n)
    return p[:, 1:]


def test_p1_values():
    ref = reference_element(2, 1)
    assert np.allclose(shape_values(ref, [0, 0]), [1, 0, 0])
    assert np.allclose(shape_values(ref, [1 / 3, 1 / 3]), [1 / 3] * 3)


def test_p2_edge_midpoint():
    ref = reference_element(2, 2)
    v = shape_values(ref, [0.5, 0.0])
    assert np.allclose(v[:3], 0, atol=1e-13)
    assert np.isclose(v.max(), 1.0) and np.sum(np.isclose(v, 1.0)) == 1


def test_p1_gradients():
    g = shape_gradients(reference_element(2, 1), [0.2, 0.3])
    assert np.allclose(g, [[-1, -1], [1, 0], [0, 1]])


def test_outside_simplex():
    with pytest.raises(DomainError):
        shape_values(reference_element(2, 1), [0.8, 0.3])


@pytest.mark.parametrize("dim,order", [(2, 1), (2, 2), (2, 3), (2, 4), (3, 1)])
def test_partition_of_unity(dim, order):
    rng = np.random.default_rng(order)
    ref = reference_element(dim, order)
    pts = _random_ref_points(dim, 10, rng)
    assert np.allclose(ref.tabulate(pts).sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(ref.tabulate_grads(pts).sum(axis=1), 0.0, atol=1e-12)
    n = (order + 1) * (order + 2) // 2 if dim == 2 else 4
    assert ref.tabulate(pts).shape[1] == n


def test_p3_gradients_finite_difference():
    ref = reference_element(2, 3)
    rng = np.random.default_rng(3)
    eps = 1e-6
    for x in _random_ref_points(2, 5, rng) * 0.9 + 0.03:
        g = ref.tabulate_grads(x[None])[0]
        for d in range(2):
            e = np.zeros(2)
            e[d] = eps
            fd = (ref.tabulate((x + e)[None])[0] - ref.tabulate((x - e)[None])[0]) / (2 * eps)
            assert np.allclose(fd, g[:, d], atol=1e-7)


def test_centroid_rule():
    q = quadrature(2, 1)
    assert np.allclose(q.points, [[1 / 3, 1 / 3]]) and np.allclose(q.weights, [0.5])


def test_specific_monomials():
    q = quadrature(2, 4)
    x, y = q.points.T
    assert abs(np.dot(q.weights, x * x * y * y) - 1 / 180) < 1e-14
    q3 = quadrature(3, 3)
    x, y, z = q3.points.T
    assert abs(np.dot(q3.weights, x * y * z) - 1 / 720) < 1e-14


def _monomial_integral(exps):
    d = len(exps)
    return np.prod([factorial(a) for a in exps]) / factorial(sum(exps) + d)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("deg", range(0, 9))
def test_quadrature_exactness(dim, deg):
    q = quadrature(dim, deg)
    assert np.all(q.weights > 0)
    assert q.weights.sum() == pytest.approx(0.5 if dim == 2 else 1 / 6, rel=1e-14)
    for exps in np.ndindex(*([deg + 1] * dim)):
        if sum(exps) > deg:
            continue
        v = np.dot(q.weights, np.prod(q.points ** np.array(exps), axis=1))
        exact = _monomial_integral(exps)
        assert abs(v - exact) <= 1e-13 * exact


def test_unsupported_degree():
    with pytest.raises(CapabilityError):
        quadrature(2, 9)


def test_mapping_reference_cell():
    m = Mesh(2, [[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [1], np.zeros((0, 2)), [], 1.0)
    md = mapping_data(m, 0)
    assert md.J == 1.0 and np.allclose(md.cofactor, np.eye(2))


def test_mapping_collapsed_cap():
    h, s = 0.1, 0.3
    m = Mesh(2, [[0, 0], [h, 0], [s * h, 0]], [[0, 1, 2]], [2], np.zeros((0, 2)), [], h)
    md = mapping_data(m, 0)
    assert md.J == 0.0
    assert np.allclose(md.cofactor, [[0, -s * h], [0, h]], atol=1e-16)
    assert np.all(np.isfinite(md.cofactor))


@pytest.mark.parametrize("dim", [2, 3])
def test_adjugate_identity(dim):
    rng = np.random.default_rng(dim)
    F = rng.normal(size=(50, dim, dim))
    A = adjugate(F)
    J = np.linalg.det(F)
    assert np.allclose(A @ F, J[:, None, None] * np.eye(dim), atol=1e-14 * 10)


def test_degenerate_mapping_finite():
    m = build_band_mesh(3, 3, BandSpec(width=0.0))
    for c in m.band_cells[:20]:
        md = mapping_data(m, c)
        assert np.all(np.isfinite(md.cofactor)) and md.J == 0


def test_interpolate_linear_exact():
    m = build_structured_mesh(2, 5)
    u = lambda X: 1 + 2 * X[:, 0] - 3 * X[:, 1]
    g = lambda X: np.tile([2.0, -3.0], (len(X), 1))
    for c in range(m.n_cells):
        assert p1_gradient_error(m.vertices[m.cells[c]], u, g) < 1e-13


def test_interpolate_nodal():
    m = build_structured_mesh(2, 10)
    u = lambda X: np.sin(2 * np.pi * X[:, 0]) * np.cos(2 * np.pi * X[:, 1])
    assert np.max(np.abs(interpolate(m, 1, u) - u(m.vertices))) == 0.0
    assert len(interpolate(m, 2, u)) == DofMap(m, 2).ndof


def test_cap_interpolation_x_squared():
    h, hb = 0.1, 1e-3
    P = np.array([[0, 0], [h, 0], [h / 2, hb]])
    err = p1_gradient_error(P, lambda X: X[:, 0] ** 2, lambda X: np.column_stack([2 * X[:, 0], 0 * X[:, 0]]))
    assert err <= C_C * (h * h / hb) * 2


def test_circumradius_bound_polynomials():
    rng = np.random.default_rng(0)
    h = 0.1
    for f in (1e-1, 1e-2, 1e-3):
        for s in (0.5, 0.3):
            P = np.array([[0, 0], [h, 0], [s * h, f * h]])
            R = circumradius(P)
            for _ in range(5):
                a, b, c = rng.normal(size=3)
                u = lambda X: a * X[:, 0] ** 2 + b * X[:, 0] * X[:, 1] + c * X[:, 1] ** 2
                g = lambda X: np.column_stack([2 * a * X[:, 0] + b * X[:, 1], b * X[:, 0] + 2 * c * X[:, 1]])
                w2 = np.linalg.norm([[2 * a, b], [b, 2 * c]], 2)
                assert p1_gradient_error(P, u, g) <= C_C * R * w2
                assert p1_gradient_error(P, u, g) <= C_C * h * h / (f * h) * w2
