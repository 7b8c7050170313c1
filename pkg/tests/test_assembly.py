import math

import numpy as np
import pytest
import scipy.sparse as sp

from tfem.assembly import (MaterialPlaneStrain, apply_dirichlet, apply_dirichlet_penalty,
                           assemble_advection_supg, assemble_elasticity, assemble_poisson,
                           export_matrix_market, local_load, local_tempered_stiffness, material_per_cell,
                           von_mises)
from tfem.degeneracy import cotangent_stiffness, shape_params
from tfem.errors import ConfigurationError
from tfem.harness.norms import l2_error
from tfem.harness.problems import poisson_2d
from tfem.mesh import BAND, BandSpec, Mesh, build_band_mesh, build_structured_mesh
from tfem.mortar import extract_gamma, nodal_jumps
from tfem.solve import solve, solve_matrix
from tfem.tempering import Fixed


def one_cell(P, tag=1):
    P = np.asarray(P, dtype=float)
    return Mesh(2, P, [[0, 1, 2]], [tag], np.zeros((0, 2)), [], 1.0)


def test_equilateral_stiffness():
    P = [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]
    K = local_tempered_stiffness(one_cell(P), 0, 1, 1e-300).entries
    base = np.array([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])
    # P1 stiffness is half the cotangent matrix
    assert np.allclose(K, base / (2 * math.sqrt(3)), atol=1e-14)


def test_right_triangle_stiffness():
    K = local_tempered_stiffness(one_cell([[0, 0], [1, 0], [0, 1]]), 0).entries
    assert np.allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-14)


@pytest.mark.parametrize("s", [0.5, 0.3, 0.0])
def test_collapsed_cap_rank_one(s):
    h, Jmin = 0.1, 1e-3
    K = local_tempered_stiffness(one_cell([[0, 0], [h, 0], [s * h, 0]], BAND), 0, 1, Jmin).entries
    g = np.array([-(1 - s), -s, 1.0])
    assert np.allclose(K, h * h / (2 * Jmin) * np.outer(g, g), atol=1e-12)


def test_cotangent_oracle():
    rng = np.random.default_rng(5)
    for _ in range(100):
        P = rng.uniform(-1, 1, size=(3, 2))
        sh = shape_params(P)
        if sh.f < 1e-3:
            continue
        K = local_tempered_stiffness(one_cell(P), 0, 1, 1e-300).entries
        perm = list(sh.order)
        assert np.allclose(2 * K[np.ix_(perm, perm)], cotangent_stiffness(sh), atol=1e-12 * sh.c)


@pytest.mark.parametrize("order", [1, 2, 3])
@pytest.mark.parametrize("J", [1.0, 1e-3, 1e-8, 0.0])
def test_local_matrix_properties(order, J):
    P = [[0, 0], [1, 0], [0.37, J]]
    K = local_tempered_stiffness(one_cell(P), 0, order, 1e-4).entries
    assert np.all(np.isfinite(K))
    assert np.allclose(K, K.T, atol=1e-14 * np.abs(K).max())
    assert np.allclose(K.sum(axis=1), 0, atol=1e-12 * np.abs(K).max())
    assert np.linalg.eigvalsh(K).min() >= -1e-12 * np.abs(K).max()


def test_local_matrix_3d_degenerate():
    m = build_band_mesh(3, 2, BandSpec(width=0.0))
    for c in m.band_cells[:10]:
        K = local_tempered_stiffness(m, c, 1, 1e-3).entries
        assert np.allclose(K, K.T) and np.allclose(K.sum(axis=1), 0, atol=1e-9)
        assert np.linalg.eigvalsh(K).min() >= -1e-9


def test_local_load():
    m = one_cell([[0, 0], [1, 0], [0, 1]])
    assert np.allclose(local_load(m, 0, 1, lambda X: np.ones(len(X))).load, [1 / 6] * 3)
    assert np.allclose(local_load(m, 0, 1, lambda X: X[:, 0]).load, [1 / 24, 1 / 12, 1 / 24])
    flat = one_cell([[0, 0], [1, 0], [0.5, 0]], BAND)
    assert np.all(local_load(flat, 0, 1, lambda X: np.ones(len(X))).load == 0)


def _textbook(mesh):
    rows, cols, vals = [], [], []
    for c in mesh.cells:
        P = mesh.vertices[c]
        B = np.column_stack([P[1] - P[0], P[2] - P[0]])
        G = np.linalg.solve(B.T, np.array([[-1, 1, 0], [-1, 0, 1]], dtype=float))
        K = abs(np.linalg.det(B)) / 2 * G.T @ G
        for i in range(3):
            for j in range(3):
                rows.append(c[i]); cols.append(c[j]); vals.append(K[i, j])
    return sp.coo_matrix((vals, (rows, cols))).tocsr()


def test_inactive_clamp_textbook():
    m = build_structured_mesh(2, 10)
    A = assemble_poisson(m, 1, Fixed(1e-300)).matrix
    T = _textbook(m)
    assert abs(A - T).max() <= 1e-12 * abs(T).max()


def test_global_row_sums_and_symmetry():
    m = build_band_mesh(2, 10, BandSpec(width=0.0))
    A = assemble_poisson(m, 1, Jmin=1e-3).matrix
    assert abs(A - A.T).max() == 0
    assert np.abs(A.sum(axis=1)).max() <= 1e-12 * abs(A).max()


def test_untempered_when_clamp_inactive():
    m = build_band_mesh(2, 10, BandSpec(width=1e-3))
    Jc = np.abs(m.determinants()).min()
    A0 = assemble_poisson(m, 1, Jmin=0.0).matrix
    A1 = assemble_poisson(m, 1, Jmin=0.5 * Jc).matrix
    assert abs(A0 - A1).max() == 0


def test_locking_vs_tempered_at_h10():
    prob = poisson_2d()
    band = build_band_mesh(2, 10, BandSpec(width=0.0))
    reg = build_structured_mesh(2, 10, diagonal="mirror")
    errs = {}
    for key, mesh, Jmin in (("ref", reg, 0.0), ("tfem", band, 1e-3), ("lock", band, 1e-8)):
        s = assemble_poisson(mesh, 1, f=prob.source, dirichlet_fn=prob.exact, Jmin=Jmin)
        x, _ = solve(s)
        errs[key] = l2_error(mesh, 1, x, prob.exact, dofmap=s.dofmap)
        if key == "lock":
            jumps = nodal_jumps(extract_gamma(mesh), x)
            assert np.abs(jumps).max() < 1e-3
    assert errs["tfem"] <= 2 * errs["ref"]


def test_all_constrained():
    m = build_structured_mesh(2, 2)
    s = assemble_poisson(m, 1, Jmin=0.0, dirichlet_fn=lambda X: X[:, 0] + 1)
    s.dirichlet_dofs = np.arange(m.n_vertices)
    s.dirichlet_values = m.vertices[:, 0] + 1
    red = apply_dirichlet(s)
    assert red.matrix.shape == (0, 0)
    x, _ = solve(s)
    assert np.allclose(x, m.vertices[:, 0] + 1)


def test_reduced_spd():
    m = build_structured_mesh(2, 4)
    red = apply_dirichlet(assemble_poisson(m, 1, Jmin=0.0, dirichlet_fn=lambda X: 0 * X[:, 0]))
    np.linalg.cholesky(red.matrix.toarray())


def test_elimination_vs_penalty():
    prob = poisson_2d()
    m = build_structured_mesh(2, 8)
    s = assemble_poisson(m, 1, Jmin=0.0, f=prob.source, dirichlet_fn=prob.exact)
    x, _ = solve(s)
    A, b = apply_dirichlet_penalty(s)
    xp, _ = solve_matrix(A, b)
    assert np.abs(x - xp).max() < 1e-6


def test_galerkin_energy_minimum():
    prob = poisson_2d()
    m = build_band_mesh(2, 8, BandSpec(width=0.0))
    s = assemble_poisson(m, 1, Jmin=(math.sqrt(2) / 8) ** 3, f=prob.source, dirichlet_fn=prob.exact)
    x, _ = solve(s)
    red = apply_dirichlet(s)
    xf = x[red.free]
    E = lambda v: 0.5 * v @ (red.matrix @ v) - red.rhs @ v
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = rng.normal(size=len(xf))
        assert E(xf + 1e-3 * d) > E(xf)


def test_elasticity_rigid_translation():
    m = build_band_mesh(2, 6, BandSpec(width=1e-3))
    tags = sorted(set(m.facet_tags.tolist()))
    shift = lambda X: np.tile([0.3, -0.7], (len(X), 1))
    s = assemble_elasticity(m, None, MaterialPlaneStrain(1.0, 0.3), {"dirichlet": {t: shift for t in tags}},
                            Jmin=1e-4)
    x, _ = solve(s)
    assert 0.5 * x @ (s.matrix @ x) < 1e-10
    assert np.allclose(x.reshape(-1, 2), [0.3, -0.7])


def test_elasticity_missing_material():
    m = build_band_mesh(2, 4, BandSpec(width=1e-3))
    with pytest.raises(ConfigurationError):
        material_per_cell(m, [MaterialPlaneStrain(1.0, 0.3, region=0)])


def test_elasticity_neumann_patch():
    # uniaxial strain: traction on the right side, exact displacement elsewhere
    m = build_structured_mesh(2, 4)
    E, nu = 1.0, 0.3
    mat = MaterialPlaneStrain(E, nu)
    lam, mu = mat.tensor()[0, 1], mat.tensor()[2, 2]
    exx = 1.0 / (lam + 2 * mu)
    u = lambda X: np.column_stack([exx * X[:, 0], 0 * X[:, 1]])
    bc = {"dirichlet": {10: u, 12: u, 13: u}, "neumann": {11: lambda X: np.tile([1.0, 0.0], (len(X), 1))}}
    s = assemble_elasticity(m, None, mat, bc, Jmin=0.0)
    x, _ = solve(s)
    assert np.allclose(x.reshape(-1, 2), u(m.vertices), atol=1e-12)
    vm = von_mises(m, x, mat)
    assert np.all(np.isfinite(vm))


def test_supg_collapsed_advection_finite():
    m = build_band_mesh(2, 4, BandSpec(width=0.0))
    s = assemble_advection_supg(m, lambda X: np.column_stack([X[:, 1], -X[:, 0]]), Jmin=1e-3)
    assert np.all(np.isfinite(s.blocks["advection"].data))


def test_supg_advection_block_independent_of_jmin():
    m = build_band_mesh(2, 6, BandSpec(width=1e-4))
    v = lambda X: np.column_stack([X[:, 1], -X[:, 0]])
    a = assemble_advection_supg(m, v, Jmin=1e-300).blocks["advection"]
    b = assemble_advection_supg(m, v, Jmin=1e-2).blocks["advection"]
    assert abs(a - b).max() <= 1e-13


def test_supg_streamline_constant():
    m = build_structured_mesh(2, 8)
    u = lambda X: 3 * X[:, 1] ** 2 - 2 * X[:, 1] ** 3
    s = assemble_advection_supg(m, lambda X: np.column_stack([np.ones(len(X)), 0 * X[:, 0]]),
                                dirichlet_fn=u, dirichlet_tags=(10,), Jmin=0.0)
    x, _ = solve(s)
    assert np.abs(x - u(m.vertices)).max() < 1e-10


def test_matrix_market(tmp_path):
    s = assemble_poisson(build_structured_mesh(2, 3), 1, Jmin=0.0)
    p = tmp_path / "A.mtx"
    export_matrix_market(s, str(p))
    assert p.read_text().startswith("%%MatrixMarket")


def test_accumulation_order_independent():
    m = build_band_mesh(2, 12, BandSpec(width=0.0))
    A = assemble_poisson(m, 2, Jmin=1e-3).matrix
    perm = np.random.default_rng(1).permutation(m.n_cells)
    m2 = Mesh(2, m.vertices, m.cells[perm], m.cell_tags[perm], m.boundary_facets, m.facet_tags, m.h)
    B = assemble_poisson(m2, 2, Jmin=1e-3).matrix
    # dof numbering of edges depends only on vertex pairs
    assert abs(A - B).max() <= 1e-14 * abs(A).max()
