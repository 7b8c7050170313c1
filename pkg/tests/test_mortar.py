import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from tfem.errors import NotDegenerateError
from tfem.harness.norms import h1_error_outside_band, l2_error
from tfem.harness.problems import poisson_2d
from tfem.harness.studies import fit_slope
from tfem.mesh import BandSpec, build_band_mesh, build_mortar_mesh, build_structured_mesh
from tfem.mortar import (assemble_penalty, equivalence_check, extract_gamma, jump_norm, nodal_jumps,
                         penalty_matrix, trapezoid_jump_bound_check)
from tfem.solve import solve
from tfem.tempering import ALPHA, penalty_strength_Dtilde


def zero_band(n, offset=0.5):
    return build_band_mesh(2, n, BandSpec(width=0.0, offset=offset))


def test_extract_counts():
    g = extract_gamma(zero_band(10))
    assert g.n_nodes == 19
    assert np.allclose(g.segments(), 0.05)
    assert g.length == pytest.approx(1.0)
    # endpoints carry a single dof and are excluded
    assert not set(g.endpoints) & set(g.apex.tolist())


def test_extract_errors():
    with pytest.raises(NotDegenerateError):
        extract_gamma(build_structured_mesh(2, 4))
    with pytest.raises(NotDegenerateError):
        extract_gamma(build_band_mesh(2, 4, BandSpec(width=1e-3)))


@pytest.mark.parametrize("n", [4, 8, 16])
@pytest.mark.parametrize("Jmin", [1e-2, 1e-3, 1e-4])
@pytest.mark.parametrize("offset", [0.5, 0.3])
def test_equivalence(n, Jmin, offset):
    r = equivalence_check(zero_band(n, offset), Jmin)
    assert r["max_abs_diff"] <= 1e-12
    assert r["max_abs_diff_at_ALPHA"] <= 1e-12
    assert r["alpha_fitted"] == pytest.approx(ALPHA, rel=1e-12)


def test_penalty_psd_constant_kernel():
    m = zero_band(6, 0.3)
    g = extract_gamma(m)
    P = penalty_matrix(g, 10.0, m.n_vertices).toarray()
    assert np.allclose(P, P.T)
    assert np.linalg.eigvalsh(P).min() >= -1e-10
    assert np.allclose(P @ np.ones(m.n_vertices), 0)
    prob = poisson_2d()
    s = assemble_penalty(m, g, 5.0, prob.source)
    w, V = np.linalg.eigh(s.matrix.toarray())
    assert w[0] == pytest.approx(0, abs=1e-10) and w[1] > 1e-8
    assert np.allclose(np.abs(V[:, 0]), np.abs(V[0, 0]))


def test_strong_coupling_limit():
    # a huge penalty glues the halves: nodal jumps vanish and the error
    # matches the conforming reference on the same grid
    prob = poisson_2d()
    m = zero_band(10)
    g = extract_gamma(m)
    s = assemble_penalty(m, g, 1e14, prob.source, prob.exact)
    x, _ = solve(s)
    assert np.abs(nodal_jumps(g, x)).max() < 1e-9
    from tfem.assembly import assemble_poisson
    ref = build_structured_mesh(2, 10, diagonal="mirror")
    sr = assemble_poisson(ref, 1, Jmin=0.0, f=prob.source, dirichlet_fn=prob.exact)
    xr, _ = solve(sr)
    e = l2_error(m, 1, x, prob.exact, dofmap=s.dofmap)
    er = l2_error(ref, 1, xr, prob.exact, dofmap=sr.dofmap)
    assert 0.5 < e / er < 2.0


def test_zero_penalty_decouples():
    m = zero_band(6)
    s = assemble_penalty(m, extract_gamma(m), 0.0)
    A = s.matrix.tolil()
    ends = list(extract_gamma(m).endpoints)
    keep = np.setdiff1d(np.arange(m.n_vertices), ends)
    ncomp, _ = connected_components(sp.csr_matrix(A[keep][:, keep]), directed=False)
    assert ncomp == 2


def test_penalty_convergence():
    prob = poisson_2d()
    hs, l2s, h1s = [], [], []
    for n in (10, 20, 40, 80):
        m = zero_band(n)
        h = 1.0 / n
        Dt = penalty_strength_Dtilde(h, h ** 3)
        s = assemble_penalty(m, extract_gamma(m), Dt, prob.source, prob.exact)
        x, _ = solve(s)
        hs.append(h)
        l2s.append(l2_error(m, 1, x, prob.exact, dofmap=s.dofmap))
        h1s.append(h1_error_outside_band(m, 1, x, prob.grad, dofmap=s.dofmap))
    assert fit_slope(hs, l2s) > 1.85
    assert fit_slope(hs, h1s) > 0.9


def test_penalty_energy_slope():
    prob = poisson_2d()
    hs, total, scaled = [], [], []
    for n in (10, 20, 40, 80):
        m = zero_band(n)
        h = 1.0 / n
        cap = m.h ** 3
        Dt = penalty_strength_Dtilde(h, cap)
        g = extract_gamma(m)
        s = assemble_penalty(m, g, Dt, prob.source, prob.exact)
        x, _ = solve(s)
        e_out = h1_error_outside_band(m, 1, x, prob.grad, dofmap=s.dofmap)
        # exact solution is continuous, so the jump of the error is the jump of u_h
        jn = jump_norm(g, x)
        hs.append(h)
        total.append(math.sqrt(Dt) * jn + e_out)
        scaled.append(math.sqrt(Dt) * jn / h)
    assert fit_slope(hs, total) >= 0.9
    assert max(scaled) / min(scaled) < 4


def test_trapezoid_examples():
    g = extract_gamma(zero_band(10))
    h = 0.1
    hat = np.zeros(g.n_nodes)
    hat[4] = 1.0
    lhs, rhs = trapezoid_jump_bound_check(g, hat)
    assert lhs == pytest.approx(h / 3) and rhs == pytest.approx(h / 2)
    assert trapezoid_jump_bound_check(g, np.zeros(g.n_nodes)) == (0.0, 0.0)


def test_trapezoid_random():
    rng = np.random.default_rng(0)
    for seed in range(1000):
        n = int(rng.integers(2, 30))
        g = extract_gamma(zero_band(n, offset=float(rng.choice([0.5, 0.3]))))
        lhs, rhs = trapezoid_jump_bound_check(g, rng.normal(size=g.n_nodes) * 10 ** rng.uniform(-3, 3))
        assert lhs <= rhs * (1 + 1e-14)


def test_jump_norm_examples():
    m = zero_band(10)
    g = extract_gamma(m)
    u = m.vertices[:, 0] + 2 * m.vertices[:, 1]
    assert jump_norm(g, u) == pytest.approx(0.0, abs=1e-14)
    assert jump_norm(g, jumps=np.ones(g.n_nodes + 2)) == pytest.approx(1.0)
    with pytest.raises(Exception):
        jump_norm(g)


def test_mortar_identical_grids_conforming():
    prob = poisson_2d()
    left = build_structured_mesh(2, None, box=((0.0, 0.0), (0.5, 1.0)), counts=(4, 8))
    right = build_structured_mesh(2, None, box=((0.5, 0.0), (1.0, 1.0)), counts=(4, 8))
    m = build_mortar_mesh(left, right)
    from tfem.assembly import assemble_poisson
    s = assemble_poisson(m, 1, Jmin=1e-12, f=prob.source, dirichlet_fn=prob.exact)
    x, _ = solve(s)
    g = extract_gamma(m)
    assert np.abs(nodal_jumps(g, x)).max() < 1e-6
    conf = build_structured_mesh(2, 8)
    sc = assemble_poisson(conf, 1, Jmin=0.0, f=prob.source, dirichlet_fn=prob.exact)
    xc, _ = solve(sc)
    key = {tuple(np.round(v, 12)): i for i, v in enumerate(conf.vertices)}
    idx = np.array([key[tuple(np.round(v, 12))] for v in m.vertices])
    assert np.abs(x - xc[idx]).max() < 1e-6


def test_mortar_jump_vanishes():
    prob = poisson_2d()
    from tfem.harness.studies import MortarFamily, run_single
    from tfem.tempering import PowerLaw
    jumps = [run_single(prob, MortarFamily(), PowerLaw(1.0, 3.0), h).jump for h in (0.1, 0.05)]
    assert jumps[1] < jumps[0]
