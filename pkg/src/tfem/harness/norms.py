"""Error norms by quadrature on the true cell measure."""
import numpy as np

from ..femcore import DofMap, geometry, quadrature, reference_element
from ..assembly import CHUNK


def _error_degree(order):
    return max(4, 2 * order)


def _components(solution, ndof):
    sol = np.asarray(solution, dtype=float)
    m = sol.size // ndof
    return sol.reshape(ndof, m), m


def _iter_cells(cells):
    for start in range(0, len(cells), CHUNK):
        yield cells[start:start + CHUNK]


def l2_error(mesh, order, solution, exact, cells=None, dofmap=None):
    """sqrt(sum_K int_K |u_h - u|^2) with degree max(4, 2*order) quadrature.

    ``exact`` may be None to get the L2 norm of the discrete field.
    """
    dm = dofmap or DofMap(mesh, order)
    U, m = _components(solution, dm.ndof)
    ref = reference_element(mesh.dim, order)
    rule = quadrature(mesh.dim, _error_degree(order))
    phi = ref.tabulate(rule.points)
    sel = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    total = 0.0
    for idx in _iter_cells(sel):
        J, F, _ = geometry(mesh, idx)
        X0 = mesh.vertices[mesh.cells[idx, 0]]
        pts = X0[:, None, :] + np.einsum("cij,qj->cqi", F, rule.points)
        uh = np.einsum("qn,cnm->cqm", phi, U[dm.cell_dofs[idx]])
        if exact is not None:
            ue = np.asarray(exact(pts.reshape(-1, mesh.dim)), dtype=float).reshape(len(idx), len(rule.weights), m)
            uh = uh - ue
        total += float(np.einsum("q,cqm,c->", rule.weights, uh ** 2, np.abs(J)))
    return float(np.sqrt(total))


def h1_seminorm_error(mesh, order, solution, exact_grad, cells=None, dofmap=None):
    """sqrt(sum_K int_K |grad u_h - grad u|^2) over the selected cells.

    Cells with J = 0 have no gradient and are skipped (they carry no measure).
    """
    dm = dofmap or DofMap(mesh, order)
    U, m = _components(solution, dm.ndof)
    ref = reference_element(mesh.dim, order)
    rule = quadrature(mesh.dim, _error_degree(order))
    ghat = ref.tabulate_grads(rule.points)
    sel = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    total = 0.0
    d = mesh.dim
    for idx in _iter_cells(sel):
        J, F, adj = geometry(mesh, idx)
        ok = J != 0
        if not ok.all():
            idx, J, F, adj = idx[ok], J[ok], F[ok], adj[ok]
        if len(idx) == 0:
            continue
        X0 = mesh.vertices[mesh.cells[idx, 0]]
        pts = X0[:, None, :] + np.einsum("cij,qj->cqi", F, rule.points)
        G = np.einsum("qnd,cde->cqne", ghat, adj) / J[:, None, None, None]
        gh = np.einsum("cqne,cnm->cqme", G, U[dm.cell_dofs[idx]])
        if exact_grad is not None:
            ge = np.asarray(exact_grad(pts.reshape(-1, d)), dtype=float).reshape(len(idx), len(rule.weights), m, d)
            gh = gh - ge
        total += float(np.einsum("q,cqme,c->", rule.weights, gh ** 2, np.abs(J)))
    return float(np.sqrt(total))


def h1_error_outside_band(mesh, order, solution, exact_grad, dofmap=None):
    """Gradient error restricted to INTERIOR cells."""
    return h1_seminorm_error(mesh, order, solution, exact_grad, mesh.interior_cells, dofmap)


def exact_l2_norm(mesh, exact, cells=None, degree=8):
    rule = quadrature(mesh.dim, degree)
    sel = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    total = 0.0
    for idx in _iter_cells(sel):
        J, F, _ = geometry(mesh, idx)
        X0 = mesh.vertices[mesh.cells[idx, 0]]
        pts = X0[:, None, :] + np.einsum("cij,qj->cqi", F, rule.points)
        v = np.asarray(exact(pts.reshape(-1, mesh.dim)), dtype=float).reshape(len(idx), len(rule.weights), -1)
        total += float(np.einsum("q,cqm,c->", rule.weights, v ** 2, np.abs(J)))
    return float(np.sqrt(total))


def w_seminorm_max(fn, mesh, cells, samples=20):
    """Max of |fn| over a samples x samples barycentric grid per cell.

    Approximation of an L-infinity seminorm; fn returns per-point norms.
    """
    t = np.linspace(0, 1, samples)
    a, b = np.meshgrid(t, t, indexing="ij")
    keep = a + b <= 1 + 1e-14
    ref = np.column_stack([a[keep], b[keep]])
    J, F, _ = geometry(mesh, cells)
    X0 = mesh.vertices[mesh.cells[cells, 0]]
    pts = X0[:, None, :] + np.einsum("cij,qj->cqi", F, ref)
    return float(np.max(fn(pts.reshape(-1, mesh.dim))))
