"""Tempered assembly of Poisson, plane-strain elasticity and SUPG advection.

Physical gradients are grad(phi) = ghat(phi) @ adj(F) / J, so every stiffness
integral has the form  1/|J| * int ghat adj adj^T ghat^T  over the reference
cell.  Tempering replaces 1/|J| by 1/max(|J|, Jmin).  Loads and masses keep
the true |J|, so zero-measure cells contribute nothing to them.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ConfigurationError, InvalidArgumentError
from .femcore import DofMap, geometry, quadrature, reference_element
from .tempering import default_policy, jmin as policy_jmin

CHUNK = 8192


@dataclass
class ElementMatrix:
    dofs: np.ndarray
    entries: np.ndarray
    load: np.ndarray = None


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    symmetric: bool = True
    dofmap: DofMap = None
    Jmin: float = None
    blocks: dict = field(default_factory=dict)

    @property
    def ndof(self):
        return self.matrix.shape[0]


@dataclass
class ReducedSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    n: int
    symmetric: bool = True

    def expand(self, x_free):
        x = np.zeros(self.n)
        x[self.free] = x_free
        x[self.fixed] = self.values
        return x


@dataclass(frozen=True)
class MaterialPlaneStrain:
    E: float
    nu: float
    region: int = None

    def __post_init__(self):
        if not self.E > 0 or not 0 <= self.nu < 0.5:
            raise InvalidArgumentError(f"invalid material E={self.E}, nu={self.nu}")

    def tensor(self):
        E, nu = self.E, self.nu
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        return np.array([[lam + 2 * mu, lam, 0.0],
                         [lam, lam + 2 * mu, 0.0],
                         [0.0, 0.0, mu]])


# ---------------------------------------------------------------------------
# element kernels
# ---------------------------------------------------------------------------

def clamp_factor(J, Jmin):
    """1/max(|J|, Jmin) for a stack of determinants."""
    aJ = np.abs(J)
    den = np.maximum(aJ, Jmin)
    if (den == 0).any():
        raise InvalidArgumentError("zero-measure cell with Jmin = 0")
    return 1.0 / den


def _chunks(n):
    for start in range(0, n, CHUNK):
        yield np.arange(start, min(start + CHUNK, n))


def _scaled_grads(ref, rule, adj):
    ghat = ref.tabulate_grads(rule.points)
    return np.einsum("qnd,cde->cqne", ghat, adj)


def stiffness_blocks(mesh, order, Jmin, cells):
    """Tempered Laplace element matrices for the given cell indices."""
    ref = reference_element(mesh.dim, order)
    rule = quadrature(mesh.dim, max(2 * order - 2, 0))
    J, F, adj = geometry(mesh, cells)
    G = _scaled_grads(ref, rule, adj)
    K = np.einsum("q,cqne,cqme->cnm", rule.weights, G, G)
    return K * clamp_factor(J, Jmin)[:, None, None]


def load_blocks(mesh, order, f, cells, degree=None):
    ref = reference_element(mesh.dim, order)
    rule = quadrature(mesh.dim, 2 * order if degree is None else degree)
    J, F, _ = geometry(mesh, cells)
    X0 = mesh.vertices[mesh.cells[cells, 0]]
    pts = X0[:, None, :] + np.einsum("cij,qj->cqi", F, rule.points)
    fv = np.asarray(f(pts.reshape(-1, mesh.dim)), dtype=float).reshape(len(cells), len(rule.weights))
    phi = ref.tabulate(rule.points)
    return np.einsum("q,cq,qn->cn", rule.weights, fv, phi) * np.abs(J)[:, None]


def local_tempered_stiffness(mesh, cell, order=1, Jmin=0.0):
    dm = DofMap(mesh, order)
    K = stiffness_blocks(mesh, order, Jmin, np.array([cell]))[0]
    return ElementMatrix(dm.cell_dofs[cell], K)


def local_load(mesh, cell, order, f):
    dm = DofMap(mesh, order)
    b = load_blocks(mesh, order, f, np.array([cell]))[0]
    return ElementMatrix(dm.cell_dofs[cell], None, b)


def assemble_matrix(dofs, blocks_iter, n):
    """Sum element blocks into a CSR matrix (deterministic order)."""
    rows, cols, vals = [], [], []
    for idx, B in blocks_iter:
        d = dofs[idx]
        nn = d.shape[1]
        rows.append(np.repeat(d, nn, axis=1).ravel())
        cols.append(np.tile(d, (1, nn)).ravel())
        vals.append(B.ravel())
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def _assemble_vector(dofs, blocks_iter, n):
    out = np.zeros(n)
    for idx, b in blocks_iter:
        np.add.at(out, dofs[idx].ravel(), b.ravel())
    return out


def dirichlet_data(mesh, dofmap, dirichlet_fn, tags=None, components=1):
    """Constrained dofs and values on the boundary facets with given tags."""
    if dirichlet_fn is None:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    facets = mesh.boundary_facets if tags is None else mesh.facets_with_tags(tags)
    nodes = dofmap.facet_dofs(facets)
    vals = np.asarray(dirichlet_fn(dofmap.coords[nodes]), dtype=float)
    if components == 1:
        return nodes, vals.reshape(-1)
    vals = vals.reshape(len(nodes), components)
    dofs = (components * nodes[:, None] + np.arange(components)).ravel()
    return dofs, vals.ravel()


def resolve_jmin(mesh, order, policy=None, Jmin=None):
    if Jmin is not None:
        return float(Jmin)
    policy = policy or default_policy(mesh.dim)
    return policy_jmin(policy, mesh.h, mesh.dim, order)


# ---------------------------------------------------------------------------
# Poisson
# ---------------------------------------------------------------------------

def assemble_poisson(mesh, order=1, policy=None, f=None, dirichlet_fn=None,
                     dirichlet_tags=None, Jmin=None, cells=None):
    """Tempered Poisson system  -div grad u = f  with Dirichlet data."""
    Jmin = resolve_jmin(mesh, order, policy, Jmin)
    dm = DofMap(mesh, order)
    sel = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    A = assemble_matrix(dm.cell_dofs[sel],
                        ((idx, stiffness_blocks(mesh, order, Jmin, sel[idx])) for idx in _chunks(len(sel))),
                        dm.ndof)
    if f is None:
        b = np.zeros(dm.ndof)
    else:
        b = _assemble_vector(dm.cell_dofs, ((idx, load_blocks(mesh, order, f, idx))
                                            for idx in _chunks(mesh.n_cells)), dm.ndof)
    dd, dv = dirichlet_data(mesh, dm, dirichlet_fn, dirichlet_tags)
    return SparseSystem(A, b, dd, dv, True, dm, Jmin)


# ---------------------------------------------------------------------------
# elasticity (P1, plane strain)
# ---------------------------------------------------------------------------

def _strain_operator(G):
    """B-hat (nc, 3, 2*nn) from scaled gradients (nc, nn, 2)."""
    nc, nn, _ = G.shape
    B = np.zeros((nc, 3, 2 * nn))
    B[:, 0, 0::2] = G[:, :, 0]
    B[:, 1, 1::2] = G[:, :, 1]
    B[:, 2, 0::2] = G[:, :, 1]
    B[:, 2, 1::2] = G[:, :, 0]
    return B


def material_per_cell(mesh, materials):
    if isinstance(materials, MaterialPlaneStrain):
        materials = [materials]
    default = [m for m in materials if m.region is None]
    by_region = {m.region: m for m in materials if m.region is not None}
    out = []
    for r in np.unique(mesh.cell_regions):
        if r in by_region:
            out.append((r, by_region[r]))
        elif default:
            out.append((r, default[0]))
        else:
            raise ConfigurationError(f"no material for region {r}")
    return dict(out)


def _vector_dofs(cell_dofs):
    return (2 * cell_dofs[:, :, None] + np.arange(2)).reshape(len(cell_dofs), -1)


def assemble_elasticity(mesh, policy=None, materials=None, bc=None, body_force=None, Jmin=None):
    """Plane-strain P1 system with 2 dofs per node (u_x, u_y interleaved).

    ``bc`` maps ``"dirichlet"`` and ``"neumann"`` to ``{facet_tag: fn}``
    where fn(X) returns displacement or traction vectors.
    """
    if mesh.dim != 2:
        raise InvalidArgumentError("elasticity is implemented in 2D")
    materials = materials if materials is not None else MaterialPlaneStrain(1.0, 0.3)
    mats = material_per_cell(mesh, materials)
    Jmin = resolve_jmin(mesh, 1, policy, Jmin)
    bc = bc or {}
    dm = DofMap(mesh, 1)
    n = 2 * dm.ndof
    vdofs = _vector_dofs(dm.cell_dofs)
    ref = reference_element(2, 1)
    rule = quadrature(2, 0)
    ghat = ref.tabulate_grads(rule.points)[0]
    Dmat = np.stack([mats[r].tensor() for r in mesh.cell_regions]) if mesh.n_cells else np.zeros((0, 3, 3))

    def blocks():
        for idx in _chunks(mesh.n_cells):
            J, F, adj = geometry(mesh, idx)
            G = np.einsum("nd,cde->cne", ghat, adj)
            B = _strain_operator(G)
            K = 0.5 * np.einsum("cia,cij,cjb->cab", B, Dmat[idx], B)
            yield idx, K * clamp_factor(J, Jmin)[:, None, None]

    A = assemble_matrix(vdofs, blocks(), n)
    b = np.zeros(n)
    if body_force is not None:
        for comp in range(2):
            fc = (lambda X, c=comp: np.asarray(body_force(X))[:, c])
            bc_comp = _assemble_vector(dm.cell_dofs, ((idx, load_blocks(mesh, 1, fc, idx, degree=4))
                                                     for idx in _chunks(mesh.n_cells)), dm.ndof)
            b[comp::2] += bc_comp
    for tag, traction in (bc.get("neumann") or {}).items():
        facets = mesh.facets_with_tags([tag])
        if len(facets) == 0:
            continue
        gx, gw = np.polynomial.legendre.leggauss(3)
        t = (gx + 1) / 2
        w = gw / 2
        X0 = mesh.vertices[facets[:, 0]]
        X1 = mesh.vertices[facets[:, 1]]
        length = np.linalg.norm(X1 - X0, axis=1)
        for tq, wq in zip(t, w):
            xq = X0 + tq * (X1 - X0)
            tv = np.broadcast_to(np.asarray(traction(xq), dtype=float), (len(facets), 2))
            for k, phi in ((0, 1 - tq), (1, tq)):
                for comp in range(2):
                    np.add.at(b, 2 * facets[:, k] + comp, wq * length * phi * tv[:, comp])
    dd_parts, dv_parts = [], []
    for tag, fn in (bc.get("dirichlet") or {}).items():
        d, v = dirichlet_data(mesh, dm, fn, [tag], components=2)
        dd_parts.append(d)
        dv_parts.append(v)
    if dd_parts:
        dd = np.concatenate(dd_parts)
        dv = np.concatenate(dv_parts)
        dd, first = np.unique(dd, return_index=True)
        dv = dv[first]
    else:
        dd, dv = np.zeros(0, dtype=np.int64), np.zeros(0)
    sysm = SparseSystem(A, b, dd, dv, True, dm, Jmin)
    sysm.blocks["materials"] = mats
    return sysm


def von_mises(mesh, u, materials):
    """Cell-wise von Mises stress of a P1 plane-strain displacement."""
    mats = material_per_cell(mesh, materials)
    J, F, adj = geometry(mesh)
    ghat = reference_element(2, 1).tabulate_grads(np.array([[1 / 3, 1 / 3]]))[0]
    G = np.einsum("nd,cde->cne", ghat, adj)
    B = _strain_operator(G)
    ue = np.asarray(u).reshape(-1, 2)[mesh.cells].reshape(mesh.n_cells, 6)
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.einsum("cia,ca->ci", B, ue) / J[:, None]
    out = np.full(mesh.n_cells, np.nan)
    for r, m in mats.items():
        sel = (mesh.cell_regions == r) & (J != 0)
        sig = eps[sel] @ m.tensor().T
        szz = m.nu * (sig[:, 0] + sig[:, 1])
        out[sel] = np.sqrt(0.5 * ((sig[:, 0] - sig[:, 1]) ** 2 + (sig[:, 1] - szz) ** 2
                                  + (szz - sig[:, 0]) ** 2) + 3 * sig[:, 2] ** 2)
    return out


# ---------------------------------------------------------------------------
# SUPG advection
# ---------------------------------------------------------------------------

def default_tau(h_K, vnorm):
    with np.errstate(divide="ignore"):
        tau = np.where(vnorm < 1e-12, 0.0, h_K / (2.0 * np.maximum(vnorm, 1e-300)))
    return tau


def assemble_advection_supg(mesh, velocity_fn, policy=None, tau_rule=default_tau, dirichlet_fn=None,
                            dirichlet_tags=None, source=None, order=1, Jmin=None):
    """SUPG system for v . grad u = source.

    The Galerkin advection block uses the true measure (J cancels, no clamp);
    the streamline-diffusion block carries 1/max(|J|, Jmin).
    """
    Jmin = resolve_jmin(mesh, order, policy, Jmin)
    dm = DofMap(mesh, order)
    ref = reference_element(mesh.dim, order)
    rule = quadrature(mesh.dim, 2 * order + 2)
    phi = ref.tabulate(rule.points)
    ghat = ref.tabulate_grads(rule.points)
    cen = np.full((1, mesh.dim), 1.0 / (mesh.dim + 1))
    adv_blocks, supg_blocks, rhs_blocks = [], [], []
    for idx in _chunks(mesh.n_cells):
        J, F, adj = geometry(mesh, idx)
        sgn = np.where(J < 0, -1.0, 1.0)
        X0 = mesh.vertices[mesh.cells[idx, 0]]
        pts = X0[:, None, :] + np.einsum("cij,qj->cqi", F, rule.points)
        v = np.asarray(velocity_fn(pts.reshape(-1, mesh.dim)), dtype=float).reshape(len(idx), -1, mesh.dim)
        G = np.einsum("qnd,cde->cqne", ghat, adj)
        vg = np.einsum("cqe,cqne->cqn", v, G)
        adv = np.einsum("q,cqj,qi->cij", rule.weights, vg, phi) * sgn[:, None, None]
        xc = X0 + np.einsum("cij,qj->cqi", F, cen)[:, 0]
        vc = np.asarray(velocity_fn(xc), dtype=float).reshape(len(idx), mesh.dim)
        tau = tau_rule(mesh.longest_edges(idx), np.linalg.norm(vc, axis=1))
        sup = np.einsum("q,cqj,cqi->cij", rule.weights, vg, vg) * (tau * clamp_factor(J, Jmin))[:, None, None]
        adv_blocks.append((idx, adv))
        supg_blocks.append((idx, sup))
        if source is not None:
            fv = np.asarray(source(pts.reshape(-1, mesh.dim))).reshape(len(idx), -1)
            gal = np.einsum("q,cq,qi->ci", rule.weights, fv, phi) * np.abs(J)[:, None]
            stab = np.einsum("q,cq,cqi->ci", rule.weights, fv, vg) * (tau * sgn)[:, None]
            rhs_blocks.append((idx, gal + stab))
    A_adv = assemble_matrix(dm.cell_dofs, adv_blocks, dm.ndof)
    A_supg = assemble_matrix(dm.cell_dofs, supg_blocks, dm.ndof)
    b = _assemble_vector(dm.cell_dofs, rhs_blocks, dm.ndof)
    dd, dv = dirichlet_data(mesh, dm, dirichlet_fn, dirichlet_tags)
    sysm = SparseSystem((A_adv + A_supg).tocsr(), b, dd, dv, False, dm, Jmin)
    sysm.blocks["advection"] = A_adv
    sysm.blocks["supg"] = A_supg
    return sysm


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

def apply_dirichlet(system):
    """Symmetric elimination of the constrained dofs."""
    n = system.ndof
    fixed = np.asarray(system.dirichlet_dofs, dtype=np.int64)
    values = np.asarray(system.dirichlet_values, dtype=float)
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    A = system.matrix.tocsr()
    ud = np.zeros(n)
    ud[fixed] = values
    rhs = system.rhs[free] - (A @ ud)[free]
    Aff = A[free][:, free].tocsr()
    return ReducedSystem(Aff, rhs, free, fixed, values, n, system.symmetric)


def apply_dirichlet_penalty(system, penalty=1e12):
    """Alternative treatment: large diagonal penalty on constrained dofs."""
    A = system.matrix.tolil(copy=True)
    b = system.rhs.copy()
    for d, v in zip(system.dirichlet_dofs, system.dirichlet_values):
        A[d, d] = A[d, d] + penalty
        b[d] += penalty * v
    return A.tocsr(), b


def export_matrix_market(system, path):
    scipy.io.mmwrite(path, system.matrix, symmetry="general")
