"""Reference elements, quadrature, affine mappings and degree-of-freedom maps.

Lagrange bases are built from the monomial Vandermonde matrix on the
equispaced lattice of the unit simplex.  Local node ordering in 2D is
vertices, then edge nodes (edges v0->v1, v1->v2, v2->v0), then interior
nodes.  Mapping data is computed from vertex coordinates only: the
cofactor (adjugate) stays finite when the determinant is zero.
"""
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
import math

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import CapabilityError, DomainError, InvalidArgumentError

SIMPLEX_TOL = 1e-12
MAX_QUADRATURE_DEGREE = 8


# ---------------------------------------------------------------------------
# reference elements
# ---------------------------------------------------------------------------

def _lattice_nodes(dim, order):
    if dim == 3:
        if order != 1:
            raise CapabilityError("3D elements are available for order 1 only")
        return np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    p = order
    nodes = [(0, 0), (p, 0), (0, p)]
    nodes += [(k, 0) for k in range(1, p)]
    nodes += [(p - k, k) for k in range(1, p)]
    nodes += [(0, p - k) for k in range(1, p)]
    nodes += [(i, j) for j in range(1, p) for i in range(1, p) if i + j < p]
    return np.array(nodes, dtype=float) / p


def _exponents(dim, order):
    if dim == 2:
        return [(a, t - a) for t in range(order + 1) for a in range(t, -1, -1)]
    return [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]


class ReferenceElement:
    """Lagrange element of the given order on the unit simplex."""

    def __init__(self, dim, order):
        if dim not in (2, 3):
            raise InvalidArgumentError(f"dim must be 2 or 3, got {dim}")
        if dim == 2 and order not in (1, 2, 3, 4):
            raise CapabilityError(f"2D order must be 1..4, got {order}")
        self.dim = dim
        self.order = order
        self.nodes = _lattice_nodes(dim, order)
        self.n_nodes = len(self.nodes)
        self._exp = np.array(_exponents(dim, order))
        vander = self._monomials(self.nodes)
        self._coef = np.linalg.inv(vander)
        self.n_edge_nodes = order - 1 if dim == 2 else 0
        self.n_interior = (order - 1) * (order - 2) // 2 if dim == 2 else 0

    def _monomials(self, pts):
        return np.prod(pts[:, None, :] ** self._exp[None, :, :], axis=2)

    def _monomial_grads(self, pts):
        out = np.empty((len(pts), len(self._exp), self.dim))
        for d in range(self.dim):
            e = self._exp.copy()
            fac = e[:, d].astype(float)
            e[:, d] = np.maximum(e[:, d] - 1, 0)
            out[:, :, d] = fac * np.prod(pts[:, None, :] ** e[None, :, :], axis=2)
        return out

    def check_inside(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lam_last = 1.0 - pts.sum(axis=1)
        if (pts < -SIMPLEX_TOL).any() or (lam_last < -SIMPLEX_TOL).any():
            raise DomainError("point outside the reference simplex")
        return pts

    def tabulate(self, pts):
        """Shape values (npts, nnodes) at reference points, no domain check."""
        return self._monomials(np.atleast_2d(pts)) @ self._coef

    def tabulate_grads(self, pts):
        """Reference gradients (npts, nnodes, dim), no domain check."""
        g = self._monomial_grads(np.atleast_2d(pts))
        return np.einsum("pmd,mn->pnd", g, self._coef)

    def shape_values(self, xi):
        pts = self.check_inside(xi)
        return self.tabulate(pts)[0]

    def shape_gradients(self, xi):
        pts = self.check_inside(xi)
        return self.tabulate_grads(pts)[0]


@lru_cache(maxsize=None)
def reference_element(dim, order):
    return ReferenceElement(dim, order)


def shape_values(ref, xi):
    return ref.shape_values(xi)


def shape_gradients(ref, xi):
    return ref.shape_gradients(xi)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int


def _conical_product(dim, degree):
    # collapsed Gauss-Jacobi product rule, positive weights, exact to `degree`
    n = max(1, math.ceil((degree + 1) / 2))
    x1, w1 = roots_jacobi(n, dim - 1, 0)
    t1, w1 = (1 + x1) / 2, w1 / 2 ** dim
    if dim == 2:
        x2, w2 = roots_legendre(n)
        t2, w2 = (1 + x2) / 2, w2 / 2
        a, b = np.meshgrid(t1, t2, indexing="ij")
        wa, wb = np.meshgrid(w1, w2, indexing="ij")
        pts = np.column_stack([a.ravel(), (b * (1 - a)).ravel()])
        return pts, (wa * wb).ravel()
    x2, w2 = roots_jacobi(n, 1, 0)
    t2, w2 = (1 + x2) / 2, w2 / 4
    x3, w3 = roots_legendre(n)
    t3, w3 = (1 + x3) / 2, w3 / 2
    a, b, c = np.meshgrid(t1, t2, t3, indexing="ij")
    wa, wb, wc = np.meshgrid(w1, w2, w3, indexing="ij")
    pts = np.column_stack([a.ravel(), (b * (1 - a)).ravel(), (c * (1 - a) * (1 - b)).ravel()])
    return pts, (wa * wb * wc).ravel()


def _symmetrize(pts, wts):
    # average over all vertex permutations, merging coincident points
    bary = np.column_stack([1 - pts.sum(axis=1), pts])
    acc = {}
    perms = list(permutations(range(bary.shape[1])))
    for lam, w in zip(bary, wts):
        for p in perms:
            q = lam[list(p)]
            key = tuple(np.round(q[1:], 13))
            if key in acc:
                acc[key][1] += w / len(perms)
            else:
                acc[key] = [q[1:], w / len(perms)]
    items = sorted(acc.items())
    return np.array([v[0] for _, v in items]), np.array([v[1] for _, v in items])


@lru_cache(maxsize=None)
def quadrature(dim, exactness_degree):
    """Positive-weight simplex rule exact for polynomials up to the degree.

    Degree 0/1 uses the centroid, degree 2 the classic interior vertex-symmetric
    rules.  Higher degrees use a collapsed Gauss-Jacobi product; in 2D it is
    symmetrized over the vertex permutations.
    """
    if dim not in (2, 3):
        raise InvalidArgumentError(f"dim must be 2 or 3, got {dim}")
    deg = int(exactness_degree)
    if deg < 0 or deg > MAX_QUADRATURE_DEGREE:
        raise CapabilityError(f"quadrature degree {exactness_degree} not supported (0..{MAX_QUADRATURE_DEGREE})")
    vol = 0.5 if dim == 2 else 1.0 / 6.0
    if deg <= 1:
        pts = np.full((1, dim), 1.0 / (dim + 1))
        wts = np.array([vol])
    elif deg == 2 and dim == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        wts = np.full(3, 1 / 6)
    elif deg == 2 and dim == 3:
        a = (5 - math.sqrt(5)) / 20
        b = 1 - 3 * a
        pts = np.array([[a, a, a], [b, a, a], [a, b, a], [a, a, b]])
        wts = np.full(4, 1 / 24)
    else:
        pts, wts = _conical_product(dim, deg)
        if dim == 2:
            pts, wts = _symmetrize(pts, wts)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, deg)


# ---------------------------------------------------------------------------
# affine mappings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MappingData:
    J: float
    cofactor: np.ndarray
    jacobian: np.ndarray


def adjugate(F):
    """Adjugate of a stack of 2x2 or 3x3 matrices (..., d, d)."""
    F = np.asarray(F, dtype=float)
    d = F.shape[-1]
    A = np.empty_like(F)
    if d == 2:
        A[..., 0, 0] = F[..., 1, 1]
        A[..., 0, 1] = -F[..., 0, 1]
        A[..., 1, 0] = -F[..., 1, 0]
        A[..., 1, 1] = F[..., 0, 0]
        return A
    c0, c1, c2 = F[..., :, 0], F[..., :, 1], F[..., :, 2]
    A[..., 0, :] = np.cross(c1, c2)
    A[..., 1, :] = np.cross(c2, c0)
    A[..., 2, :] = np.cross(c0, c1)
    return A


def determinant(F):
    F = np.asarray(F, dtype=float)
    if F.shape[-1] == 2:
        return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    c0, c1, c2 = F[..., :, 0], F[..., :, 1], F[..., :, 2]
    return np.einsum("...i,...i->...", c0, np.cross(c1, c2))


def cell_jacobians(vertices, cells):
    """F = dx/dxi with columns x_k - x_0, for every cell."""
    X = vertices[cells]
    return np.swapaxes(X[:, 1:, :] - X[:, :1, :], 1, 2)


def geometry(mesh, cells=None):
    """(J, F, adj) stacks for the requested cells (all by default)."""
    conn = mesh.cells if cells is None else mesh.cells[cells]
    F = cell_jacobians(mesh.vertices, conn)
    return determinant(F), F, adjugate(F)


def mapping_data(mesh, cell):
    F = cell_jacobians(mesh.vertices, mesh.cells[[cell]])[0]
    return MappingData(float(determinant(F)), adjugate(F), F)


# ---------------------------------------------------------------------------
# degrees of freedom
# ---------------------------------------------------------------------------

_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


class DofMap:
    """Global numbering of Lagrange nodes for a mesh and order."""

    def __init__(self, mesh, order):
        self.mesh = mesh
        self.order = order
        self.ref = reference_element(mesh.dim, order)
        nv = len(mesh.vertices)
        cells = mesh.cells
        if order == 1:
            self.cell_dofs = cells.copy()
            self.ndof = nv
            self.edges = None
            self.edge_dofs = None
        else:
            p = order
            ne_loc = p - 1
            pairs = np.stack([cells[:, list(e)] for e in _LOCAL_EDGES], axis=1)
            lo = pairs.min(axis=2)
            hi = pairs.max(axis=2)
            keys = lo.astype(np.int64) * nv + hi
            ukeys, inv = np.unique(keys.ravel(), return_inverse=True)
            inv = inv.reshape(keys.shape)
            self.edges = np.column_stack([ukeys // nv, ukeys % nv])
            self._edge_keys = ukeys
            n_edges = len(ukeys)
            self.edge_dofs = nv + np.arange(n_edges * ne_loc).reshape(n_edges, ne_loc)
            n_int = self.ref.n_interior
            nc = len(cells)
            dofs = np.empty((nc, self.ref.n_nodes), dtype=np.int64)
            dofs[:, :3] = cells
            col = 3
            for k in range(3):
                ed = self.edge_dofs[inv[:, k]]
                forward = pairs[:, k, 0] < pairs[:, k, 1]
                dofs[:, col:col + ne_loc] = np.where(forward[:, None], ed, ed[:, ::-1])
                col += ne_loc
            base = nv + n_edges * ne_loc
            dofs[:, col:] = base + np.arange(nc * n_int).reshape(nc, n_int)
            self.cell_dofs = dofs
            self.ndof = base + nc * n_int
        self._coords = None

    @property
    def coords(self):
        if self._coords is None:
            m = self.mesh
            X0 = m.vertices[m.cells[:, 0]]
            F = cell_jacobians(m.vertices, m.cells)
            pts = X0[:, None, :] + np.einsum("cij,nj->cni", F, self.ref.nodes)
            out = np.empty((self.ndof, m.dim))
            out[self.cell_dofs.ravel()] = pts.reshape(-1, m.dim)
            out[: len(m.vertices)] = m.vertices
            self._coords = out
        return self._coords

    def facet_dofs(self, facets):
        """All dofs lying on the given boundary facets."""
        facets = np.asarray(facets)
        if facets.size == 0:
            return np.zeros(0, dtype=np.int64)
        out = [facets.ravel()]
        if self.order > 1:
            nv = len(self.mesh.vertices)
            keys = facets.min(axis=1).astype(np.int64) * nv + facets.max(axis=1)
            idx = np.searchsorted(self._edge_keys, keys)
            out.append(self.edge_dofs[idx].ravel())
        return np.unique(np.concatenate(out))


def interpolate(mesh, order, u):
    """Nodal Lagrange interpolant of a scalar or vector function."""
    dm = DofMap(mesh, order)
    return np.asarray(u(dm.coords), dtype=float)


# ---------------------------------------------------------------------------
# single-simplex interpolation diagnostics
# ---------------------------------------------------------------------------

def circumradius(vertices):
    """Circumradius of a triangle (inf when collinear)."""
    P = np.asarray(vertices, dtype=float).reshape(3, 2)
    a, b, c = (np.linalg.norm(P[(i + 1) % 3] - P[(i + 2) % 3]) for i in range(3))
    area2 = abs(float(np.linalg.det(np.column_stack([P[1] - P[0], P[2] - P[0]]))))
    return np.inf if area2 == 0 else a * b * c / (2.0 * area2)


def min_altitude(vertices):
    """Smallest altitude of a triangle or tetrahedron."""
    P = np.asarray(vertices, dtype=float)
    d = P.shape[1]
    vol = abs(float(np.linalg.det((P[1:] - P[0]).T)))  # d! * measure
    out = np.inf
    for i in range(d + 1):
        Q = np.delete(P, i, axis=0)
        if d == 2:
            face = np.linalg.norm(Q[1] - Q[0])
        else:
            face = np.linalg.norm(np.cross(Q[1] - Q[0], Q[2] - Q[0]))
        out = min(out, vol / face if face > 0 else 0.0)
    return out


def longest_edge(vertices):
    P = np.asarray(vertices, dtype=float)
    return max(np.linalg.norm(P[i] - P[j]) for i in range(len(P)) for j in range(i + 1, len(P)))


def p1_gradient_error(vertices, u, grad, samples=20):
    """max over a sample grid of |grad u - grad Pi u| for linear interpolation.

    ``samples`` points per edge of a barycentric lattice; an approximation of
    the W^{1,inf} seminorm of the interpolation error on the simplex.
    """
    P = np.asarray(vertices, dtype=float)
    d = P.shape[1]
    F = (P[1:] - P[0]).T
    vals = np.asarray(u(P), dtype=float)
    # grad Pi u solves F^T g = (u_k - u_0)
    g = np.linalg.solve(F.T, vals[1:] - vals[0])
    t = np.linspace(0.0, 1.0, samples)
    grids = np.meshgrid(*([t] * d), indexing="ij")
    ref = np.column_stack([gr.ravel() for gr in grids])
    ref = ref[ref.sum(axis=1) <= 1 + 1e-14]
    X = P[0] + ref @ F.T
    return float(np.max(np.linalg.norm(np.asarray(grad(X)) - g, axis=1)))
