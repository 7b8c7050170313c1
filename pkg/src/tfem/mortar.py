"""Zero-measure band: explicit jump-penalty scheme and the clamp equivalence.

When the band collapses to a line, every cap degenerates to three collinear
nodes: an apex on one chain and a base edge (b0, b1) on the other.  Its
clamped stiffness is the rank-1 block  b^2/(2 J_min) g g^T  with
g = (-(1-s), -s, 1) on (b0, b1, apex), s the split fraction of the apex
along the base.  The jump at the apex is therefore measured against the
linear interpolant of the opposite side, not against a coincident node.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import SparseSystem, assemble_poisson
from .errors import InvalidArgumentError, NotDegenerateError
from .tempering import ALPHA


@dataclass(frozen=True)
class GammaBand:
    """Interior nodes of the collapsed band, ordered along it.

    apex[i] is the node x_i, base[i] the opposite edge, s[i] the split of
    x_i along that edge and sign[i] = +1 when the apex sits on the plus chain
    (jump = plus - minus).  ``t`` holds tangential coordinates of the interior
    nodes and ``t_end`` those of the two single-dof endpoints.
    """
    apex: np.ndarray
    base: np.ndarray
    s: np.ndarray
    sign: np.ndarray
    base_length: np.ndarray
    t: np.ndarray
    endpoints: tuple
    t_end: tuple
    h: float
    axis: int

    @property
    def n_nodes(self):
        return len(self.apex)

    @property
    def length(self):
        return self.t_end[1] - self.t_end[0]

    def segments(self):
        """Segment lengths between consecutive nodes, endpoints included."""
        return np.diff(np.concatenate([[self.t_end[0]], self.t, [self.t_end[1]]]))


def extract_gamma(mesh):
    if mesh.dim != 2:
        raise InvalidArgumentError("zero-measure bands are handled in 2D only")
    if mesh.hbar is None or len(mesh.band_cells) == 0:
        raise NotDegenerateError("mesh has no band")
    if mesh.hbar > 0:
        raise NotDegenerateError(f"band has positive width {mesh.hbar}")
    rows = mesh.band_nodes
    if len(rows) == 0:
        raise NotDegenerateError("band nodes are not recorded for this mesh")
    tg = 1 - int(mesh.band_axis)
    X = mesh.vertices[:, tg]
    apex, b0, b1 = rows[:, 0], rows[:, 1], rows[:, 2]
    length = X[b1] - X[b0]
    s = (X[apex] - X[b0]) / length
    plus = set(mesh.chains[1].tolist())
    sign = np.array([1.0 if a in plus else -1.0 for a in apex])
    order = np.argsort(X[apex], kind="stable")
    chain = mesh.chains[0]
    ends = (int(chain[0]), int(chain[-1]))
    return GammaBand(apex=apex[order], base=np.column_stack([b0, b1])[order], s=s[order],
                     sign=sign[order], base_length=np.abs(length[order]), t=X[apex][order],
                     endpoints=ends, t_end=(float(X[ends[0]]), float(X[ends[1]])),
                     h=float(mesh.h), axis=int(mesh.band_axis))


def jump_vectors(gamma):
    """(dofs (N, 3), coefficients (N, 3)) with jump_i = coef_i . u[dofs_i]."""
    dofs = np.column_stack([gamma.base, gamma.apex])
    coef = np.column_stack([-(1 - gamma.s), -gamma.s, np.ones_like(gamma.s)]) * gamma.sign[:, None]
    return dofs, coef


def penalty_matrix(gamma, Dtilde, n):
    """Sum of rank-1 blocks  w_i g_i g_i^T,  w_i = Dtilde * b_i^2 / (2 h).

    For the regular pattern b_i = h and w_i = Dtilde * h / 2.
    """
    dofs, coef = jump_vectors(gamma)
    w = Dtilde * gamma.base_length ** 2 / (2.0 * gamma.h)
    blocks = w[:, None, None] * coef[:, :, None] * coef[:, None, :]
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_penalty(mesh, gamma, Dtilde, f=None, dirichlet=None, dirichlet_tags=None,
                     interior_Jmin=0.0):
    """Standard FEM on the non-degenerate cells plus the nodal jump penalty.

    ``interior_Jmin`` lets the comparison reuse the clamp on ordinary cells
    (it only matters when J_min exceeds some interior J).
    """
    if Dtilde < 0:
        raise InvalidArgumentError("Dtilde must be >= 0")
    cells = mesh.interior_cells
    base = assemble_poisson(mesh, 1, None, f, dirichlet, dirichlet_tags, Jmin=interior_Jmin, cells=cells)
    P = penalty_matrix(gamma, Dtilde, base.ndof)
    return SparseSystem((base.matrix + P).tocsr(), base.rhs, base.dirichlet_dofs, base.dirichlet_values,
                        True, base.dofmap, None, {"penalty": P, "fem": base.matrix})


def equivalence_check(mesh_zero, Jmin):
    """Compare the clamped assembly against the penalty assembly.

    Returns the least-squares alpha in  D-tilde = alpha h / J_min  and the
    max entry difference at that alpha and at the library constant ALPHA.
    """
    gamma = extract_gamma(mesh_zero)
    clamped = assemble_poisson(mesh_zero, 1, Jmin=Jmin).matrix
    interior_clamp = Jmin if np.any(np.abs(mesh_zero.determinants()[mesh_zero.interior_cells]) < Jmin) else 0.0
    fem = assemble_poisson(mesh_zero, 1, Jmin=interior_clamp, cells=mesh_zero.interior_cells).matrix
    unit = penalty_matrix(gamma, mesh_zero.h / Jmin, clamped.shape[0])
    delta = (clamped - fem).tocsr()
    num = delta.multiply(unit).sum()
    den = unit.multiply(unit).sum()
    alpha = float(num / den)

    def maxdiff(a):
        d = (delta - a * unit).tocoo()
        return float(np.abs(d.data).max()) if d.nnz else 0.0
    return {"max_abs_diff": maxdiff(alpha), "alpha_fitted": alpha,
            "max_abs_diff_at_ALPHA": maxdiff(ALPHA), "scale": float(np.abs(clamped.data).max())}


def _nodal_with_ends(gamma, values):
    v = np.asarray(values, dtype=float)
    if v.shape == (gamma.n_nodes,):
        return np.concatenate([[0.0], v, [0.0]])
    if v.shape == (gamma.n_nodes + 2,):
        return v
    raise InvalidArgumentError(f"expected {gamma.n_nodes} or {gamma.n_nodes + 2} nodal values, got {v.shape}")


def _pl_square_integral(seg, v):
    a, b = v[:-1], v[1:]
    return float(np.sum(seg * (a * a + a * b + b * b) / 3.0))


def trapezoid_jump_bound_check(gamma, f):
    """(int_Gamma f^2, trapezoid nodal sum) for a piecewise-linear f.

    ``f`` is a vector of interior nodal values (endpoints are zero) or a
    callable of the tangential coordinate.  The nodal sum uses trapezoid
    weights, which reduce to (h/2) sum f_i^2 on the regular pattern.
    """
    vals = f(gamma.t) if callable(f) else f
    v = _nodal_with_ends(gamma, vals)
    if v[0] != 0 or v[-1] != 0:
        raise InvalidArgumentError("f must vanish at the band endpoints")
    seg = gamma.segments()
    lhs = _pl_square_integral(seg, v)
    wts = 0.5 * (seg[:-1] + seg[1:])
    rhs = float(np.sum(wts * v[1:-1] ** 2))
    return lhs, rhs


def nodal_jumps(gamma, solution):
    dofs, coef = jump_vectors(gamma)
    u = np.asarray(solution, dtype=float)
    return np.einsum("ij,ij->i", coef, u[dofs])


def jump_norm(gamma, solution=None, jumps=None):
    """Exact L2(Gamma) norm of the piecewise-linear jump.

    Either a solution vector or explicit nodal jumps (interior, or with the
    two endpoint values appended at both ends) must be supplied.
    """
    if (solution is None) == (jumps is None):
        raise InvalidArgumentError("pass exactly one of solution or jumps")
    j = nodal_jumps(gamma, solution) if jumps is None else jumps
    v = _nodal_with_ends(gamma, j)
    return float(np.sqrt(_pl_square_integral(gamma.segments(), v)))
