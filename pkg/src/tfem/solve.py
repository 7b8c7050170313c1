"""Sparse linear solvers for assembled systems (scipy.sparse back end)."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .assembly import ReducedSystem, SparseSystem, apply_dirichlet
from .errors import InvalidArgumentError, NonConvergenceError, SingularMatrixError

METHODS = ("direct-cholesky", "cg-jacobi", "direct-lu", "bicgstab")
ORDERINGS = ("mmd", "rcm", "colamd", "natural")


@dataclass(frozen=True)
class SolverConfig:
    method: str = None  # None -> direct-cholesky if symmetric else direct-lu
    rel_tol: float = 1e-12
    max_iter: int = None  # None -> 20 * ndof
    ordering: str = "mmd"
    refine_steps: int = 3

    def __post_init__(self):
        if self.method is not None and self.method not in METHODS:
            raise InvalidArgumentError(f"unknown solver method {self.method!r}")
        if not 0 < self.rel_tol < 1:
            raise InvalidArgumentError("rel_tol must lie in (0, 1)")
        if self.ordering not in ORDERINGS:
            raise InvalidArgumentError(f"unknown ordering {self.ordering!r}")


@dataclass
class SolveResult:
    x: np.ndarray
    stats: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.x, self.stats))


def _relres(A, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    if not np.isfinite(r):
        return float("inf")
    return r / nb if nb > 0 else r


def _factor(A, method, ordering):
    A = sp.csc_matrix(A)
    perm = None
    if ordering == "rcm":
        perm = reverse_cuthill_mckee(sp.csr_matrix(A), symmetric_mode=True)
        A = A[perm][:, perm].tocsc()
        permc = "NATURAL"
    else:
        permc = {"mmd": "MMD_AT_PLUS_A", "colamd": "COLAMD", "natural": "NATURAL"}[ordering]
    try:
        if method == "direct-cholesky":
            lu = spla.splu(A, permc_spec=permc, diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
            d = lu.U.diagonal()
            if not np.all(d > 0):
                raise SingularMatrixError("matrix is not symmetric positive definite")
        else:
            lu = spla.splu(A, permc_spec="COLAMD" if ordering == "mmd" else permc)
    except RuntimeError as exc:
        raise SingularMatrixError(f"factorization failed: {exc}") from None

    def apply(b):
        if perm is None:
            return lu.solve(b)
        y = np.empty_like(b)
        y[perm] = lu.solve(b[perm])
        return y
    return apply


def _jacobi(A):
    d = A.diagonal().astype(float)
    if np.any(d == 0):
        raise SingularMatrixError("zero diagonal entry; Jacobi preconditioner undefined")
    inv = 1.0 / d
    return spla.LinearOperator(A.shape, matvec=lambda v: inv * v, dtype=float)


def solve_matrix(A, b, cfg=None, symmetric=True):
    cfg = cfg or SolverConfig()
    A = sp.csr_matrix(A)
    n = A.shape[0]
    method = cfg.method or ("direct-cholesky" if symmetric else "direct-lu")
    if n == 0:
        return np.zeros(0), {"iters": 0, "final_residual": 0.0, "method": method}
    if np.linalg.norm(b) == 0:
        return np.zeros(n), {"iters": 0, "final_residual": 0.0, "method": method}
    if method.startswith("direct"):
        fac = _factor(A, method, cfg.ordering)
        x = fac(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("factorization produced non-finite values")
        res = _relres(A, x, b)
        steps = 0
        while res > cfg.rel_tol and steps < cfg.refine_steps:
            x = x + fac(b - A @ x)
            res = _relres(A, x, b)
            steps += 1
        return x, {"iters": steps, "final_residual": res, "method": method,
                   "converged": bool(res <= cfg.rel_tol)}
    max_iter = cfg.max_iter if cfg.max_iter is not None else 20 * n
    M = _jacobi(A)
    count = [0]
    best = [np.inf, None]

    def cb(xk):
        count[0] += 1
    solver = spla.cg if method == "cg-jacobi" else spla.bicgstab
    x, info = solver(A, b, rtol=cfg.rel_tol, atol=0.0, maxiter=max_iter, M=M, callback=cb)
    res = _relres(A, x, b)
    best[0] = min(best[0], res)
    if info != 0 or not np.isfinite(res):
        raise NonConvergenceError(f"{method} did not converge", best[0], count[0])
    return x, {"iters": count[0], "final_residual": res, "method": method, "converged": True}


def solve(system, cfg=None):
    """Solve a SparseSystem (Dirichlet applied here) or a ReducedSystem."""
    red = system if isinstance(system, ReducedSystem) else apply_dirichlet(system)
    x_free, stats = solve_matrix(red.matrix, red.rhs, cfg, red.symmetric)
    stats["ndof"] = red.n
    return SolveResult(red.expand(x_free), stats)
