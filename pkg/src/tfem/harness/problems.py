"""Manufactured problems with closed-form data."""
from dataclasses import dataclass, field

import numpy as np
import sympy

TWO_PI = 2.0 * np.pi


@dataclass
class ManufacturedProblem:
    dim: int
    exact: callable
    grad: callable
    source: callable
    descriptor: str
    dirichlet: callable = None
    hessian: callable = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dirichlet is None:
            self.dirichlet = self.exact


def poisson_2d(freq=1):
    """u = sin(2 pi m x) cos(2 pi m y), f = 8 pi^2 m^2 u  (m = freq)."""
    k = TWO_PI * freq

    def u(X):
        return np.sin(k * X[:, 0]) * np.cos(k * X[:, 1])

    def g(X):
        x, y = X[:, 0], X[:, 1]
        return k * np.column_stack([np.cos(k * x) * np.cos(k * y),
                                    -np.sin(k * x) * np.sin(k * y)])

    def hess(X):
        x, y = X[:, 0], X[:, 1]
        sx, cx, sy, cy = np.sin(k * x), np.cos(k * x), np.sin(k * y), np.cos(k * y)
        H = np.empty((len(X), 2, 2))
        H[:, 0, 0] = -k * k * sx * cy
        H[:, 1, 1] = -k * k * sx * cy
        H[:, 0, 1] = H[:, 1, 0] = -k * k * cx * sy
        return H

    name = "sin(2pi x) cos(2pi y)" if freq == 1 else f"sin({2 * freq}pi x) cos({2 * freq}pi y)"
    return ManufacturedProblem(2, u, g, lambda X: 2 * k * k * u(X), name, hessian=hess,
                               extras={"freq": freq})


def poisson_3d():
    """u = cos(2 pi x) sin(2 pi y) cos(2 pi z), f = 12 pi^2 u."""
    def u(X):
        return np.cos(TWO_PI * X[:, 0]) * np.sin(TWO_PI * X[:, 1]) * np.cos(TWO_PI * X[:, 2])

    def g(X):
        x, y, z = (TWO_PI * X[:, i] for i in range(3))
        return TWO_PI * np.column_stack([-np.sin(x) * np.sin(y) * np.cos(z),
                                         np.cos(x) * np.cos(y) * np.cos(z),
                                         -np.cos(x) * np.sin(y) * np.sin(z)])

    return ManufacturedProblem(3, u, g, lambda X: 3 * TWO_PI ** 2 * u(X),
                               "cos(2pi x) sin(2pi y) cos(2pi z)")


def periodic_band_problem(dim=2, period=0.1):
    """Solution periodic along the band (y) so every band length sees the same data.

    u = cos(2 pi x) sin(2 pi y / period) in 2D, times cos(2 pi z / period) in 3D.
    """
    ky = TWO_PI / period
    if dim == 2:
        def u(X):
            return np.cos(TWO_PI * X[:, 0]) * np.sin(ky * X[:, 1])

        def g(X):
            x, y = X[:, 0], X[:, 1]
            return np.column_stack([-TWO_PI * np.sin(TWO_PI * x) * np.sin(ky * y),
                                    ky * np.cos(TWO_PI * x) * np.cos(ky * y)])
        lap = TWO_PI ** 2 + ky ** 2
        return ManufacturedProblem(2, u, g, lambda X: lap * u(X),
                                   f"cos(2pi x) sin(2pi y/{period})", extras={"period": period})

    def u3(X):
        return np.cos(TWO_PI * X[:, 0]) * np.sin(ky * X[:, 1]) * np.cos(ky * X[:, 2])

    def g3(X):
        x, y, z = X[:, 0], X[:, 1], X[:, 2]
        return np.column_stack([-TWO_PI * np.sin(TWO_PI * x) * np.sin(ky * y) * np.cos(ky * z),
                                ky * np.cos(TWO_PI * x) * np.cos(ky * y) * np.cos(ky * z),
                                -ky * np.cos(TWO_PI * x) * np.sin(ky * y) * np.sin(ky * z)])
    lap3 = TWO_PI ** 2 + 2 * ky ** 2
    return ManufacturedProblem(3, u3, g3, lambda X: lap3 * u3(X),
                               f"cos(2pi x) sin(2pi y/{period}) cos(2pi z/{period})",
                               extras={"period": period})


# ---------------------------------------------------------------------------
# advection
# ---------------------------------------------------------------------------

def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def make_advection_problem(center=0.5, width=0.2):
    """Rotating field v = (y, -x); u is a smoothstep of the radius.

    Inflow boundary of the unit square is the left (x = 0) and top (y = 1) side.
    """
    r0 = center - width / 2.0

    def u(X):
        return smoothstep((np.hypot(X[:, 0], X[:, 1]) - r0) / width)

    def g(X):
        r = np.hypot(X[:, 0], X[:, 1])
        t = (r - r0) / width
        inside = (t > 0) & (t < 1)
        ds = np.where(inside, 6 * t * (1 - t) / width, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            fac = np.where(r > 0, ds / np.where(r > 0, r, 1.0), 0.0)
        return X[:, :2] * fac[:, None]

    def velocity(X):
        return np.column_stack([X[:, 1], -X[:, 0]])

    prob = ManufacturedProblem(2, u, g, lambda X: np.zeros(len(X)),
                               f"smoothstep radius center={center} width={width}")
    prob.extras.update(velocity=velocity, inflow_tags=(10, 13), center=center, width=width)
    return prob


# ---------------------------------------------------------------------------
# elasticity
# ---------------------------------------------------------------------------

def make_elasticity_problem(E=1.0, nu=0.3):
    """u = (sin 2pi x sin 2pi y, cos 2pi x cos 2pi y); body force from sympy."""
    x, y = sympy.symbols("x y")
    ux = sympy.sin(2 * sympy.pi * x) * sympy.sin(2 * sympy.pi * y)
    uy = sympy.cos(2 * sympy.pi * x) * sympy.cos(2 * sympy.pi * y)
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    exx, eyy = sympy.diff(ux, x), sympy.diff(uy, y)
    exy = (sympy.diff(ux, y) + sympy.diff(uy, x)) / 2
    sxx = lam * (exx + eyy) + 2 * mu * exx
    syy = lam * (exx + eyy) + 2 * mu * eyy
    sxy = 2 * mu * exy
    fx = -(sympy.diff(sxx, x) + sympy.diff(sxy, y))
    fy = -(sympy.diff(sxy, x) + sympy.diff(syy, y))
    to_np = lambda e: sympy.lambdify((x, y), sympy.simplify(e), "numpy")
    funcs = [to_np(e) for e in (ux, uy, fx, fy)]
    grads = [to_np(sympy.diff(c, v)) for c in (ux, uy) for v in (x, y)]

    def _col(fn, X):
        return np.broadcast_to(np.asarray(fn(X[:, 0], X[:, 1]), dtype=float), (len(X),))

    def u(X):
        return np.column_stack([_col(funcs[0], X), _col(funcs[1], X)])

    def f(X):
        return np.column_stack([_col(funcs[2], X), _col(funcs[3], X)])

    def g(X):
        vals = [_col(fn, X) for fn in grads]
        return np.stack([np.column_stack(vals[:2]), np.column_stack(vals[2:])], axis=1)

    prob = ManufacturedProblem(2, u, g, f, "elasticity (sin sin, cos cos)")
    prob.extras.update(E=E, nu=nu)
    return prob
