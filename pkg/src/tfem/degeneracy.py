"""Closed-form spectral analysis of the P1 Laplace matrix on one triangle.

The matrix analysed here is the cotangent matrix

    [[c2+c3, -c3, -c2], [-c3, c1+c3, -c1], [-c2, -c1, c1+c2]],   ci = cot(theta_i)

in the vertex order (x1, x2, x3) where (x1, x2) is the longest edge and x3
the opposite vertex.  It equals twice the P1 stiffness matrix
(assembly returns the latter).  Its nonzero eigenvalues have product 3.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import DegenerateShapeError, InvalidArgumentError

_EQUI_TOL = 1e-12


@dataclass(frozen=True)
class TriangleShape:
    f: float
    s: float
    theta: tuple
    c1: float
    c2: float
    c3: float
    c: float
    order: tuple = (0, 1, 2)  # input vertex indices playing the roles x1, x2, x3


@dataclass(frozen=True)
class SpectralData:
    lam: tuple
    v: tuple
    e: tuple


def shape_from_fs(f, s):
    """TriangleShape from flatness and symmetry (x1=(0,0), x2=(1,0), x3=(s,f))."""
    if f <= 0:
        raise DegenerateShapeError("flatness must be positive")
    c1 = s / f
    c2 = (1 - s) / f
    c3 = f - s * (1 - s) / f
    th1 = math.atan2(f, s)
    th2 = math.atan2(f, 1 - s)
    return TriangleShape(f, s, (th1, th2, math.pi - th1 - th2), c1, c2, c3,
                         f + (1 - s + s * s) / f)


def shape_params(vertices):
    """Flatness f and symmetry s with the longest edge as base.

    Longest-edge ties go to the edge opposite the lowest vertex index.
    """
    P = np.asarray(vertices, dtype=float).reshape(3, 2)
    lens = [np.linalg.norm(P[(k + 2) % 3] - P[(k + 1) % 3]) for k in range(3)]
    if max(lens) == 0:
        raise InvalidArgumentError("all vertices coincide")
    k = int(np.argmax(lens))
    i1, i2, i3 = (k + 1) % 3, (k + 2) % 3, k
    x1, x2, x3 = P[i1], P[i2], P[i3]
    base = x2 - x1
    L = lens[k]
    t = float(np.dot(x3 - x1, base)) / L
    height = abs(base[0] * (x3 - x1)[1] - base[1] * (x3 - x1)[0]) / L
    f = height / L
    s = min(max(t / L, 0.0), 1.0)
    th1 = math.atan2(height, t)
    th2 = math.atan2(height, L - t)
    th3 = math.pi - th1 - th2
    if f > 0:
        c1 = s / f
        c2 = (1 - s) / f
        c3 = f - s * (1 - s) / f
        c = f + (1 - s + s * s) / f
    else:
        c1 = c2 = c3 = c = math.inf
    return TriangleShape(f, s, (th1, th2, th3), c1, c2, c3, c, (i1, i2, i3))


def cotangent_stiffness(shape):
    if not shape.f > 0:
        raise DegenerateShapeError("cotangents are infinite for a flat triangle (f = 0)")
    c1, c2, c3 = shape.c1, shape.c2, shape.c3
    return np.array([[c2 + c3, -c3, -c2],
                     [-c3, c1 + c3, -c1],
                     [-c2, -c1, c1 + c2]])


def spectral(shape):
    if not shape.f > 0:
        raise DegenerateShapeError("closed forms undefined for f = 0")
    c1, c2, c3, c = shape.c1, shape.c2, shape.c3, shape.c
    disc = c * c - 3.0
    if disc < -1e-9 * c * c:
        raise DegenerateShapeError(f"c^2 < 3 ({c * c}); invalid shape parameters")
    beta = math.sqrt(max(disc, 0.0))
    lam = (0.0, c - beta, c + beta)
    if disc > 0:
        # c - beta loses digits when beta ~ c; use lambda2 * lambda3 = 3
        lam = (0.0, 3.0 / (c + beta), c + beta)
    v1 = np.ones(3)
    if beta <= _EQUI_TOL * c:
        # equilateral: double eigenvalue, pick an orthogonal pair
        v2 = np.array([1.0, 1.0, -2.0])
        v3 = np.array([1.0, -1.0, 0.0])
    else:
        v2 = np.array([c3 - c1 - beta, -c3 + c2 + beta, c1 - c2])
        alpha = (2 * c1 - c2 - c3 + beta) / (c1 + c2 - 2 * c3 + 2 * beta)
        v3 = np.array([1 - alpha, alpha, -1.0])
    e = tuple(l * float(v @ v) / 2.0 for l, v in zip(lam, (v1, v2, v3)))
    return SpectralData(lam, (v1, v2, v3), e)


def asymptotic_eigenvalues(f, s):
    """Leading-order small-f behaviour of lambda2 and lambda3."""
    q = 1 - s + s * s
    return 1.5 * f / q, 2.0 * q / f


def limit_kinematics(s):
    """Limit direction (1-s, s, -1) of the stiff mode as f -> 0.

    A finite-energy nodal vector u on a collapsed triangle satisfies
    u . (1-s, s, -1) = 0, i.e. u3 is the linear interpolation of u1, u2.
    """
    if not 0.0 <= s <= 1.0:
        raise InvalidArgumentError("s must lie in [0, 1]")
    return np.array([1.0 - s, s, -1.0])


def quadratic_energy(K, u):
    u = np.asarray(u, dtype=float)
    return 0.5 * float(u @ K @ u)
