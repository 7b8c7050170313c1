"""Clamp floor J_min policies and the tempered weights D and D-tilde."""
from dataclasses import dataclass
import math

from .errors import InvalidArgumentError

#: interpolation constant of the circumradius estimate
C_C = 2.0 * math.sqrt(2.0) + 2.0

#: D-tilde = ALPHA * h / J_min.  With J = 2*area the collapsed cap matrix is
#: h^2/(2 J_min) g g^T while the penalty block is D-tilde * h/2 * g g^T, so
#: the factor is 1; pinned by the equivalence oracle in the mortar tests.
ALPHA = 1.0


@dataclass(frozen=True)
class PowerLaw:
    C: float = 1.0
    k: float = 3.0
    kind = "power"


@dataclass(frozen=True)
class Fixed:
    Jmin: float
    kind = "fixed"


@dataclass(frozen=True)
class TheoreticalOpt:
    w1: float
    w2: float
    Cc: float = C_C
    kind = "optimal"


@dataclass(frozen=True)
class HighOrder:
    C: float = 1.0
    order: int = 1
    kind = "highorder"


@dataclass(frozen=True)
class TemperedWeights:
    Jmin: float
    D: float
    Dtilde: float


def default_policy(dim):
    return PowerLaw(C=1.0, k=dim + 1)


def jmin(policy, h, dim=2, order=1):
    if not h > 0:
        raise InvalidArgumentError(f"h must be positive, got {h}")
    if isinstance(policy, PowerLaw):
        if not policy.C > 0:
            raise InvalidArgumentError("PowerLaw C must be positive")
        return policy.C * h ** policy.k
    if isinstance(policy, Fixed):
        if policy.Jmin < 0:
            raise InvalidArgumentError("Fixed Jmin must be >= 0")
        return float(policy.Jmin)
    if isinstance(policy, TheoreticalOpt):
        if policy.w1 == 0:
            raise InvalidArgumentError("w1 must be nonzero")
        return h ** (dim + 1) * (policy.w2 / policy.w1) * math.sqrt(3.0 * policy.Cc / 8.0)
    if isinstance(policy, HighOrder):
        if not policy.C > 0:
            raise InvalidArgumentError("HighOrder C must be positive")
        return policy.C * h ** (2.2 + 0.8 * policy.order)
    raise InvalidArgumentError(f"unknown policy {policy!r}")


def policy_exponent(policy, dim):
    """Exponent k in J_min = C h^k (nan for Fixed/TheoreticalOpt)."""
    if isinstance(policy, PowerLaw):
        return float(policy.k)
    if isinstance(policy, HighOrder):
        return 2.2 + 0.8 * policy.order
    if isinstance(policy, TheoreticalOpt):
        return float(dim + 1)
    return float("nan")


def policy_constant(policy):
    if isinstance(policy, (PowerLaw, HighOrder)):
        return float(policy.C)
    if isinstance(policy, TheoreticalOpt):
        return (policy.w2 / policy.w1) * math.sqrt(3.0 * policy.Cc / 8.0)
    return float("nan")


def clamped_inverse(J, Jmin):
    if J < 0 or Jmin < 0:
        raise InvalidArgumentError("J and Jmin must be non-negative")
    if J == 0 and Jmin == 0:
        raise InvalidArgumentError("J and Jmin are both zero")
    return 1.0 / max(J, Jmin)


def optimal_D(hbar, h, w1, w2, Cc=C_C):
    if not h > 0 or hbar < 0:
        raise InvalidArgumentError("need h > 0 and hbar >= 0")
    if w2 == 0:
        raise InvalidArgumentError("w2 must be nonzero")
    return min(hbar / h ** 2 * (w1 / w2) * math.sqrt(2.0 / (3.0 * Cc)), 1.0)


def penalty_strength_Dtilde(h, Jmin):
    if not h > 0 or not Jmin > 0:
        raise InvalidArgumentError("need h > 0 and Jmin > 0")
    return ALPHA * h / Jmin


def tempered_weights(J, Jmin, h):
    D = J / max(J, Jmin) if J > 0 else 0.0
    return TemperedWeights(Jmin, D, penalty_strength_Dtilde(h, Jmin))
