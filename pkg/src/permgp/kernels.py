"""
Exponential covariance kernels on permutations.

The family is ``K(s, s') = theta2 * exp(-theta1 * d(s, s'))`` with an optional
nugget ``theta3 * 1[s == s']``.  Gram matrices are built from an integer
distance matrix so the same design can be re-evaluated at many parameter
values without recomputing distances.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .permutation import Distance, Permutation, distance, distance_matrix

__all__ = [
    "KernelParams",
    "ParamBox",
    "UnsupportedDistanceError",
    "feature_constant",
    "feature_inner",
    "feature_map",
    "gram_from_distances",
    "gram_gradient",
    "gram_gradient_from_distances",
    "gram_matrix",
    "kernel",
    "kernel_nugget",
    "matrix_to_csv",
]


class UnsupportedDistanceError(ValueError):
    """Raised when an operation has no construction for the requested distance."""


@dataclass(frozen=True)
class KernelParams:
    """Inverse length-scale ``theta1``, variance ``theta2`` and nugget ``theta3``."""

    theta1: float
    theta2: float
    theta3: float = 0.0

    def __post_init__(self):
        vals = (self.theta1, self.theta2, self.theta3)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"kernel parameters must be finite, got {vals}")
        if self.theta1 <= 0 or self.theta2 <= 0:
            raise ValueError(f"theta1 and theta2 must be > 0, got {vals}")
        if self.theta3 < 0:
            raise ValueError(f"theta3 must be >= 0, got {self.theta3}")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3], dtype=float)

    @classmethod
    def from_array(cls, x) -> "KernelParams":
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), float(x[1]), float(x[2]))


@dataclass(frozen=True)
class ParamBox:
    """Axis-aligned box ``prod_i [lower_i, upper_i]`` with ``0 < lower_i <= upper_i``."""

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("parameter box needs three lower and three upper bounds")
        for a, b in zip(lo, hi):
            if not (0 < a <= b < np.inf):
                raise ValueError(f"invalid bounds {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, p: "KernelParams | np.ndarray") -> bool:
        x = p.as_array() if isinstance(p, KernelParams) else np.asarray(p)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    @classmethod
    def point(cls, p: KernelParams) -> "ParamBox":
        t = tuple(p.as_array())
        return cls(t, t)


def kernel(d: "Distance | str", p: KernelParams, a: Permutation, b: Permutation) -> float:
    return p.theta2 * float(np.exp(-p.theta1 * distance(d, a, b)))


def kernel_nugget(d: "Distance | str", p: KernelParams, a: Permutation, b: Permutation) -> float:
    return kernel(d, p, a, b) + (p.theta3 if a == b else 0.0)


def gram_from_distances(D: np.ndarray, p: KernelParams, with_nugget: bool = True) -> np.ndarray:
    """``theta2 exp(-theta1 D)`` plus ``theta3 I`` when ``with_nugget``.

    The nugget sits on the matrix diagonal only, so repeated design points
    still give a positive definite matrix.
    """
    R = p.theta2 * np.exp(-p.theta1 * np.asarray(D, dtype=float))
    if with_nugget and p.theta3:
        R[np.diag_indices_from(R)] += p.theta3
    return R


def gram_matrix(
    d: "Distance | str",
    p: KernelParams,
    obs: Sequence[Permutation],
    with_nugget: bool = True,
) -> np.ndarray:
    if len(obs) == 0:
        raise ValueError("gram_matrix needs at least one observation")
    return gram_from_distances(distance_matrix(d, obs), p, with_nugget)


def gram_gradient_from_distances(D: np.ndarray, p: KernelParams, component: int) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if component == 1:
        return -D * p.theta2 * np.exp(-p.theta1 * D)
    if component == 2:
        return np.exp(-p.theta1 * D)
    if component == 3:
        return np.eye(D.shape[0])
    raise ValueError(f"component must be 1, 2 or 3, got {component}")


def gram_gradient(
    d: "Distance | str",
    p: KernelParams,
    obs: Sequence[Permutation],
    component: int,
) -> np.ndarray:
    """Entrywise derivative of the nugget Gram matrix with respect to ``theta_component``."""
    if component not in (1, 2, 3):
        raise ValueError(f"component must be 1, 2 or 3, got {component}")
    return gram_gradient_from_distances(distance_matrix(d, obs), p, component)


# -- feature maps ------------------------------------------------------------


def _feature_check(d: "Distance | str", a: Permutation, n: int) -> tuple[Distance, np.ndarray]:
    d = Distance.parse(d)
    if d is Distance.RANKCORR:
        raise UnsupportedDistanceError("no feature map is available for the rank-correlation distance")
    return d, a.padded(n)


def feature_constant(d: "Distance | str", n: int) -> Fraction:
    """``C_n`` such that ``C_n - d(a, b) = <Phi(a), Phi(b)>`` on ``S_n``."""
    d = Distance.parse(d)
    if d is Distance.KENDALL:
        return Fraction(n * (n - 1), 4)
    if d is Distance.HAMMING:
        return Fraction(n)
    if d is Distance.FOOTRULE:
        return Fraction(n * n)
    raise UnsupportedDistanceError("no feature map is available for the rank-correlation distance")


def _integer_features(d: Distance, x: np.ndarray) -> np.ndarray:
    n = len(x)
    if d is Distance.KENDALL:
        iu, ju = np.triu_indices(n, k=1)
        return np.sign(x[iu] - x[ju])
    cols = np.arange(1, n + 1)
    if d is Distance.HAMMING:
        return (x[:, None] == cols[None, :]).astype(np.int64).ravel()
    below = (cols[None, :] <= x[:, None]).astype(np.int64)
    above = (cols[None, :] > x[:, None]).astype(np.int64)
    return np.concatenate([below.ravel(), above.ravel()])


def feature_map(d: "Distance | str", a: Permutation, n: int) -> np.ndarray:
    """Real feature vector with ``<Phi(a), Phi(b)> = C_n - d(a, b)``.

    Dimensions are ``n(n-1)/2`` (Kendall), ``n^2`` (Hamming) and ``2 n^2``
    (footrule).  The Kendall map has entries ``+-1/sqrt(2)``; use
    :func:`feature_inner` for exact inner products.
    """
    d, x = _feature_check(d, a, n)
    phi = _integer_features(d, x).astype(float)
    if d is Distance.KENDALL:
        phi /= np.sqrt(2.0)
    return phi


def feature_inner(d: "Distance | str", a: Permutation, b: Permutation, n: int) -> Fraction:
    """Exact ``<Phi(a), Phi(b)>`` computed from the integer form of the features."""
    d, x = _feature_check(d, a, n)
    _, y = _feature_check(d, b, n)
    raw = int(np.dot(_integer_features(d, x), _integer_features(d, y)))
    return Fraction(raw, 2) if d is Distance.KENDALL else Fraction(raw)


def matrix_to_csv(M: np.ndarray) -> str:
    """Row-major CSV with full symmetric storage."""
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(M), delimiter=",", fmt="%.17g")
    return buf.getvalue()
