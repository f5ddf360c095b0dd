"""
Gaussian-process regression on permutations with an exponential kernel.

The observation model is ``Y = Z + eps`` where ``Z`` has covariance
``theta2 exp(-theta1 d)`` and ``eps`` is white noise of variance ``theta3``.
Parameters are fitted by minimising the normalised negative log-likelihood

    L(theta) = (1/n) log det R + (1/n) y^T R^{-1} y

over a box, and predictions use the plug-in posterior mean ``r^T R^{-1} y``.
Every evaluation goes through a single Cholesky factorisation of ``R``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.stats import qmc

from .kernels import KernelParams, ParamBox, gram_from_distances, gram_gradient_from_distances
from .permutation import Distance, Permutation, cross_distances, distance_matrix, parse_permutation

__all__ = [
    "FitOptions",
    "GPFit",
    "NumericalError",
    "TrainingSet",
    "condition",
    "fisher_matrix",
    "fit_mle",
    "likelihood_gradient",
    "load_model",
    "neg_log_likelihood",
    "predict",
    "sample_gp",
    "save_model",
]


class NumericalError(RuntimeError):
    """Cholesky factorisation of a covariance matrix failed."""


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Design points, observed values and the distance used by the kernel.

    The pairwise distance matrix is computed once at construction.
    """

    points: tuple[Permutation, ...]
    values: np.ndarray
    distance: Distance
    D: np.ndarray = field(init=False, repr=False)

    def __init__(self, points: Sequence[Permutation], values, distance: "Distance | str",
                 D: np.ndarray | None = None):
        pts = tuple(points)
        y = np.asarray(values, dtype=float).reshape(-1)
        if len(pts) == 0:
            raise ValueError("a training set needs at least one point")
        if len(pts) != len(y):
            raise ValueError(f"{len(pts)} points but {len(y)} values")
        if not np.all(np.isfinite(y)):
            raise ValueError("observed values must be finite")
        d = Distance.parse(distance)
        if D is None:
            D = distance_matrix(d, pts)
        D = np.asarray(D, dtype=float)
        if D.shape != (len(pts), len(pts)):
            raise ValueError("distance matrix does not match the number of points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return len(self.points)


def _cholesky(R: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(R, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"covariance matrix is not positive definite: {exc}") from exc


def _require_nugget(p: KernelParams):
    if p.theta3 <= 0:
        raise ValueError("likelihood computations need a strictly positive nugget theta3")


def sample_gp(points: Sequence[Permutation], d: "Distance | str", p: KernelParams,
              rng: np.random.Generator, D: np.ndarray | None = None) -> np.ndarray:
    """One joint draw of the noisy field at ``points``."""
    _require_nugget(p)
    if D is None:
        D = distance_matrix(d, points)
    L = _cholesky(gram_from_distances(D, p, with_nugget=True))
    return L @ rng.standard_normal(L.shape[0])


def neg_log_likelihood(t: TrainingSet, p: KernelParams) -> float:
    _require_nugget(p)
    L = _cholesky(gram_from_distances(t.D, p))
    z = linalg.solve_triangular(L, t.values, lower=True, check_finite=False)
    return float((2.0 * np.log(np.diag(L)).sum() + z @ z) / t.n)


def _grad_parts(t: TrainingSet, p: KernelParams):
    L = _cholesky(gram_from_distances(t.D, p))
    Rinv = linalg.cho_solve((L, True), np.eye(t.n), check_finite=False)
    alpha = Rinv @ t.values
    dRs = [gram_gradient_from_distances(t.D, p, c) for c in (1, 2, 3)]
    return L, Rinv, alpha, dRs


def likelihood_gradient(t: TrainingSet, p: KernelParams) -> np.ndarray:
    """Gradient of :func:`neg_log_likelihood` in ``(theta1, theta2, theta3)``."""
    _require_nugget(p)
    _, Rinv, alpha, dRs = _grad_parts(t, p)
    return np.array([(np.sum(Rinv * dR) - alpha @ dR @ alpha) / t.n for dR in dRs])


def _objective_and_gradient(t: TrainingSet, x: np.ndarray) -> tuple[float, np.ndarray]:
    p = KernelParams.from_array(x)
    L, Rinv, alpha, dRs = _grad_parts(t, p)
    value = (2.0 * np.log(np.diag(L)).sum() + t.values @ alpha) / t.n
    grad = np.array([(np.sum(Rinv * dR) - alpha @ dR @ alpha) / t.n for dR in dRs])
    return float(value), grad


def fisher_matrix(t: TrainingSet, p: KernelParams) -> np.ndarray:
    """``M_ij = (1/2n) tr(R^{-1} dR_i R^{-1} dR_j)``."""
    _require_nugget(p)
    L = _cholesky(gram_from_distances(t.D, p))
    A = [linalg.cho_solve((L, True), gram_gradient_from_distances(t.D, p, c), check_finite=False)
         for c in (1, 2, 3)]
    M = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            M[i, j] = M[j, i] = np.sum(A[i] * A[j].T) / (2 * t.n)
    return M


# -- fitting -----------------------------------------------------------------


@dataclass(frozen=True)
class FitOptions:
    """Multistart Nelder-Mead followed by a projected quasi-Newton polish.

    ``n_starts`` counts the box centre plus ``n_starts - 1`` scrambled Sobol
    points drawn with ``seed``.  Nelder-Mead works in box-normalised
    coordinates and stops when the simplex diameter drops below ``xtol``.
    """

    n_starts: int = 5
    seed: int = 0
    xtol: float = 1e-6
    ftol: float = 1e-10
    max_iter: int = 2000
    initial_step: float = 0.15
    polish: bool = True
    gtol: float = 1e-6


@dataclass(frozen=True, eq=False)
class GPFit:
    """A training set conditioned at fixed parameters, ready for prediction."""

    theta_hat: KernelParams
    box: ParamBox | None
    training: TrainingSet
    factor: np.ndarray
    alpha: np.ndarray
    diagnostics: dict


def condition(t: TrainingSet, p: KernelParams, box: ParamBox | None = None,
              diagnostics: dict | None = None) -> GPFit:
    """Factor ``R`` at ``p`` and solve for ``R^{-1} y``."""
    _require_nugget(p)
    L = _cholesky(gram_from_distances(t.D, p))
    alpha = linalg.cho_solve((L, True), t.values, check_finite=False)
    return GPFit(p, box, t, L, alpha, dict(diagnostics or {}))


def _start_points(box: ParamBox, free: np.ndarray, opts: FitOptions) -> list[np.ndarray]:
    """Starts in normalised coordinates of the free dimensions."""
    k = int(free.sum())
    starts = [np.full(k, 0.5)]
    if opts.n_starts > 1:
        sobol = qmc.Sobol(d=k, scramble=True, seed=opts.seed)
        # 2^m draws, keep the first n_starts - 1; interior by construction of scrambling
        m = max(1, int(np.ceil(np.log2(opts.n_starts - 1))))
        pts = sobol.random_base2(m)[: opts.n_starts - 1]
        starts.extend(np.clip(pts, 1e-3, 1 - 1e-3))
    return starts


def fit_mle(t: TrainingSet, box: ParamBox, options: FitOptions | None = None) -> GPFit:
    """Maximum-likelihood parameters over ``box``."""
    opts = options or FitOptions()
    if t.n < 2:
        raise ValueError("maximum-likelihood fitting needs at least two observations")
    lo, hi = box.lo, box.hi
    width = hi - lo
    free = width > 0
    n_free = int(free.sum())

    def to_theta(u: np.ndarray) -> np.ndarray:
        x = lo.copy()
        x[free] = lo[free] + np.clip(u, 0.0, 1.0) * width[free]
        return x

    def objective(u: np.ndarray) -> float:
        return neg_log_likelihood(t, KernelParams.from_array(to_theta(u)))

    diag = {"starts": 0, "iterations": 0, "evaluations": 0, "polished": False}
    if n_free == 0:
        p = KernelParams.from_array(lo)
        value = neg_log_likelihood(t, p)
        diag.update(final_value=value, boundary_hits=0)
        return condition(t, p, box, diag)

    candidates = []
    for start in _start_points(box, free, opts):
        simplex = [start]
        for i in range(n_free):
            v = start.copy()
            v[i] = v[i] + opts.initial_step if v[i] + opts.initial_step <= 1 else v[i] - opts.initial_step
            simplex.append(v)
        res = optimize.minimize(
            objective,
            start,
            method="Nelder-Mead",
            bounds=[(0.0, 1.0)] * n_free,
            options={
                "initial_simplex": np.array(simplex),
                "xatol": opts.xtol,
                "fatol": opts.ftol,
                "maxiter": opts.max_iter,
            },
        )
        diag["starts"] += 1
        diag["iterations"] += int(res.nit)
        diag["evaluations"] += int(res.nfev)
        u = np.clip(res.x, 0.0, 1.0)
        candidates.append((float(objective(u)), tuple(to_theta(u)), u))

    candidates.sort(key=lambda c: (c[0], c[1]))
    best_value, _, best_u = candidates[0]

    if opts.polish:
        def fg(u):
            value, grad = _objective_and_gradient(t, to_theta(u))
            return value, grad[free] * width[free]

        res = optimize.minimize(
            fg, best_u, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * n_free,
            options={"gtol": opts.gtol, "ftol": 1e-15, "maxiter": 500},
        )
        u = np.clip(res.x, 0.0, 1.0)
        value = objective(u)
        diag["evaluations"] += int(res.nfev)
        if value < best_value:
            best_value, best_u = value, u
            diag["polished"] = True

    theta = to_theta(best_u)
    p = KernelParams.from_array(theta)
    hits = int(np.sum(free & (np.isclose(theta, lo, rtol=0, atol=1e-9 * width + 1e-12)
                              | np.isclose(theta, hi, rtol=0, atol=1e-9 * width + 1e-12))))
    diag.update(final_value=float(best_value), boundary_hits=hits)
    return condition(t, p, box, diag)


def predict(f: GPFit, sigma: "Permutation | Sequence[Permutation]"):
    """Plug-in posterior mean at one permutation or a list of them."""
    single = isinstance(sigma, Permutation)
    targets = [sigma] if single else list(sigma)
    p = f.theta_hat
    Dx = cross_distances(f.training.distance, targets, f.training.points).astype(float)
    r = p.theta2 * np.exp(-p.theta1 * Dx)
    # every distance here vanishes exactly on equal permutations
    r += p.theta3 * (Dx == 0)
    out = r @ f.alpha
    return float(out[0]) if single else out


# -- persistence -------------------------------------------------------------


def save_model(f: GPFit) -> str:
    """JSON text holding everything needed to rebuild the predictor."""
    doc = {
        "format": "permgp-model/1",
        "distance": f.training.distance.value,
        "theta": [f.theta_hat.theta1, f.theta_hat.theta2, f.theta_hat.theta3],
        "box": None if f.box is None else {"lower": list(f.box.lower), "upper": list(f.box.upper)},
        "points": [str(s) for s in f.training.points],
        "values": [float(v) for v in f.training.values],
    }
    return json.dumps(doc, indent=2)


def load_model(text: str) -> GPFit:
    doc = json.loads(text)
    if doc.get("format") != "permgp-model/1":
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    box = doc.get("box")
    box = None if box is None else ParamBox(tuple(box["lower"]), tuple(box["upper"]))
    t = TrainingSet([parse_permutation(s) for s in doc["points"]], doc["values"], doc["distance"])
    return condition(t, KernelParams(*doc["theta"]), box)
