"""
Increasing-domain observation scheme and Monte-Carlo studies of the ML estimator.

Design points follow ``sigma_j = tau_j c_j`` in ``S_{k+j}``, with ``tau_j``
uniform on ``S_k`` and ``c_j`` the cycle ``(j+k  j+k-1  ...  1)``.  Each
replicate draws its own design and field from a generator seeded by
``(master_seed, n, replicate)``, so results do not depend on scheduling.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .gp import FitOptions, TrainingSet, condition, fisher_matrix, fit_mle, predict, sample_gp
from .kernels import KernelParams, ParamBox
from .permutation import (
    Distance,
    Permutation,
    compose,
    cycle_cn,
    distance_matrix,
    parse_permutation,
    random_permutation,
)

__all__ = [
    "ConditionReport",
    "ConfigError",
    "ExperimentConfig",
    "ObservationScheme",
    "ReplicateResult",
    "generate_scheme",
    "load_config",
    "normality_statistics",
    "parse_cycle",
    "replicate_rows",
    "run_consistency",
    "run_density",
    "run_prediction",
    "run_replicates",
    "scheme_constant",
    "summarize",
    "summary_rows",
    "verify_conditions",
    "write_csv",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ObservationScheme:
    k: int
    count: int
    seed: int = 0

    def __post_init__(self):
        if self.k < 0 or self.count < 0:
            raise ValueError(f"scheme needs k >= 0 and count >= 0, got k={self.k}, count={self.count}")


def generate_scheme(s: ObservationScheme, rng: np.random.Generator | None = None) -> list[Permutation]:
    """``sigma_j = tau_j c_j`` for ``j = 1..count``."""
    rng = np.random.default_rng(s.seed) if rng is None else rng
    return [compose(random_permutation(s.k, rng), cycle_cn(j, s.k)) for j in range(1, s.count + 1)]


def scheme_constant(d: "Distance | str", k: int) -> int:
    """Bound on consecutive distances of the scheme for head size ``k``."""
    d = Distance.parse(d)
    return {
        Distance.KENDALL: 1 + k * (k - 1) // 2,
        Distance.HAMMING: 2 + k,
        Distance.FOOTRULE: 2 + 2 * k * (k + 1),
        Distance.RANKCORR: 2 + k**3,
    }[d]


@dataclass(frozen=True)
class ConditionReport:
    min_ratio: float
    max_consecutive: int
    beta: float
    constant: int | None = None

    @property
    def condition1(self) -> bool:
        return self.min_ratio >= 1

    @property
    def condition2(self) -> bool:
        return self.constant is None or self.max_consecutive <= self.constant

    @property
    def ok(self) -> bool:
        return self.condition1 and self.condition2


def verify_conditions(points: Sequence[Permutation], d: "Distance | str", beta: float = 1.0,
                      k: int | None = None) -> ConditionReport:
    """Check ``d(s_i, s_j) >= |i-j|^beta`` on all pairs and bound consecutive distances.

    When ``k`` is given the consecutive bound is compared with the scheme
    constant for that head size.
    """
    if len(points) < 2:
        raise ValueError("need at least two points")
    D = distance_matrix(d, points).astype(float)
    idx = np.arange(len(points))
    gap = np.abs(idx[:, None] - idx[None, :]).astype(float)
    off = ~np.eye(len(points), dtype=bool)
    min_ratio = float(np.min(D[off] / gap[off] ** beta))
    max_consec = int(np.max(np.diag(D, 1)))
    return ConditionReport(min_ratio, max_consec, beta, None if k is None else scheme_constant(d, k))


def parse_cycle(text: str) -> Permutation:
    """Cycle notation such as ``"(1 4 6)"`` or ``"(1 2)(3 5)"``."""
    image: dict[int, int] = {}
    body = text.replace(",", " ").strip()
    if not body.startswith("("):
        raise ValueError(f"not in cycle notation: {text!r}")
    for chunk in body.split(")"):
        chunk = chunk.strip().lstrip("(").strip()
        if not chunk:
            continue
        elems = [int(v) for v in chunk.split()]
        if len(set(elems)) != len(elems) or any(v in image for v in elems):
            raise ValueError(f"cycles must be disjoint: {text!r}")
        for a, b in zip(elems, elems[1:] + elems[:1]):
            image[a] = b
    m = max(image, default=0)
    return Permutation([image.get(i, i) for i in range(1, m + 1)])


DEFAULT_TEST_POINT = "(1 4 6)"


@dataclass(frozen=True)
class ExperimentConfig:
    distance: Distance = Distance.KENDALL
    theta_star: KernelParams = KernelParams(0.1, 0.8, 0.3)
    box: ParamBox = ParamBox((0.02, 0.3, 0.1), (2.0, 2.0, 1.0))
    k: int = 3
    n_values: tuple[int, ...] = (20, 60, 150)
    replicates: int = 1000
    epsilon: float = 0.5
    pred_threshold: float = 0.3
    test_point: Permutation = field(default_factory=lambda: parse_cycle(DEFAULT_TEST_POINT))
    master_seed: int = 0
    parallelism: int = 1
    fit: FitOptions = FitOptions()

    def __post_init__(self):
        object.__setattr__(self, "distance", Distance.parse(self.distance))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if not self.box.contains(self.theta_star):
            raise ConfigError(f"theta_star {self.theta_star} lies outside the parameter box")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.n_values or any(n < 2 for n in self.n_values):
            raise ConfigError("n_values must be non-empty with every n >= 2")
        if list(self.n_values) != sorted(self.n_values):
            raise ConfigError("n_values must be ascending")
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.theta_star.theta3 <= 0:
            raise ConfigError("theta_star needs a positive nugget")


def _floats(text: str, count: int, key: str) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    if len(vals) != count:
        raise ConfigError(f"{key} needs {count} comma-separated numbers, got {text!r}")
    return vals


def load_config(text: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from INI text (section ``[experiment]``) plus overrides.

    Keys: ``distance``, ``theta_star``, ``box_lower``, ``box_upper``, ``k``,
    ``n_values``, ``replicates``, ``epsilon``, ``pred_threshold``,
    ``test_point`` (one-line ``4,2,3,6,5,1`` or cycle ``(1 4 6)``),
    ``master_seed``, ``parallelism``, ``n_starts``.
    """
    raw: dict[str, str] = {}
    if text:
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        if "experiment" not in parser:
            raise ConfigError("config needs an [experiment] section")
        raw.update(parser["experiment"])
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[key] = str(val)
    known = {"distance", "theta_star", "box_lower", "box_upper", "k", "n_values", "replicates",
             "epsilon", "pred_threshold", "test_point", "master_seed", "parallelism", "n_starts"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    base = ExperimentConfig()
    try:
        kw: dict = {}
        if "distance" in raw:
            kw["distance"] = Distance.parse(raw["distance"])
        if "theta_star" in raw:
            kw["theta_star"] = KernelParams(*_floats(raw["theta_star"], 3, "theta_star"))
        if "box_lower" in raw or "box_upper" in raw:
            lo = _floats(raw["box_lower"], 3, "box_lower") if "box_lower" in raw else base.box.lower
            hi = _floats(raw["box_upper"], 3, "box_upper") if "box_upper" in raw else base.box.upper
            kw["box"] = ParamBox(lo, hi)
        for key in ("k", "replicates", "master_seed", "parallelism"):
            if key in raw:
                kw[key] = int(raw[key])
        for key in ("epsilon", "pred_threshold"):
            if key in raw:
                kw[key] = float(raw[key])
        if "n_values" in raw:
            kw["n_values"] = tuple(int(v) for v in raw["n_values"].split(",") if v.strip())
        if "test_point" in raw:
            tp = raw["test_point"].strip()
            kw["test_point"] = parse_cycle(tp) if tp.startswith("(") else parse_permutation(tp)
        if "n_starts" in raw:
            kw["fit"] = replace(base.fit, n_starts=int(raw["n_starts"]))
        return replace(base, **kw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- replicates --------------------------------------------------------------


@dataclass(frozen=True)
class ReplicateResult:
    n: int
    replicate: int
    theta_hat: tuple[float, float, float]
    error_norm: float
    pred_diff: float
    boundary_hits: int
    standardized: tuple[float, float, float]


class ReplicateFailure(RuntimeError):
    def __init__(self, n: int, replicate: int, cause: BaseException):
        super().__init__(f"replicate {replicate} at n={n} failed: {cause}")
        self.n = n
        self.replicate = replicate


def replicate_rng(master_seed: int, n: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, n, replicate]))


def _run_one(cfg: ExperimentConfig, n: int, rep: int) -> ReplicateResult:
    try:
        rng = replicate_rng(cfg.master_seed, n, rep)
        points = generate_scheme(ObservationScheme(cfg.k, n), rng)
        D = distance_matrix(cfg.distance, points)
        y = sample_gp(points, cfg.distance, cfg.theta_star, rng, D=D)
        t = TrainingSet(points, y, cfg.distance, D=D)
        opts = replace(cfg.fit, seed=int(rng.integers(2**31)))
        fit = fit_mle(t, cfg.box, opts)
        oracle = condition(t, cfg.theta_star)
        pred_diff = abs(predict(fit, cfg.test_point) - predict(oracle, cfg.test_point))
        theta = fit.theta_hat.as_array()
        delta = theta - cfg.theta_star.as_array()
        M = fisher_matrix(t, cfg.theta_star)
        w, V = linalg.eigh(M)
        root = (V * np.sqrt(np.clip(w, 0, None))) @ V.T
        z = math.sqrt(n) * (root @ delta)
        return ReplicateResult(
            n=n,
            replicate=rep,
            theta_hat=tuple(float(v) for v in theta),
            error_norm=float(np.linalg.norm(delta)),
            pred_diff=float(pred_diff),
            boundary_hits=int(fit.diagnostics["boundary_hits"]),
            standardized=tuple(float(v) for v in z),
        )
    except Exception as exc:  # abort the run with replicate context
        raise ReplicateFailure(n, rep, exc) from exc


def _run_task(args):
    return _run_one(*args)


def run_replicates(cfg: ExperimentConfig) -> list[ReplicateResult]:
    """All replicates for every ``n``, ordered by ``(n, replicate)``."""
    check = generate_scheme(ObservationScheme(cfg.k, max(cfg.n_values), cfg.master_seed))
    report = verify_conditions(check, cfg.distance, beta=1.0, k=cfg.k)
    if not report.ok:
        raise ConfigError(f"observation scheme violates the increasing-domain conditions: {report}")
    tasks = [(cfg, n, rep) for n in cfg.n_values for rep in range(cfg.replicates)]
    if cfg.parallelism == 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * cfg.parallelism))))


@dataclass(frozen=True)
class SummaryRow:
    distance: str
    n: int
    p_hat: float
    stderr: float
    replicates: int


def summarize(results: Iterable[ReplicateResult], cfg: ExperimentConfig, experiment: str) -> list[SummaryRow]:
    rows = []
    by_n: dict[int, list[ReplicateResult]] = {}
    for r in results:
        by_n.setdefault(r.n, []).append(r)
    for n in sorted(by_n):
        ind = [_indicator(r, cfg, experiment) for r in by_n[n]]
        p = float(np.mean(ind))
        rows.append(SummaryRow(cfg.distance.value, n, p, math.sqrt(p * (1 - p) / len(ind)), len(ind)))
    return rows


def _indicator(r: ReplicateResult, cfg: ExperimentConfig, experiment: str) -> int:
    if experiment == "prediction":
        return int(r.pred_diff > cfg.pred_threshold)
    return int(r.error_norm > cfg.epsilon)


def _value(r: ReplicateResult, experiment: str) -> float:
    return r.pred_diff if experiment == "prediction" else r.error_norm


REPLICATE_COLUMNS = ["experiment", "distance", "n", "replicate", "theta1_hat", "theta2_hat",
                     "theta3_hat", "indicator", "value"]
SUMMARY_COLUMNS = ["distance", "n", "p_hat", "stderr", "replicates"]


def replicate_rows(results: Iterable[ReplicateResult], cfg: ExperimentConfig, experiment: str) -> list[list]:
    return [
        [experiment, cfg.distance.value, r.n, r.replicate, *(repr(v) for v in r.theta_hat),
         _indicator(r, cfg, experiment), repr(_value(r, experiment))]
        for r in results
    ]


def summary_rows(rows: Iterable[SummaryRow]) -> list[list]:
    return [[s.distance, s.n, repr(s.p_hat), repr(s.stderr), s.replicates] for s in rows]


def write_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def run_consistency(cfg: ExperimentConfig) -> tuple[list[SummaryRow], list[ReplicateResult]]:
    """Estimate ``P(||theta_hat - theta*|| > epsilon)`` for each ``n``."""
    results = run_replicates(cfg)
    return summarize(results, cfg, "consistency"), results


def run_density(cfg: ExperimentConfig) -> list[ReplicateResult]:
    """Every replicate estimate, for external density plots."""
    return run_replicates(cfg)


def run_prediction(cfg: ExperimentConfig) -> tuple[list[SummaryRow], list[ReplicateResult]]:
    """Estimate ``P(|Y_hat(theta_hat) - Y_hat(theta*)| > pred_threshold)`` at the test point."""
    results = run_replicates(cfg)
    return summarize(results, cfg, "prediction"), results


def normality_statistics(results: Iterable[ReplicateResult], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate mean and variance of ``sqrt(n) M^{1/2} (theta_hat - theta*)``."""
    Z = np.array([r.standardized for r in results if r.n == n])
    if len(Z) < 2:
        raise ValueError(f"need at least two replicates at n={n}")
    return Z.mean(axis=0), Z.var(axis=0, ddof=1)
