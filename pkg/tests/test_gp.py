import numpy as np
import pytest

from oracles import dense_fisher, dense_gradient, dense_nll
from permgp.experiments import ObservationScheme, generate_scheme
from permgp.gp import (
    FitOptions,
    NumericalError,
    TrainingSet,
    condition,
    fisher_matrix,
    fit_mle,
    likelihood_gradient,
    load_model,
    neg_log_likelihood,
    predict,
    sample_gp,
    save_model,
)
from permgp.kernels import KernelParams, ParamBox, gram_gradient_from_distances, gram_matrix
from permgp.permutation import Distance, Permutation, distance_matrix, random_permutation

ALL = list(Distance)
BOX = ParamBox((0.02, 0.3, 0.1), (2.0, 2.0, 1.0))
THETA_STAR = KernelParams(0.1, 0.8, 0.3)


def random_design(rng, size, max_support=8):
    pts = {}
    while len(pts) < size:
        pts.setdefault(random_permutation(int(rng.integers(0, max_support + 1)), rng), None)
    return list(pts)


def random_theta(rng):
    return KernelParams(*rng.uniform([0.05, 0.3, 0.1], [1.5, 2.0, 1.0]))


def random_training(rng, d, n, p=THETA_STAR):
    pts = random_design(rng, n)
    return TrainingSet(pts, sample_gp(pts, d, p, rng), d)


# -- training set ------------------------------------------------------------


def test_training_set_validation():
    s = [Permutation([]), Permutation([2, 1])]
    with pytest.raises(ValueError):
        TrainingSet([], [], "kendall")
    with pytest.raises(ValueError):
        TrainingSet(s, [1.0], "kendall")
    with pytest.raises(ValueError):
        TrainingSet(s, [1.0, np.nan], "kendall")
    with pytest.raises(ValueError):
        TrainingSet(s, [1.0, 2.0], "kendall", D=np.zeros((3, 3)))
    t = TrainingSet(s, [1, 2], "Hamming")
    assert t.distance is Distance.HAMMING and t.n == 2
    np.testing.assert_array_equal(t.D, [[0, 2], [2, 0]])


# -- likelihood --------------------------------------------------------------


@pytest.mark.parametrize("v", [0.0, 1.7, -3.0])
def test_nll_scalar(v):
    t = TrainingSet([Permutation([])], [v], "kendall")
    p = KernelParams(0.5, 0.8, 0.3)
    assert neg_log_likelihood(t, p) == pytest.approx(np.log(1.1) + v * v / 1.1, rel=1e-14)


def test_gradient_scalar():
    t = TrainingSet([Permutation([])], [0.0], "kendall")
    g = likelihood_gradient(t, KernelParams(0.5, 0.8, 0.3))
    assert g[2] == pytest.approx(1 / 1.1, rel=1e-14)
    assert g[1] == pytest.approx(1 / 1.1, rel=1e-14)
    assert g[0] == 0


def test_nugget_required():
    t = TrainingSet([Permutation([])], [0.0], "kendall")
    with pytest.raises(ValueError):
        neg_log_likelihood(t, KernelParams(0.5, 0.8, 0.0))


@pytest.mark.parametrize("d", ALL)
def test_against_dense_oracles(d):
    rng = np.random.default_rng(ALL.index(d))
    for n in (2, 5, 8, 13, 20):
        t = random_training(rng, d, n)
        p = random_theta(rng)
        R = gram_matrix(d, p, t.points)
        dRs = [gram_gradient_from_distances(t.D, p, c) for c in (1, 2, 3)]
        assert neg_log_likelihood(t, p) == pytest.approx(dense_nll(R, t.values), rel=1e-10)
        np.testing.assert_allclose(likelihood_gradient(t, p), dense_gradient(R, dRs, t.values), rtol=1e-10, atol=1e-13)
        M = fisher_matrix(t, p)
        np.testing.assert_allclose(M, dense_fisher(R, dRs), rtol=1e-10, atol=1e-15)
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() >= -1e-12


def test_gradient_against_finite_differences():
    rng = np.random.default_rng(123)
    for i in range(50):
        d = ALL[i % 4]
        t = random_training(rng, d, 10)
        theta = random_theta(rng).as_array()
        g = likelihood_gradient(t, KernelParams.from_array(theta))
        for c in range(3):
            h = 1e-6 * max(1.0, theta[c])
            e = np.zeros(3)
            e[c] = h
            fd = (neg_log_likelihood(t, KernelParams.from_array(theta + e))
                  - neg_log_likelihood(t, KernelParams.from_array(theta - e))) / (2 * h)
            assert abs(fd - g[c]) <= 1e-5 * max(abs(g[c]), 1e-3)


def test_fisher_scalar():
    t = TrainingSet([Permutation([2, 1])], [0.3], "footrule")
    M = fisher_matrix(t, KernelParams(0.5, 0.8, 0.3))
    assert M[2, 2] == pytest.approx(1 / (2 * 1.1**2), rel=1e-14)
    assert M[0, 0] == 0


def test_lemma_eigenvalue_bound():
    rng = np.random.default_rng(17)
    for i in range(100):
        d = ALL[i % 4]
        pts = random_design(rng, int(rng.integers(2, 30)))
        p = random_theta(rng)
        assert np.linalg.eigvalsh(gram_matrix(d, p, pts)).min() >= p.theta3 - 1e-8


@pytest.mark.parametrize("d", ALL)
def test_derivative_norm_saturates(d):
    pts = generate_scheme(ObservationScheme(3, 200, 1))
    D = distance_matrix(d, pts)
    for c in (1, 2):
        norms = [np.linalg.norm(gram_gradient_from_distances(D[:n, :n], THETA_STAR, c), 2) for n in (50, 100, 150, 200)]
        steps = np.diff(norms)
        assert np.all(steps[1:] <= steps[:-1] + 1e-9)


# -- sampling ----------------------------------------------------------------


def test_sample_covariance():
    rng = np.random.default_rng(2)
    pts = [Permutation([]), Permutation([2, 1]), Permutation([3, 1, 2]), Permutation([2, 3, 1]), Permutation([4, 3, 2, 1])]
    p = KernelParams(0.3, 1.0, 0.2)
    R = gram_matrix("kendall", p, pts)
    D = distance_matrix("kendall", pts)
    Y = np.array([sample_gp(pts, "kendall", p, rng, D=D) for _ in range(20_000)])
    C = np.cov(Y.T, bias=True)
    assert np.all(np.abs(C - R) <= 0.05 * np.abs(R))


def test_sample_scalar_and_repeats():
    rng = np.random.default_rng(0)
    p = KernelParams(50.0, 0.8, 0.3)
    y = np.array([sample_gp([Permutation([])], "hamming", p, rng)[0] for _ in range(4000)])
    assert y.var() == pytest.approx(1.1, rel=0.08)
    s = Permutation([2, 1])
    out = sample_gp([s, s, s], "kendall", p, rng)
    assert out.shape == (3,)


def test_factorization_failure_raises():
    t = TrainingSet([Permutation([]), Permutation([2, 1])], [0.0, 1.0], "kendall", D=np.array([[0.0, -50], [-50, 0]]))
    with pytest.raises(NumericalError):
        neg_log_likelihood(t, KernelParams(1.0, 1.0, 0.1))


# -- fitting -----------------------------------------------------------------


def test_fit_degenerate_box():
    rng = np.random.default_rng(5)
    t = random_training(rng, "kendall", 12)
    f = fit_mle(t, ParamBox.point(THETA_STAR))
    assert f.theta_hat == THETA_STAR
    assert f.diagnostics["final_value"] == neg_log_likelihood(t, THETA_STAR)


def test_fit_needs_two_points():
    t = TrainingSet([Permutation([])], [0.0], "kendall")
    with pytest.raises(ValueError):
        fit_mle(t, BOX)


@pytest.mark.parametrize("d", [Distance.KENDALL, Distance.HAMMING, Distance.FOOTRULE])
def test_fit_postconditions(d):
    rng = np.random.default_rng(31)
    pts = generate_scheme(ObservationScheme(3, 60, 4))
    t = TrainingSet(pts, sample_gp(pts, d, THETA_STAR, rng), d)
    opts = FitOptions(n_starts=5, seed=9)
    f = fit_mle(t, BOX, opts)
    assert BOX.contains(f.theta_hat)
    L = neg_log_likelihood(t, f.theta_hat)
    assert L == f.diagnostics["final_value"]
    # never worse than any start point
    from scipy.stats import qmc

    starts = [BOX.center] + list(BOX.lo + qmc.Sobol(3, scramble=True, seed=9).random_base2(2)[:4] * (BOX.hi - BOX.lo))
    assert all(L <= neg_log_likelihood(t, KernelParams.from_array(x)) + 1e-12 for x in starts)
    assert f.diagnostics["starts"] == 5 and f.diagnostics["evaluations"] > 0
    # the stored factor reconstructs the covariance
    R = gram_matrix(d, f.theta_hat, pts)
    assert np.linalg.norm(f.factor @ f.factor.T - R) <= 1e-10 * np.linalg.norm(R)
    np.testing.assert_allclose(f.alpha, np.linalg.solve(R, t.values), rtol=1e-8)
    # interior optimum -> stationary point
    lo, hi = BOX.lo, BOX.hi
    x = f.theta_hat.as_array()
    if np.all((x > lo + 1e-6) & (x < hi - 1e-6)):
        assert np.linalg.norm(likelihood_gradient(t, f.theta_hat)) < 1e-4


def test_fit_deterministic():
    rng = np.random.default_rng(8)
    pts = generate_scheme(ObservationScheme(3, 40, 2))
    t = TrainingSet(pts, sample_gp(pts, "hamming", THETA_STAR, rng), "hamming")
    a = fit_mle(t, BOX, FitOptions(seed=3))
    b = fit_mle(t, BOX, FitOptions(seed=3))
    assert a.theta_hat.as_array().tobytes() == b.theta_hat.as_array().tobytes()


def test_fit_theta2_slice_matches_grid():
    rng = np.random.default_rng(21)
    pts = generate_scheme(ObservationScheme(3, 50, 6))
    t = TrainingSet(pts, sample_gp(pts, "kendall", THETA_STAR, rng), "kendall")
    box = ParamBox((0.1, 0.3, 0.3), (0.1, 2.0, 0.3))
    f = fit_mle(t, box)
    grid = np.arange(0.3, 2.0 + 5e-4, 1e-3)
    vals = [neg_log_likelihood(t, KernelParams(0.1, g, 0.3)) for g in grid]
    best = grid[int(np.argmin(vals))]
    assert abs(f.theta_hat.theta2 - best) <= 1e-3
    assert f.theta_hat.theta1 == 0.1 and f.theta_hat.theta3 == 0.3


# -- prediction --------------------------------------------------------------


@pytest.mark.parametrize("d", ALL)
def test_interpolation(d):
    rng = np.random.default_rng(40)
    t = random_training(rng, d, 15)
    f = fit_mle(t, BOX, FitOptions(n_starts=2))
    np.testing.assert_allclose(predict(f, list(t.points)), t.values, atol=1e-8, rtol=0)
    assert predict(f, t.points[0]) == pytest.approx(t.values[0], abs=1e-8)


def test_prediction_three_points_by_hand():
    pts = [Permutation([]), Permutation([2, 1]), Permutation([3, 2, 1])]
    y = np.array([0.5, -1.0, 2.0])
    p = KernelParams(0.4, 1.5, 0.2)
    f = condition(TrainingSet(pts, y, "kendall"), p)
    # Kendall distances: d(0,1)=1, d(0,2)=3, d(1,2)=2
    e = lambda k: 1.5 * np.exp(-0.4 * k)
    R = np.array([[1.7, e(1), e(3)], [e(1), 1.7, e(2)], [e(3), e(2), 1.7]])
    target = Permutation([1, 3, 2])  # distances 1, 2, 2
    r = np.array([e(1), e(2), e(2)])
    assert predict(f, target) == pytest.approx(r @ np.linalg.solve(R, y), abs=1e-12)


def test_prediction_far_point_vanishes():
    pts = [Permutation([]), Permutation([2, 1])]
    f = condition(TrainingSet(pts, [1.0, 2.0], "kendall"), KernelParams(0.5, 1.0, 0.1))
    far = Permutation(range(200, 0, -1))
    assert abs(predict(f, far)) < 1e-100


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    t = random_training(rng, "footrule", 12)
    f = fit_mle(t, BOX, FitOptions(n_starts=2))
    text = save_model(f)
    g = load_model(text)
    probe = random_design(rng, 10)
    np.testing.assert_allclose(predict(g, probe), predict(f, probe), rtol=1e-12, atol=1e-12)
    assert g.box == f.box and g.theta_hat == f.theta_hat
    with pytest.raises(ValueError):
        load_model('{"format": "other"}')
