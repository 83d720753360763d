import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from statcontour.exceptions import DegenerateRegionError, DomainError, ParameterError
from statcontour.expfam import (
    KNUTH_MAX_RATE,
    MOMENTS,
    Gaussian,
    Poisson,
    Rayleigh,
    estimate_from_sums,
    fit_region,
    get_family,
    log_pdf,
    ml_estimate,
    moments_estimate_rayleigh,
    rayleigh_inverse_cdf,
    sample,
    sufficient_stat,
)

G, P, R = Gaussian(), Poisson(), Rayleigh()


# -- log_pdf ------------------------------------------------------------------

def test_log_pdf_rayleigh_unit_scale_at_one():
    assert log_pdf("rayleigh", 1.0, [-0.5]) == pytest.approx(-0.5, abs=1e-12)


def test_log_pdf_poisson_unit_rate_at_zero():
    assert log_pdf("poisson", 0, [0.0]) == pytest.approx(-1.0, abs=1e-12)


def test_log_pdf_standard_normal_at_zero():
    eta = G.natural_from_params(0.0, 1.0)
    assert log_pdf("gaussian", 0.0, eta) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)
    assert log_pdf("gaussian", 0.0, eta) == pytest.approx(-0.9189, abs=1e-4)


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
def test_rayleigh_log_pdf_matches_scipy(theta):
    y = np.linspace(0.01, 8 * theta, 50)
    ours = R.log_pdf(y, R.natural_from_params(theta))
    np.testing.assert_allclose(ours, stats.rayleigh.logpdf(y, scale=theta), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("rate", [0.5, 4.0, 37.0])
def test_poisson_log_pmf_matches_scipy(rate):
    y = np.arange(0, 80)
    ours = P.log_pdf(y, P.natural_from_params(rate))
    np.testing.assert_allclose(ours, stats.poisson.logpmf(y, rate), rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("mean,var", [(0.0, 1.0), (-3.0, 0.25), (10.0, 9.0)])
def test_gaussian_log_pdf_matches_scipy(mean, var):
    y = np.linspace(mean - 5, mean + 5, 41)
    ours = G.log_pdf(y, G.natural_from_params(mean, var))
    np.testing.assert_allclose(ours, stats.norm.logpdf(y, mean, np.sqrt(var)), rtol=1e-12, atol=1e-12)


def test_poisson_rounds_real_inputs():
    eta = P.natural_from_params(3.0)
    assert P.log_pdf(2.4, eta) == pytest.approx(P.log_pdf(2.0, eta))
    assert P.log_pdf(2.6, eta) == pytest.approx(P.log_pdf(3.0, eta))


def test_log_pdf_outside_support_raises():
    with pytest.raises(DomainError):
        R.log_pdf(0.0, [-0.5])
    with pytest.raises(DomainError):
        R.log_pdf(-1.0, [-0.5])
    with pytest.raises(DomainError):
        P.log_pdf(-2.0, [0.0])
    with pytest.raises(DomainError):
        G.log_pdf(np.inf, [0.0, -0.5])


def test_log_pdf_invalid_eta_raises():
    with pytest.raises(ParameterError):
        R.log_pdf(1.0, [0.5])
    with pytest.raises(ParameterError):
        G.log_pdf(1.0, [0.0, 0.1])
    with pytest.raises(ParameterError):
        P.log_pdf(1.0, [np.nan])


# -- sufficient statistics ----------------------------------------------------

def test_sufficient_stats():
    np.testing.assert_array_equal(sufficient_stat("rayleigh", 3.0), [9.0])
    np.testing.assert_array_equal(sufficient_stat("gaussian", 2.0), [2.0, 4.0])
    np.testing.assert_array_equal(sufficient_stat("poisson", 5), [5.0])


def test_sufficient_stat_has_trailing_axis():
    y = np.ones((3, 4))
    assert G.sufficient_stat(y).shape == (3, 4, 2)
    assert R.sufficient_stat(y).shape == (3, 4, 1)


def test_sufficient_stat_outside_support_raises():
    with pytest.raises(DomainError):
        sufficient_stat("rayleigh", -1.0)


# -- estimators -----------------------------------------------------------------

def test_ml_rayleigh_constant_region():
    eta = ml_estimate("rayleigh", [2.0 * 7], 7)  # y = sqrt(2) everywhere
    assert eta[0] == pytest.approx(-0.5)
    assert R.params_from_natural(eta)[0] == pytest.approx(1.0)


def test_ml_poisson_mean():
    eta = ml_estimate("poisson", [50.0], 10)
    assert eta[0] == pytest.approx(np.log(5.0))


def test_ml_gaussian_moments():
    n, var = 20, 4.0
    eta = ml_estimate("gaussian", [0.0, n * var], n)
    mean, v = G.params_from_natural(eta)
    assert mean == pytest.approx(0.0, abs=1e-14)
    assert v == pytest.approx(4.0)


def _grid_argmax(loglik, center, half_width, n=100):
    grid = np.linspace(center - half_width, center + half_width, n)
    return grid, np.array([loglik(g) for g in grid])


def test_ml_poisson_beats_grid_search():
    y = np.array([3, 7, 4, 6, 5, 5, 2, 8, 5, 5], dtype=float)
    lam = np.exp(ml_estimate("poisson", [y.sum()], y.size)[0])
    grid, ll = _grid_argmax(lambda l: stats.poisson.logpmf(y, l).sum(), 5.0, 2.0)
    assert lam == pytest.approx(grid[np.argmax(ll)], abs=grid[1] - grid[0])
    assert stats.poisson.logpmf(y, lam).sum() >= ll.max()


def test_ml_degenerate_moments_raise():
    with pytest.raises(DegenerateRegionError):
        ml_estimate("gaussian", [5.0, 25.0], 1)
    with pytest.raises(DegenerateRegionError):
        ml_estimate("gaussian", [10.0, 50.0], 2)  # constant region, zero variance
    with pytest.raises(DegenerateRegionError):
        ml_estimate("poisson", [0.0], 4)
    with pytest.raises(DegenerateRegionError):
        ml_estimate("rayleigh", [0.0], 4)


def test_moments_estimate_values():
    assert moments_estimate_rayleigh(5.0, 5) == pytest.approx(np.sqrt(2 / np.pi))
    assert moments_estimate_rayleigh(9 * np.sqrt(np.pi / 2), 9) == pytest.approx(1.0)
    assert moments_estimate_rayleigh(5.0, 5) == pytest.approx(0.79788, abs=1e-5)


def test_moments_estimate_degenerate():
    with pytest.raises(DegenerateRegionError):
        moments_estimate_rayleigh(0.0, 3)
    with pytest.raises(DegenerateRegionError):
        moments_estimate_rayleigh(1.0, 0)


def test_rayleigh_estimators_consistent_on_large_sample():
    rng = np.random.default_rng(20240611)
    y = R.sample(R.natural_from_params(2.0), rng, 100_000)
    theta_mo = moments_estimate_rayleigh(y.sum(), y.size)
    theta_ml = R.params_from_natural(ml_estimate("rayleigh", [np.dot(y, y)], y.size))[0]
    assert abs(theta_mo - 2.0) / 2.0 < 0.01
    assert abs(theta_ml - 2.0) / 2.0 < 0.01


def test_fit_region_ml_is_psi_of_mean():
    y = np.array([1.0, 2.0, 4.0, 3.5])
    est = fit_region("gaussian", y)
    np.testing.assert_allclose(est.eta_hat, G.natural_from_mean(est.sum_T / est.count))
    assert est.count == 4
    assert est.mean_y == pytest.approx(y.mean())
    assert est.mean_y2 == pytest.approx(np.mean(y * y))


def test_fit_region_moments():
    y = np.array([0.5, 1.0, 1.5])
    est = fit_region("rayleigh", y, MOMENTS)
    assert R.params_from_natural(est.eta_hat)[0] == pytest.approx(np.sqrt(2 / np.pi) * 1.0)
    with pytest.raises(ValueError):
        fit_region("poisson", [1.0, 2.0], MOMENTS)


def test_floor_rule_keeps_degenerate_regions_defined():
    reference = (np.array([10.0, 104.0]), 10.0)  # global variance 4
    est = estimate_from_sums(G, [30.0, 300.0], 3, 30.0, 300.0, reference=reference)
    assert est.floored
    mean, var = G.params_from_natural(est.eta_hat)
    assert mean == pytest.approx(10.0)
    assert var == pytest.approx(4e-6)

    est = estimate_from_sums(P, [0.0], 5, 0.0, 0.0, reference=(np.array([9.0]), 9.0))
    assert est.floored
    assert P.params_from_natural(est.eta_hat)[0] == pytest.approx(9e-6)


def test_get_family_aliases():
    assert isinstance(get_family("gauss"), Gaussian)
    assert isinstance(get_family("Normal"), Gaussian)
    assert get_family(R) is R
    with pytest.raises(ValueError):
        get_family("gamma")


# -- sampling -------------------------------------------------------------------

def test_rayleigh_inverse_cdf_identity():
    assert rayleigh_inverse_cdf(np.exp(-0.5), 1.0) == pytest.approx(1.0)


def test_poisson_sample_mean():
    rng = np.random.default_rng(1)
    y = sample("poisson", P.natural_from_params(4.0), rng, 100_000)
    assert abs(y.mean() - 4.0) / 4.0 < 0.02
    assert np.all(y == np.round(y)) and y.min() >= 0


def test_poisson_sample_above_knuth_range():
    rate = 2 * KNUTH_MAX_RATE
    rng = np.random.default_rng(2)
    y = P.sample(P.natural_from_params(rate), rng, 50_000)
    assert abs(y.mean() - rate) / rate < 0.01
    assert abs(y.var() - rate) / rate < 0.05


def test_poisson_knuth_matches_pmf():
    rng = np.random.default_rng(3)
    y = P.sample(P.natural_from_params(3.0), rng, 200_000)
    counts = np.bincount(y.astype(int), minlength=15)[:15] / y.size
    np.testing.assert_allclose(counts, stats.poisson.pmf(np.arange(15), 3.0), atol=3e-3)


def test_gaussian_sample_variance():
    rng = np.random.default_rng(4)
    y = sample("gaussian", G.natural_from_params(0.0, 1.0), rng, 100_000)
    assert abs(y.var() - 1.0) < 0.03
    assert abs(y.mean()) < 0.02


def test_rayleigh_sample_matches_cdf():
    rng = np.random.default_rng(5)
    y = R.sample(R.natural_from_params(1.5), rng, 20_000)
    assert stats.kstest(y, stats.rayleigh(scale=1.5).cdf).pvalue > 0.01


def test_sample_scalar_draw():
    rng = np.random.default_rng(6)
    assert np.ndim(P.sample([np.log(2.0)], rng)) == 0
    assert np.ndim(R.sample([-0.5], rng)) == 0


# -- invariants -------------------------------------------------------------------

@pytest.mark.parametrize("theta", [0.2, 0.7, 1.0, 3.0, 10.0])
def test_rayleigh_normalization(theta):
    eta = R.natural_from_params(theta)
    total, _ = integrate.quad(lambda y: np.exp(R.log_pdf(y, eta)), 1e-300, 20 * theta, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("rate", [0.1, 1.0, 4.0, 25.0, 120.0])
def test_poisson_normalization(rate):
    eta = P.natural_from_params(rate)
    y = np.arange(0, int(np.ceil(rate + 20 * np.sqrt(rate))) + 1)
    assert np.exp(P.log_pdf(y, eta)).sum() == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("mean,var", [(0, 1), (-5, 0.01), (3, 4), (100, 25), (0.5, 1e-4)])
def test_gaussian_normalization(mean, var):
    eta = G.natural_from_params(mean, var)
    s = np.sqrt(var)
    total, _ = integrate.quad(lambda y: np.exp(G.log_pdf(y, eta)), mean - 10 * s, mean + 10 * s)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("model,eta", [
    (G, G.natural_from_params(1.0, 2.0)),
    (P, P.natural_from_params(6.0)),
    (R, R.natural_from_params(1.3)),
])
def test_mean_stat_matches_monte_carlo(model, eta):
    rng = np.random.default_rng(7)
    T = model.sufficient_stat(model.sample(eta, rng, 1_000_000))
    se = T.std(axis=0) / np.sqrt(T.shape[0])
    assert np.all(np.abs(T.mean(axis=0) - model.mean_stat(eta)) < 3 * se)


eta_gauss = st.tuples(st.floats(-50, 50), st.floats(-50, -1e-3))
eta_neg = st.floats(-100, -1e-3)
eta_any = st.floats(-10, 10)


@settings(max_examples=100, deadline=None)
@given(eta_gauss)
def test_gaussian_round_trip(eta):
    eta = np.array(eta)
    np.testing.assert_allclose(G.natural_from_mean(G.mean_stat(eta)), eta, rtol=1e-10, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(eta_any)
def test_poisson_round_trip(eta):
    assert P.natural_from_mean(P.mean_stat([eta]))[0] == pytest.approx(eta, rel=1e-10, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(eta_neg)
def test_rayleigh_round_trip(eta):
    assert R.natural_from_mean(R.mean_stat([eta]))[0] == pytest.approx(eta, rel=1e-10, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["gaussian", "poisson", "rayleigh"]))
def test_ml_estimate_beats_parameter_grid(seed, family):
    rng = np.random.default_rng(seed)
    model = get_family(family)
    truth = {"gaussian": (1.0, 2.0), "poisson": (5.0,), "rayleigh": (1.5,)}[family]
    y = model.sample(model.natural_from_params(*truth), rng, 40)
    try:
        est = fit_region(model, y)
    except DegenerateRegionError:
        return
    best = model.log_pdf(y, est.eta_hat).sum()
    k = model.k
    if k == 1:
        grid = est.eta_hat[0] + np.linspace(-0.5, 0.5, 100) * abs(est.eta_hat[0] or 1.0)
        candidates = [np.array([g]) for g in grid if model.in_natural_space([g])]
    else:
        a = est.eta_hat[0] + np.linspace(-0.5, 0.5, 10) * abs(est.eta_hat[0] or 1.0)
        b = est.eta_hat[1] * np.linspace(0.5, 1.5, 10)
        candidates = [np.array([u, v]) for u in a for v in b]
    for c in candidates:
        assert model.log_pdf(y, c).sum() <= best + 1e-9
