import numpy as np
import pytest
from scipy.stats import kstest

from libivae import gauss
from libivae.metrics import (EvalReport, aggregated_posterior, evaluate, importance_log_likelihood, knn_chance,
                             knn_maximum, knn_two_sample, linear_posterior, log_mean_exp)
from libivae.worlds import WorldSpec, sample_dataset


def analytic_ll(decoder, X):
    W, Psi = decoder.linear_gaussian()
    return float(np.mean(gauss.logpdf(gauss.GaussianDist(np.zeros(len(W)), W @ W.T + Psi), X)))


@pytest.mark.parametrize("kind", ["LinearJTEx", "Gaussian"])
@pytest.mark.parametrize("S", [1, 5000])
def test_exact_proposal_is_exact(kind, S):
    ds = sample_dataset(WorldSpec.default(kind), sizes=(5, 5, 50))
    dec = ds.decoder()
    est = importance_log_likelihood(dec, linear_posterior(dec), ds.test, S=S, inflation=1.0)
    assert abs(est - analytic_ll(dec, ds.test)) <= 1e-8


def test_ground_truth_gaussian_world_ll():
    ds = sample_dataset(WorldSpec.default("Gaussian"))
    dec = ds.decoder()
    exact = analytic_ll(dec, ds.test)
    est = importance_log_likelihood(dec, linear_posterior(dec), ds.test, S=5000, inflation=2.0)
    assert abs(est - exact) <= 0.15
    assert est >= 7.7


def test_inflated_estimate_is_a_lower_bound_that_tightens():
    ds = sample_dataset(WorldSpec.default("LinearJTEx"), sizes=(5, 5, 200))
    dec = ds.decoder()
    exact = analytic_ll(dec, ds.test)
    post = linear_posterior(dec)
    vals = [importance_log_likelihood(dec, post, ds.test, S=S, inflation=4.0, rng=np.random.default_rng(0))
            for S in (1, 10, 100, 1000)]
    assert all(v <= exact + 1e-3 for v in vals)
    assert vals == sorted(vals)


def test_diagonal_and_per_point_proposals():
    ds = sample_dataset(WorldSpec.default("LinearJTEx"), sizes=(5, 5, 20))
    dec = ds.decoder()
    mean, cov = linear_posterior(dec)(ds.test)
    diag = lambda X: (mean, np.tile(np.diag(cov), (len(X), 1)))
    stack = lambda X: (mean, np.broadcast_to(cov, (len(X), 2, 2)).copy())
    per = importance_log_likelihood(dec, stack, ds.test, S=10, inflation=1.0, per_point=True)
    assert per.shape == (20,)
    assert np.isfinite(importance_log_likelihood(dec, diag, ds.test, S=10))


def test_importance_errors():
    ds = sample_dataset(WorldSpec.default("LinearJTEx"), sizes=(5, 5, 5))
    dec = ds.decoder()
    with pytest.raises(ValueError):
        importance_log_likelihood(dec, linear_posterior(dec), ds.test, S=0)
    with pytest.raises(ValueError):
        importance_log_likelihood(dec, linear_posterior(dec), ds.test, inflation=0.5)
    zero = lambda X: (np.zeros((len(X), 2)), np.zeros((len(X), 2)))
    with pytest.raises(ValueError):
        importance_log_likelihood(dec, zero, ds.test)
    with pytest.raises(ValueError):
        linear_posterior(sample_dataset(WorldSpec.default("CubicJTEx"), sizes=(5, 5, 5)).decoder())


def test_log_mean_exp_stable():
    a = np.array([1000.0, 1000.0, 1000.0 + np.log(4.0)])
    assert log_mean_exp(a) == pytest.approx(1000.0 + np.log(2.0))
    assert log_mean_exp(np.array([-1e4, -1e4])) == pytest.approx(-1e4)


# -- two-sample statistic -------------------------------------------------------------

def test_knn_null_calibration():
    vals = []
    for t in range(200):
        rng = np.random.default_rng(t)
        vals.append(knn_two_sample(rng.normal(size=(300, 2)), rng.normal(size=(300, 2)), subsample=100,
                                   repetitions=10, rng=rng))
    vals = np.array(vals)
    assert abs(vals.mean()) <= 3 * vals.std(ddof=1) / np.sqrt(len(vals))


def test_knn_separated_clusters_hit_maximum():
    rng = np.random.default_rng(0)
    p = rng.normal(size=(200, 2))
    q = rng.normal(size=(200, 2)) + 100.0
    for k in (1, 3):
        assert knn_two_sample(p, q, k=k, subsample=50, repetitions=20, rng=rng) == pytest.approx(knn_maximum(50))
    assert knn_chance(100) == pytest.approx(99 / 199)


def test_knn_orders_shifted_samples():
    rng = np.random.default_rng(1)
    p = rng.normal(size=(500, 2))
    near = knn_two_sample(p, rng.normal(size=(500, 2)) + 0.3, repetitions=50, rng=np.random.default_rng(0))
    far = knn_two_sample(p, rng.normal(size=(500, 2)) + 1.5, repetitions=50, rng=np.random.default_rng(0))
    assert far > near


def test_knn_symmetric():
    rng = np.random.default_rng(2)
    p, q = rng.normal(size=(150, 3)), rng.normal(size=(150, 3)) * 1.3
    a = knn_two_sample(p, q, repetitions=30, rng=np.random.default_rng(5), return_all=True)
    b = knn_two_sample(q, p, repetitions=30, rng=np.random.default_rng(5), return_all=True)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (30,)


def test_knn_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        knn_two_sample(rng.normal(size=(50, 2)), rng.normal(size=(50, 3)))
    with pytest.raises(ValueError):
        knn_two_sample(rng.normal(size=(50, 2)), rng.normal(size=(50, 2)), subsample=100)


# -- aggregated posterior ---------------------------------------------------------------

def test_aggregated_exact_posterior_matches_prior():
    ds = sample_dataset(WorldSpec.default("LinearJTEx"), sizes=(5000, 5, 5))
    dec = ds.decoder()
    Z = aggregated_posterior(linear_posterior(dec), ds.train, np.random.default_rng(0), 20000)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=0.05)
    np.testing.assert_allclose(np.cov(Z.T), np.eye(2), atol=0.06)


def test_collapsed_posterior_aggregate_is_prior():
    collapsed = lambda X: (np.zeros((len(X), 2)), np.ones((len(X), 2)))
    X = np.random.default_rng(0).normal(size=(100, 2))
    Z = aggregated_posterior(collapsed, X, np.random.default_rng(1), 5000)
    for j in range(2):
        assert kstest(Z[:, j], "norm").pvalue > 0.01


def test_aggregated_errors():
    with pytest.raises(ValueError):
        aggregated_posterior(lambda X: None, np.zeros((3, 2)), np.random.default_rng(0), 0)
    with pytest.raises(ValueError):
        aggregated_posterior(lambda X: None, np.zeros((0, 2)), np.random.default_rng(0), 5)


# -- evaluation bundle --------------------------------------------------------------------

def test_evaluate_deterministic_and_report():
    ds = sample_dataset(WorldSpec.default("LinearJTEx"), sizes=(200, 200, 200))
    dec = ds.decoder()
    kw = dict(S=50, subsample=50, repetitions=20)
    a = evaluate(dec, linear_posterior(dec), ds.test, ds.train, seed=3, **kw)
    b = evaluate(dec, linear_posterior(dec), ds.test, ds.train, seed=3, **kw)
    assert a == b
    assert set(a) >= {"test_ll", "two_sample", "seed"}
    rep = EvalReport.from_runs([a["test_ll"], 1.0], [a["two_sample"], 0.0])
    d = rep.to_dict()
    assert d["test_ll_mean"] == pytest.approx((a["test_ll"] + 1.0) / 2)
    assert d["aggregated"] is None
