import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from libivae import gauss
from libivae.models import LoadingDecoder
from libivae.numgrad import Tensor
from libivae.objectives import (BetaSchedule, ElboBreakdown, data_covariance, default_grid, elbo_mc, exact_L,
                                kl_to_standard, minimize_exact_L, pm_grid)
from libivae.worlds import WorldError, WorldSpec, sample_dataset, with_B

SPEC = WorldSpec.default("LinearJTEx")


def affine_encoder(spec, W_mu, b_mu, W_lv, b_lv):
    enc = spec.arch().make_encoder(np.random.default_rng(0))
    (layer,) = enc.net.layers
    layer.weight.data = np.hstack([W_mu, W_lv])
    layer.bias.data = np.concatenate([b_mu, b_lv])
    return enc


def best_fit_encoder(spec, decoder):
    W, Psi = decoder.linear_gaussian()
    prec = np.eye(W.shape[1]) + W.T @ np.linalg.solve(Psi, W)
    gain = np.linalg.solve(prec, W.T @ np.linalg.inv(Psi))
    d = W.shape[1]
    return affine_encoder(spec, gain.T, np.zeros(d), np.zeros((W.shape[0], d)), -np.log(np.diag(prec)))


# -- Monte-Carlo ELBO -----------------------------------------------------------------

def test_elbo_prior_encoder_zero_decoder():
    spec = WorldSpec.default("Gaussian")
    dec = LoadingDecoder(np.zeros((2, 4)), 1e-6)
    enc = affine_encoder(spec, np.zeros((4, 2)), np.zeros(2), np.zeros((4, 2)), np.zeros(2))
    x = np.zeros((6, 4))
    out = elbo_mc(dec, enc, Tensor(x), np.random.default_rng(0))
    assert out.kl.item() == pytest.approx(0.0, abs=1e-15)
    noise = gauss.GaussianDist.diag(np.zeros(4), np.full(4, 1e-6))
    assert out.reconstruction.item() == pytest.approx(-gauss.logpdf(noise, np.zeros(4)), abs=1e-9)


def test_elbo_beta_zero_is_reconstruction():
    ds = sample_dataset(SPEC, sizes=(50, 1, 1))
    dec = ds.decoder()
    enc = SPEC.arch().make_encoder(np.random.default_rng(1))
    out = elbo_mc(dec, enc, ds.train, np.random.default_rng(2), beta=0.0)
    assert out.value() == out.reconstruction.item()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 5.0))
def test_elbo_total_is_sum(seed, beta):
    ds = sample_dataset(SPEC, np.random.default_rng(seed), sizes=(30, 1, 1))
    enc = SPEC.arch().make_encoder(np.random.default_rng(seed))
    out = elbo_mc(ds.decoder(), enc, ds.train, np.random.default_rng(seed), beta)
    assert out.value() == pytest.approx(out.reconstruction.item() + beta * out.kl.item(), abs=1e-9)


def test_kl_to_standard_matches_gauss():
    mu = np.array([[0.3, -1.0]])
    lv = np.array([[0.2, -0.7]])
    got = kl_to_standard(Tensor(mu), Tensor(lv)).data[0]
    want = gauss.kl(gauss.GaussianDist.diag(mu[0], np.exp(lv[0])), gauss.GaussianDist.standard(2))
    assert got == pytest.approx(want, abs=1e-12)


def test_mc_elbo_approaches_exact_decomposition():
    dec = sample_dataset(SPEC).decoder()
    enc = best_fit_encoder(SPEC, dec)
    exact = exact_L(dec, enc)
    exact_neg_elbo = exact.reconstruction + exact.kl
    gaps = []
    for n in (10, 100_000):
        ds = sample_dataset(SPEC, np.random.default_rng(5), sizes=(n, 1, 1))
        out = elbo_mc(dec, enc, ds.train, np.random.default_rng(6))
        gaps.append(abs(out.value() - exact_neg_elbo))
    ds = sample_dataset(SPEC, np.random.default_rng(7), sizes=(1000, 1, 1))
    assert abs(elbo_mc(dec, enc, ds.train, np.random.default_rng(8)).value() - exact_neg_elbo) <= 0.05
    assert gaps[1] < gaps[0]
    assert gaps[1] <= 0.01


# -- exact decomposition ----------------------------------------------------------------

def test_exact_L_ground_truth():
    out = exact_L(SPEC)
    assert out.total == pytest.approx(0.532, abs=0.01)
    assert out.mle == pytest.approx(0.0, abs=1e-12)
    assert out.total == pytest.approx(out.mle + out.pm, abs=1e-12)


def test_exact_L_best_fit_encoder_agrees():
    dec = sample_dataset(SPEC).decoder()
    a = exact_L(dec)
    b = exact_L(dec, best_fit_encoder(SPEC, dec))
    assert a.pm == pytest.approx(b.pm, abs=1e-9)
    assert a.kl == pytest.approx(b.kl, abs=1e-9)


def test_exact_L_pm_matches_monte_carlo():
    """PM term for an arbitrary affine encoder against a sampled E_x KL[q || posterior]."""
    dec = sample_dataset(SPEC).decoder()
    rng = np.random.default_rng(3)
    enc = affine_encoder(SPEC, rng.normal(size=(2, 2)), rng.normal(size=2) * 0.1,
                         rng.normal(size=(2, 2)) * 0.3, rng.normal(size=2))
    W, Psi = dec.linear_gaussian()
    joint = gauss.linear_gaussian_joint(W, Psi)
    X = gauss.sample(joint.marginal_x(), rng, 4000)
    mu, var = enc.moments(X)
    mc = np.mean([gauss.kl(gauss.GaussianDist.diag(m, v), gauss.condition(joint, x)) for x, m, v in zip(X, mu, var)])
    assert exact_L(dec, enc).pm == pytest.approx(mc, rel=0.05)


def test_pm_zero_for_diagonal_posterior():
    spec = with_B(WorldSpec(kind="LinearJTEx", A=((0.8, 0.0), (0.0, 1.3))), (0.0, 0.0))
    assert exact_L(spec).pm == pytest.approx(0.0, abs=1e-12)
    grid = pm_grid(spec, [0.0], [0.0])
    assert grid.pm[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_exact_L_rejects_nonlinear():
    with pytest.raises(WorldError):
        exact_L(WorldSpec.default("CubicJTEx"))


def test_exact_L_mle_against_other_data():
    dec = sample_dataset(SPEC).decoder()
    other = 2.0 * data_covariance(SPEC)
    want = gauss.kl(gauss.GaussianDist(np.zeros(2), other), gauss.GaussianDist(np.zeros(2), data_covariance(SPEC)))
    assert exact_L(dec, data_cov=other).mle == pytest.approx(want, abs=1e-12)


@pytest.mark.slow
def test_minimized_L():
    value, A = minimize_exact_L(SPEC)
    assert value == pytest.approx(0.196, abs=0.02)
    assert value < exact_L(SPEC).total


# -- PM grid ---------------------------------------------------------------------------

def test_pm_grid_argmin_and_mi():
    g = default_grid(SPEC)
    grid = pm_grid(SPEC, g, g)
    assert grid.pm.shape == (20, 20)
    assert grid.argmin() == (19, 0)
    i, j = grid.argmin()
    assert grid.mi.min() < grid.mi[i, j] < grid.mi.max()


def test_pm_grid_x_invariant():
    g = np.linspace(0.0, 0.009, 4)
    a = pm_grid(SPEC, g, g)
    b = pm_grid(SPEC, g, g, x=np.array([0.7, -1.3]))
    np.testing.assert_allclose(a.pm, b.pm, atol=1e-12)


def test_pm_grid_rejects_noise_var():
    with pytest.raises(WorldError):
        pm_grid(SPEC, [0.0, 0.01], [0.0])


def test_pm_grid_csv(tmp_path):
    g = np.linspace(0.0, 0.009, 3)
    pm_grid(SPEC, g, g).write_csv(tmp_path / "g.csv", header_comment="stamp")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "# stamp" and lines[1] == "B11,B22,pm,mi" and len(lines) == 11


# -- beta schedule ---------------------------------------------------------------------

def test_beta_schedule():
    s = BetaSchedule.anneal(2.0, 100)
    assert s(0) == 0.0
    assert s(10) == pytest.approx(1.0)
    assert all(s(t) == 2.0 for t in range(20, 100))
    assert BetaSchedule(0.5)(0) == 0.5
    with pytest.raises(ValueError):
        BetaSchedule(1.0, 0, "cosine")


def test_breakdown_value():
    assert ElboBreakdown(1.0, 2.0, 3.0).value() == 3.0
