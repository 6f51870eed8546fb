import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalnn import causal_models as cm
from causalnn.errors import ConfigurationError, InputError, StateError, UnsupportedOperationError
from causalnn.uncertainty import (
    PosteriorDraws,
    all_score_bands,
    credible_band,
    posterior_arms,
    posterior_cate,
    score_bands,
    score_draws,
)


@pytest.fixture(scope="module")
def no_dropout(small_data):
    out = {}
    for kind in ("tcnn", "icnn", "tnn"):
        cfg = cm.default_config(kind, epochs=3, mu_dropout=0.0, tau_dropout=0.0, seed=2)
        out[kind] = cm.fit(kind, small_data, cfg)
    return out


@pytest.mark.parametrize("kind", ["tcnn", "icnn", "tnn"])
def test_zero_dropout_rows_identical(no_dropout, small_data, kind):
    d = posterior_cate(no_dropout[kind], small_data.X[:30], S=5, rng=1)
    assert np.all(d.samples == d.samples[0])
    np.testing.assert_allclose(d.samples[0], cm.predict_cate(no_dropout[kind], small_data.X[:30]), atol=1e-12)


@pytest.mark.parametrize("kind", cm.KINDS)
def test_seeded_draws(quick_models, small_data, kind):
    X = small_data.X[:25]
    a = posterior_cate(quick_models[kind], X, S=4, rng=9)
    b = posterior_cate(quick_models[kind], X, S=4, rng=9)
    c = posterior_cate(quick_models[kind], X, S=4, rng=10)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_draw_order_independent(quick_models, small_data):
    # draw s depends only on (seed, s), so a longer run extends a shorter one
    X = small_data.X[:10]
    short = posterior_cate(quick_models["tcnn"], X, S=3, rng=4).samples
    long = posterior_cate(quick_models["tcnn"], X, S=6, rng=4).samples
    assert np.array_equal(short, long[:3])


def test_tau_dropout_gives_spread(small_data):
    cfg = cm.default_config("tcnn", epochs=3, tau_dropout=0.2)
    model = cm.fit("tcnn", small_data, cfg)
    d = posterior_cate(model, small_data.X[:40], S=50, rng=0)
    assert np.all(d.samples.std(axis=0, ddof=1) > 0)


def test_posterior_mu_target(quick_models, small_data):
    d = posterior_cate(quick_models["tcnn"], small_data.X[:5], S=3, rng=0, target="mu")
    assert d.target == "mu" and d.samples.shape == (3, 5)


def test_posterior_errors(quick_models, small_data):
    with pytest.raises(ConfigurationError):
        posterior_cate(quick_models["tcnn"], small_data.X[:3], S=1)
    with pytest.raises(StateError):
        posterior_cate(cm.init_model("tcnn", 10), small_data.X[:3], S=3)
    with pytest.raises(ConfigurationError):
        PosteriorDraws(np.zeros((1, 4)))
    with pytest.raises(InputError):
        PosteriorDraws(np.array([[0.0, np.nan], [1.0, 2.0]]))


def test_tlearner_variance_identity(quick_models, small_data):
    model = quick_models["tnn"]
    X = small_data.X[:50]
    y0, y1 = posterior_arms(model, X, S=300, rng=3)
    tau = posterior_cate(model, X, S=300, rng=3).samples
    np.testing.assert_allclose(tau, y1 - y0, atol=1e-12)
    v = tau.var(axis=0, ddof=1)
    cov = np.array([np.cov(y1[:, i], y0[:, i])[0, 1] for i in range(X.shape[0])])
    identity = y1.var(axis=0, ddof=1) + y0.var(axis=0, ddof=1) - 2 * cov
    np.testing.assert_allclose(v, identity, rtol=1e-9, atol=1e-12)
    # the arms are sampled jointly, so the covariance term is not forced to zero
    assert np.any(np.abs(cov) > 0)


# ---------------------------------------------------------------- credible_band

def test_band_hand_quantiles():
    band = credible_band(np.array([[1.0], [2.0], [3.0], [4.0], [5.0]]), 0.5)
    assert band.lower[0] == 2.0 and band.upper[0] == 4.0 and band.mean[0] == 3.0


def test_band_constant_draws():
    band = credible_band(np.full((7, 3), 2.5), 0.9)
    assert np.all(band.lower == 2.5) and np.all(band.upper == 2.5) and np.all(band.width == 0)


@pytest.mark.parametrize("level", [0.0, 1.0, -0.2, 1.3])
def test_band_degenerate_level(level):
    with pytest.raises(ConfigurationError):
        credible_band(np.zeros((3, 2)), level)


@settings(deadline=None)
@given(st.integers(2, 40), st.integers(1, 5), st.floats(0.01, 0.98), st.floats(0.01, 0.98), st.integers(0, 2**31))
def test_band_nesting_and_mean(S, N, l1, l2, seed):
    draws = np.random.default_rng(seed).normal(size=(S, N))
    lo, hi = sorted((l1, l2))
    small, big = credible_band(draws, lo), credible_band(draws, hi)
    assert np.all(big.lower <= small.lower) and np.all(small.upper <= big.upper)
    np.testing.assert_allclose(small.mean, draws.mean(axis=0), rtol=0, atol=1e-15)


def test_band_accepts_posterior_draws(quick_models, small_data):
    d = posterior_cate(quick_models["icnn"], small_data.X[:8], S=20, rng=0)
    band = credible_band(d, 0.95)
    assert band.mean.shape == (8,) and np.all(band.lower <= band.upper)


# ---------------------------------------------------------------- score bands

def test_score_band_zero_dropout_collapses(no_dropout):
    model = no_dropout["icnn"]
    grid = np.linspace(-2, 2, 15)
    for kind in ("mu", "tau"):
        sf = score_bands(model, 0, grid, S=4, level=0.9, rng=0, kind=kind)
        assert np.array_equal(sf.lower, sf.upper)
        point = cm.feature_curves(model, 0, grid)[1 if kind == "tau" else 0]
        np.testing.assert_allclose(sf.mean, point, atol=1e-12)


def test_score_draws_centered_per_draw(quick_models, small_data):
    model = quick_models["icnn"]
    grid = small_data.X[:, 1]  # the training marginal itself
    d = score_draws(model, 1, grid, S=6, rng=2)
    np.testing.assert_allclose(d.samples.mean(axis=1), 0.0, atol=1e-12)
    assert d.target == "score_tau_j" and d.feature_index == 1


def test_score_bands_seeded(quick_models):
    grid = np.linspace(-1, 1, 5)
    a = score_bands(quick_models["icnn"], 2, grid, S=8, rng=5)
    b = score_bands(quick_models["icnn"], 2, grid, S=8, rng=5)
    assert np.array_equal(a.lower, b.lower) and np.array_equal(a.upper, b.upper)
    assert a.level == 0.95 and a.name == "x3" and a.kind == "tau"


@pytest.mark.parametrize("index", [-1, 10, 2.0, "x1"])
def test_score_bands_bad_index(quick_models, index):
    with pytest.raises(InputError):
        score_bands(quick_models["icnn"], index, [0.0], S=3)


def test_score_bands_need_icnn(quick_models):
    with pytest.raises(UnsupportedOperationError, match="require icnn"):
        score_bands(quick_models["tcnn"], 0, [0.0], S=3)


def test_all_score_bands(quick_models):
    out = all_score_bands(quick_models["icnn"], S=3, rng=1)
    assert len(out) == 10
    mu_sf, tau_sf = out[4]
    assert (mu_sf.kind, tau_sf.kind) == ("mu", "tau")
    assert len(tau_sf.grid) == 100 and np.all(np.isfinite(tau_sf.upper))


@pytest.mark.parametrize("kind", cm.KINDS)
def test_arm_draws_match_cate_draws(quick_models, small_data, kind):
    X = small_data.X[:12]
    y0, y1 = posterior_arms(quick_models[kind], X, S=4, rng=8)
    tau = posterior_cate(quick_models[kind], X, S=4, rng=8).samples
    np.testing.assert_allclose(y1 - y0, tau, atol=1e-10)
