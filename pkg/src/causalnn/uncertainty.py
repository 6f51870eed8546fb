"""MC-dropout posterior draws and credible bands.

Each draw is one stochastic forward pass with a single dropout mask shared by
all query points, i.e. one sampled sub-network. Draw ``s`` uses the generator
``default_rng([seed, s])`` so draws can be produced in any order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .causal_models import (
    CausalModel,
    ScoreFunction,
    _cate_std,
    _require_icnn,
    default_grid,
    feature_curves,
    predict_arms,
)
from .errors import ConfigurationError, InputError, StateError

TARGETS = ("cate", "mu", "score_mu_j", "score_tau_j")


@dataclass
class PosteriorDraws:
    samples: np.ndarray  # S x N
    target: str = "cate"
    feature_index: Optional[int] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] < 2:
            raise ConfigurationError("need an S x N sample matrix with S >= 2")
        if self.target not in TARGETS:
            raise ConfigurationError(f"unknown target {self.target!r}")
        if not np.all(np.isfinite(self.samples)):
            raise InputError("posterior draws contain non-finite values")


@dataclass
class CredibleBand:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def _base_seed(rng) -> tuple:
    """Normalise an int, int sequence or Generator into a tuple of seed words."""
    if rng is None:
        return (0,)
    if isinstance(rng, (int, np.integer)):
        return (int(rng),)
    if isinstance(rng, np.random.Generator):
        return (int(rng.integers(0, 2**63 - 1)),)
    return tuple(int(v) for v in rng)


def _draw_rngs(seed, S):
    return (np.random.default_rng([*seed, s]) for s in range(S))


def _check_s(S):
    if int(S) != S or S < 2:
        raise ConfigurationError(f"need at least 2 draws, got {S}")


def posterior_cate(model: CausalModel, X, S: int = 200, rng=None, target: str = "cate") -> PosteriorDraws:
    """S MC-dropout draws of tau(x) (or mu(x) with ``target="mu"``) at the rows of X.

    ``rng`` may be an int seed or a Generator (a base seed is drawn from it).
    """
    if not model.fitted:
        raise StateError("model has not been fitted")
    _check_s(S)
    if target not in ("cate", "mu"):
        raise ConfigurationError("posterior_cate target must be 'cate' or 'mu'")
    seed = _base_seed(rng)
    Xs = model.standardize(X)
    rows = []
    for g in _draw_rngs(seed, S):
        if target == "cate":
            rows.append(model.y_sd * _cate_std(model, Xs, "mc_sample", g))
        else:
            rows.append(predict_arms(model, X, "mc_sample", g)[0])
    return PosteriorDraws(np.vstack(rows), target)


def posterior_arms(model: CausalModel, X, S: int = 200, rng=None):
    """Joint draws of the two potential-outcome surfaces, (y0 draws, y1 draws).

    For tnn each draw samples f0 and f1 together, so their covariance is kept.
    """
    if not model.fitted:
        raise StateError("model has not been fitted")
    _check_s(S)
    seed = _base_seed(rng)
    y0s, y1s = [], []
    for g in _draw_rngs(seed, S):
        y0, y1 = predict_arms(model, X, "mc_sample", g)
        y0s.append(y0)
        y1s.append(y1)
    return np.vstack(y0s), np.vstack(y1s)


def credible_band(draws, level: float = 0.95) -> CredibleBand:
    """Pointwise equal-tailed band with linear-interpolation quantiles.

    ``mean`` is the pointwise sample mean. For strongly skewed draws at small
    levels the mean can fall outside [lower, upper]; no clipping is applied.
    """
    if not 0.0 < level < 1.0:
        raise ConfigurationError(f"level must lie in (0, 1), got {level}")
    samples = draws.samples if isinstance(draws, PosteriorDraws) else np.asarray(draws, dtype=np.float64)
    lo, hi = np.quantile(samples, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], axis=0, method="linear")
    mean = samples.mean(axis=0)
    # summation rounding must not pull the mean of identical draws off their value
    mean = np.where(lo == hi, lo, mean)
    return CredibleBand(mean, lo, hi, float(level))


def score_draws(model: CausalModel, feature_index: int, grid, S: int = 200, rng=None, kind: str = "tau") -> PosteriorDraws:
    """Per-draw centred score curves of one feature (S x len(grid))."""
    _require_icnn(model, "score bands")
    if kind not in ("mu", "tau"):
        raise ConfigurationError("kind must be 'mu' or 'tau'")
    if not isinstance(feature_index, (int, np.integer)) or not 0 <= feature_index < model.n_features:
        raise InputError(f"feature index {feature_index!r} out of range")
    _check_s(S)
    seed = _base_seed(rng)
    rows = []
    for g in _draw_rngs(seed, S):
        mu_c, tau_c = feature_curves(model, int(feature_index), grid, "mc_sample", g)
        rows.append(tau_c if kind == "tau" else mu_c)
    return PosteriorDraws(np.vstack(rows), f"score_{kind}_j", int(feature_index))


def score_bands(model: CausalModel, feature_index: int, grid, S: int = 200, level: float = 0.95,
                rng=None, kind: str = "tau") -> ScoreFunction:
    """Score function of one feature with its MC-dropout credible band."""
    draws = score_draws(model, feature_index, grid, S, rng, kind)
    band = credible_band(draws, level)
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    return ScoreFunction(int(feature_index), model.feature_names[feature_index], kind, grid,
                         band.mean, band.lower, band.upper, band.level)


def all_score_bands(model: CausalModel, grids=None, S: int = 200, level: float = 0.95, rng=None) -> list:
    """Banded (mu_j, tau_j) pairs for every feature, as score_functions() but with bands."""
    _require_icnn(model)
    seed = _base_seed(rng)
    if grids is None:
        grids = [default_grid(model, j) for j in range(model.n_features)]
    out = []
    for j, grid in enumerate(grids):
        out.append(tuple(
            score_bands(model, j, grid, S, level, (*seed, j, k), kind)
            for k, kind in enumerate(("mu", "tau"))
        ))
    return out
