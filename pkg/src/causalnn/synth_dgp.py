"""Simulated benchmark data: Gaussian-copula covariates and a known CATE.

Continuous columns get standard normal marginals, binary columns are the
copula uniforms thresholded at 0.5. The outcome model is

    mu(x)  = 6 + 0.3 exp(x1) + x2^2 + 1.5 |x3| + 0.8 x4
    tau(x) = 3 + 0.8 x1^2
    pi(x)  = logistic(-1.5 + 0.5 x1 + nu / 10),  nu ~ U(0, 1)
    A ~ Bernoulli(pi),  Y = mu + tau A + eps,  eps ~ N(0, noise_var)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .dataset import Dataset
from .errors import ConfigurationError, DomainError


@dataclass
class DgpConfig:
    n: int = 2000
    p: int = 10
    n_continuous: int = 5
    noise_sd_sq: float = 0.5  # variance of the outcome noise
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ConfigurationError("n and p must be positive")
        if not 0 <= self.n_continuous <= self.p:
            raise ConfigurationError("n_continuous must lie in [0, p]")
        if self.p < 4 or self.n_continuous < 4:
            # mu uses x1..x4 as continuous inputs
            raise ConfigurationError("the outcome model needs at least 4 continuous covariates")
        if self.noise_sd_sq <= 0:
            raise ConfigurationError("noise variance must be positive")


@dataclass
class CopulaSpec:
    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ConfigurationError("theta must be square")
        if not np.allclose(t, t.T, rtol=0, atol=1e-14) or not np.allclose(np.diag(t), 1.0):
            raise ConfigurationError("theta must be symmetric with unit diagonal")
        try:
            self.cholesky = np.linalg.cholesky(t)
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError("theta is not positive definite") from exc
        self.theta = t

    @property
    def p(self) -> int:
        return self.theta.shape[0]


def build_theta(p: int) -> CopulaSpec:
    """theta_jk = 0.1^|j-k| + 0.1 * [j != k]."""
    if p < 1:
        raise ConfigurationError("p must be >= 1")
    j = np.arange(p)
    d = np.abs(j[:, None] - j[None, :])
    theta = 0.1 ** d + 0.1 * (d != 0)
    return CopulaSpec(theta)


# Acklam's rational approximation for the central and tail regions.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _polyval(coefs, x):
    out = np.zeros_like(x)
    for c in coefs:
        out = out * x + c
    return out


def normal_quantile(u):
    """Inverse standard normal CDF, vectorised.

    Rational approximation (rel. error ~1e-9) followed by one Halley step on
    Phi(x) - u, which brings the error down to double-precision level.
    """
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(~((u_arr > 0) & (u_arr < 1))):
        raise DomainError("normal_quantile requires 0 < u < 1")
    u1 = np.atleast_1d(u_arr)
    x = np.empty_like(u1)
    lo = u1 < _P_LOW
    hi = u1 > 1 - _P_LOW
    mid = ~(lo | hi)

    q = u1[mid] - 0.5
    r = q * q
    x[mid] = _polyval(_A, r) * q / (_polyval(_B, r) * r + 1.0)
    if lo.any():
        q = np.sqrt(-2.0 * np.log(u1[lo]))
        x[lo] = _polyval(_C, q) / (_polyval(_D, q) * q + 1.0)
    if hi.any():
        q = np.sqrt(-2.0 * np.log1p(-u1[hi]))
        x[hi] = -_polyval(_C, q) / (_polyval(_D, q) * q + 1.0)

    # Halley refinement; the residual uses the tail that avoids cancellation.
    e = np.where(u1 < 0.5, ndtr(x) - u1, (1.0 - u1) - ndtr(-x))
    dens = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    step = e / dens
    x = x - step / (1.0 + 0.5 * x * step)
    if u_arr.ndim == 0:
        return float(x[0])
    return x.reshape(u_arr.shape)


def copula_sample(spec: CopulaSpec, n: int, rng) -> np.ndarray:
    """n x P uniforms whose Gaussian ranks have correlation theta."""
    Z = rng.standard_normal((n, spec.p)) @ spec.cholesky.T
    U = ndtr(Z)
    # keep strictly inside (0, 1) so the quantile map stays finite
    tiny = np.finfo(np.float64).tiny
    return np.clip(U, tiny, 1.0 - np.finfo(np.float64).epsneg)


def make_covariates(U, n_continuous: int = 5) -> np.ndarray:
    U = np.asarray(U, dtype=np.float64)
    X = np.empty_like(U)
    X[:, :n_continuous] = normal_quantile(U[:, :n_continuous])
    X[:, n_continuous:] = (U[:, n_continuous:] > 0.5).astype(np.float64)
    return X


def logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def prognostic(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return 6.0 + 0.3 * np.exp(X[:, 0]) + 1.0 * X[:, 1] ** 2 + 1.5 * np.abs(X[:, 2]) + 0.8 * X[:, 3]


def cate(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return 3.0 + 0.8 * X[:, 0] ** 2


def propensity(X, nu) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return logistic(-1.5 + 0.5 * X[:, 0] + np.asarray(nu) / 10.0)


def simulate(config: DgpConfig) -> Dataset:
    rng = np.random.default_rng(config.seed)
    U = copula_sample(build_theta(config.p), config.n, rng)
    X = make_covariates(U, config.n_continuous)
    nu = rng.uniform(0.0, 1.0, config.n)
    mu = prognostic(X)
    tau = cate(X)
    pi = propensity(X, nu)
    A = (rng.random(config.n) < pi).astype(np.int64)
    eps = rng.normal(0.0, math.sqrt(config.noise_sd_sq), config.n)
    Y = mu + tau * A + eps
    binary = np.arange(config.p) >= config.n_continuous
    return Dataset(X, A, Y, mu_true=mu, tau_true=tau, pi_true=pi, binary_columns=binary)
