"""Synthetic data generators used by the demos, CLI, and test suite."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

__all__ = ["friedman_function", "dgp_friedman", "dgp_causal_friedman",
           "dgp_robust", "dgp_linear_term"]


def friedman_function(X: np.ndarray) -> np.ndarray:
    """10*sin(pi*x1*x2) + 20*(x3 - 0.5)^2 + 10*x4 + 5*x5 on the first five
    columns."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 5:
        raise ValueError("need a 2-d covariate matrix with at least 5 columns")
    return (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
            + 20.0 * (X[:, 2] - 0.5) ** 2
            + 10.0 * X[:, 3] + 5.0 * X[:, 4])


def _check_np(n: int, p: int) -> None:
    if n < 1:
        raise ValueError("n must be positive")
    if p < 5:
        raise ValueError("the mean function uses 5 covariates; p must be >= 5")


def dgp_friedman(n: int, p: int = 5, snr: float = 3.0, seed=None):
    """Uniform covariates, Friedman mean, Gaussian noise with sd(f)/snr.

    Returns (X, y, f_true).
    """
    _check_np(n, p)
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    f = friedman_function(X)
    noise_sd = float(np.std(f, ddof=1)) / snr if n > 1 else 1.0
    y = f + rng.normal(0.0, noise_sd, size=n)
    return X, y, f


def dgp_causal_friedman(n: int, p: int = 5, seed=None):
    """Confounded treatment study built on the Friedman mean.

    The prognostic term mu is the Friedman function, the propensity is
    Phi(0.05 * (mu - mean(mu))), the treatment effect is tau(x) = 5*x1
    (population ATE 2.5), and y = mu + tau*Z + N(0, 1).

    Returns (X, Z, y, tau_true, pi_true, mu_true).
    """
    _check_np(n, p)
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    mu = friedman_function(X)
    pi = ndtr(0.05 * (mu - mu.mean()))
    z = rng.binomial(1, pi).astype(np.float64)
    tau = 5.0 * X[:, 0]
    y = mu + tau * z + rng.normal(0.0, 1.0, size=n)
    return X, z, y, tau, pi, mu


def dgp_robust(n: int, p: int = 5, nu: float = 2.0, sigma2: float = 9.0,
               seed=None):
    """Friedman mean with heavy-tailed errors: eps = t_nu * sqrt(sigma2).

    Returns (X, y, f_true).
    """
    _check_np(n, p)
    if nu <= 0:
        raise ValueError("nu must be positive")
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    f = friedman_function(X)
    y = f + rng.standard_t(nu, size=n) * np.sqrt(sigma2)
    return X, y, f


def dgp_linear_term(n: int, p: int = 5, gamma: float = 5.0, snr: float = 3.0,
                    seed=None):
    """Friedman mean plus a linear term gamma * W with W ~ U(0, 1).

    Covariates and noise are drawn in the same order as dgp_friedman, so
    gamma=0 reproduces that generator exactly at the same seed.

    Returns (X, W, y, f_true); f_true excludes the linear term.
    """
    _check_np(n, p)
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    f = friedman_function(X)
    noise_sd = float(np.std(f, ddof=1)) / snr if n > 1 else 1.0
    eps = rng.normal(0.0, noise_sd, size=n)
    w = rng.uniform(size=n)
    y = f + gamma * w + eps
    return X, w, y, f
