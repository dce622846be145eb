"""Conjugate leaf models: sufficient statistics, marginal likelihoods, and
posterior parameter draws for the four leaf types.

Model codes:
  0 -- constant Gaussian leaf, prior mu ~ N(0, tau)
  1 -- univariate Gaussian regression on a scalar basis, prior beta ~ N(0, tau)
  2 -- multivariate Gaussian regression on a basis vector, prior beta ~ N(0, Sigma0)
  3 -- log-linear variance leaf: exp(leaf) ~ InverseGamma(a, b); the forest's
       summed leaves act multiplicatively on the error variance

`log_marginal` omits terms that are additive over rows and therefore identical
across all partitions of the same rows (the zero-leaf Gaussian base for types
0-2, the Gaussian normalizer for type 3). Equivalently it returns the log
marginal likelihood improvement over a zero-valued (or unit-variance) leaf, so
an empty leaf scores exactly 0. Differences of these values are exact
likelihood ratios for grow/prune decisions and split scans.

Precision weights passed to the stat builders are 1/(variance weight) for the
mean models; for the variance model they must be the full precision excluding
the tree being sampled, 1 / (sigma2 * v_i * prod_other exp(leaf)).
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

GAUSSIAN_CONSTANT = 0
GAUSSIAN_UNIVARIATE_REGRESSION = 1
GAUSSIAN_MULTIVARIATE_REGRESSION = 2
LOG_LINEAR_VARIANCE = 3


class GaussianConstantLeaf:
    """Leaf model 0: every leaf holds a scalar mean with a N(0, tau) prior."""

    model_code = GAUSSIAN_CONSTANT
    leaf_dimension = 1
    requires_basis = False
    is_exponentiated = False

    def __init__(self, tau: float):
        self.update_scale(tau)

    def update_scale(self, tau: float) -> None:
        if tau <= 0 or not math.isfinite(tau):
            raise ValueError(f"tau must be positive and finite, got {tau}")
        self.tau = float(tau)

    def empty_stats(self):
        return np.zeros(2)

    def accumulate(self, stats, r: float, w: float, basis_row=None):
        stats[0] += w
        stats[1] += w * r
        return stats

    def row_stats(self, residual, precision, basis=None):
        return np.stack([precision, precision * residual], axis=-1)

    def log_marginal(self, stats, sigma2: float) -> float:
        return float(self.log_marginal_grid(stats[None, :], sigma2)[0])

    def log_marginal_grid(self, stats, sigma2: float) -> np.ndarray:
        sw = np.maximum(stats[..., 0], 0.0)
        swr = stats[..., 1]
        denom = sigma2 + self.tau * sw
        return 0.5 * np.log(sigma2 / denom) + \
            self.tau * swr ** 2 / (2.0 * sigma2 * denom)

    def sample_leaf(self, stats, sigma2: float, rng: np.random.Generator) -> np.ndarray:
        denom = sigma2 + self.tau * max(stats[0], 0.0)
        mean = self.tau * stats[1] / denom
        var = self.tau * sigma2 / denom
        return np.array([mean + math.sqrt(var) * rng.standard_normal()])

    def hyperparams(self) -> dict:
        return {"tau": self.tau}


class GaussianUnivariateRegressionLeaf(GaussianConstantLeaf):
    """Leaf model 1: leaf effect enters through a scalar basis, beta ~ N(0, tau).

    The sufficient statistics (sum w b^2, sum w b r) reduce to the constant
    model's when the basis is identically 1, so the math is shared.
    """

    model_code = GAUSSIAN_UNIVARIATE_REGRESSION
    requires_basis = True

    def accumulate(self, stats, r: float, w: float, basis_row=None):
        b = float(np.asarray(basis_row).reshape(()))
        stats[0] += w * b * b
        stats[1] += w * b * r
        return stats

    def row_stats(self, residual, precision, basis=None):
        b = basis[:, 0] if basis.ndim == 2 else basis
        return np.stack([precision * b * b, precision * b * residual], axis=-1)


class GaussianMultivariateRegressionLeaf:
    """Leaf model 2: vector leaf coefficients on a basis, beta ~ N(0, Sigma0)."""

    model_code = GAUSSIAN_MULTIVARIATE_REGRESSION
    requires_basis = True
    is_exponentiated = False

    def __init__(self, Sigma0: np.ndarray):
        self.update_scale(Sigma0)

    def update_scale(self, Sigma0: np.ndarray) -> None:
        S = np.asarray(Sigma0, dtype=np.float64)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("Sigma0 must be a square matrix")
        if not np.allclose(S, S.T):
            raise ValueError("Sigma0 must be symmetric")
        try:
            chol = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise ValueError("Sigma0 must be positive definite") from None
        self.Sigma0 = S
        self.leaf_dimension = S.shape[0]
        self._Sigma0_inv = np.linalg.inv(S)
        self._logdet_Sigma0 = 2.0 * float(np.log(np.diag(chol)).sum())

    def empty_stats(self):
        d = self.leaf_dimension
        return (np.zeros((d, d)), np.zeros(d))

    def accumulate(self, stats, r: float, w: float, basis_row=None):
        psi = np.asarray(basis_row, dtype=np.float64).reshape(self.leaf_dimension)
        stats[0][...] += w * np.outer(psi, psi)
        stats[1][...] += w * psi * r
        return stats

    def row_stats(self, residual, precision, basis=None):
        psi = np.asarray(basis, dtype=np.float64)
        outer = precision[:, None, None] * psi[:, :, None] * psi[:, None, :]
        cross = precision[:, None] * psi * residual[:, None]
        return outer, cross

    def log_marginal(self, stats, sigma2: float) -> float:
        G, h = stats
        return float(self.log_marginal_grid((G[None], h[None]), sigma2)[0])

    def log_marginal_grid(self, stats, sigma2: float) -> np.ndarray:
        G, h = stats
        P = self._Sigma0_inv + G / sigma2
        sign, logdet_P = np.linalg.slogdet(P)
        if np.any(sign <= 0):
            raise np.linalg.LinAlgError("posterior precision is not positive definite")
        sol = np.linalg.solve(P, h[..., :, None])[..., 0]
        quad = np.einsum("...i,...i->...", h, sol) / sigma2 ** 2
        return -0.5 * (self._logdet_Sigma0 + logdet_P) + 0.5 * quad

    def sample_leaf(self, stats, sigma2: float, rng: np.random.Generator) -> np.ndarray:
        G, h = stats
        P = self._Sigma0_inv + G / sigma2
        chol = _cholesky_with_jitter(P)
        # mean = P^-1 h / sigma2 via the factor; draw = mean + L^-T z
        w = solve_triangular(chol, h / sigma2, lower=True)
        mean = solve_triangular(chol.T, w, lower=False)
        z = rng.standard_normal(self.leaf_dimension)
        return mean + solve_triangular(chol.T, z, lower=False)

    def hyperparams(self) -> dict:
        return {"Sigma0": self.Sigma0.tolist()}


class LogLinearVarianceLeaf:
    """Leaf model 3: exp(leaf) ~ IG(a, b); leaves add on the log-variance scale."""

    model_code = LOG_LINEAR_VARIANCE
    leaf_dimension = 1
    requires_basis = False
    is_exponentiated = True

    def __init__(self, a: float, b: float):
        if a <= 0 or b <= 0:
            raise ValueError("variance leaf prior needs a > 0 and b > 0")
        self.a = float(a)
        self.b = float(b)

    def update_scale(self, a: float, b: float) -> None:
        if a <= 0 or b <= 0:
            raise ValueError("variance leaf prior needs a > 0 and b > 0")
        self.a = float(a)
        self.b = float(b)

    def empty_stats(self):
        return np.zeros(2)

    def accumulate(self, stats, r: float, w: float, basis_row=None):
        stats[0] += 1.0
        stats[1] += w * r * r
        return stats

    def row_stats(self, residual, precision, basis=None):
        return np.stack([np.ones_like(residual),
                         precision * residual ** 2], axis=-1)

    def log_marginal(self, stats, sigma2: float = 1.0) -> float:
        return float(self.log_marginal_grid(stats[None, :], sigma2)[0])

    def log_marginal_grid(self, stats, sigma2: float = 1.0) -> np.ndarray:
        n = np.maximum(stats[..., 0], 0.0)
        s = np.maximum(stats[..., 1], 0.0)
        shape = self.a + 0.5 * n
        return self.a * math.log(self.b) - gammaln(self.a) + gammaln(shape) \
            - shape * np.log(self.b + 0.5 * s)

    def sample_leaf(self, stats, sigma2: float, rng: np.random.Generator) -> np.ndarray:
        shape = self.a + 0.5 * max(stats[0], 0.0)
        scale = self.b + 0.5 * max(stats[1], 0.0)
        draw = scale / rng.gamma(shape)
        return np.array([math.log(draw)])

    def hyperparams(self) -> dict:
        return {"a": self.a, "b": self.b}


def _cholesky_with_jitter(P: np.ndarray) -> np.ndarray:
    """Cholesky factor, retrying once with trace-scaled jitter before failing."""
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * float(np.trace(P))
        try:
            return np.linalg.cholesky(P + jitter * np.eye(P.shape[0]))
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "posterior precision is singular even after jitter") from None


def combine_stats(model, a, b):
    """Sum two sufficient-stat containers (parent = left + right, exactly)."""
    if isinstance(a, tuple):
        return tuple(x + y for x, y in zip(a, b))
    return a + b


def make_leaf_model(code: int, *, tau: Optional[float] = None,
                    Sigma0: Optional[np.ndarray] = None,
                    a: Optional[float] = None, b: Optional[float] = None):
    if code == GAUSSIAN_CONSTANT:
        return GaussianConstantLeaf(tau)
    if code == GAUSSIAN_UNIVARIATE_REGRESSION:
        return GaussianUnivariateRegressionLeaf(tau)
    if code == GAUSSIAN_MULTIVARIATE_REGRESSION:
        return GaussianMultivariateRegressionLeaf(Sigma0)
    if code == LOG_LINEAR_VARIANCE:
        return LogLinearVarianceLeaf(a, b)
    raise ValueError(f"unknown leaf model code {code}")


def sample_leaf_scale(leaf_values: np.ndarray, a: float, b: float,
                      rng: np.random.Generator) -> float:
    """Draw the shared leaf variance tau from IG(a + N/2, b + sum(mu^2)/2)."""
    values = np.asarray(leaf_values, dtype=np.float64).ravel()
    shape = a + 0.5 * values.size
    scale = b + 0.5 * float(values @ values)
    return scale / rng.gamma(shape)
