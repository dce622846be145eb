"""Independent numerical oracles used by the test suite.

Everything here is computed by generic quadrature, Monte Carlo, or direct
enumeration — none of it reuses the package's closed-form marginal-likelihood
algebra — so agreement between these values and the library is evidence that
the closed forms are right, not a tautology.

Conventions mirrored from the library's leaf models: `log_marginal` values are
log marginal-likelihood *improvements* over a zero-valued leaf (mean models)
or over the Gaussian normalizing constants alone (variance model), so an
empty leaf scores exactly 0.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.special import logsumexp
from scipy.stats import invgamma, norm


def _log_integral_1d(h, lo: float, hi: float, mode_guess: float) -> float:
    """log of integral of exp(h(t)) dt, shifted by the max of h on a scan grid."""
    grid = np.linspace(lo, hi, 4001)
    hv = np.array([h(t) for t in grid])
    shift = float(hv.max())
    center = float(grid[int(hv.argmax())]) if np.isfinite(shift) else mode_guess

    def f(t):
        return math.exp(h(t) - shift)

    left, _ = integrate.quad(f, lo, center, limit=400)
    right, _ = integrate.quad(f, center, hi, limit=400)
    return shift + math.log(left + right)


def log_marginal_constant(r, w, sigma2: float, tau: float) -> float:
    """Quadrature oracle for the constant-mean leaf.

    Model: r_i ~ N(mu, sigma2 / w_i) independent, mu ~ N(0, tau).
    Returns log[ p(r | mu integrated out) / p(r | mu = 0) ].
    """
    r = np.asarray(r, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)

    def h(mu):
        delta = -0.5 / sigma2 * float(np.sum(w * ((r - mu) ** 2 - r ** 2)))
        return delta + norm.logpdf(mu, 0.0, math.sqrt(tau))

    half = 12.0 * math.sqrt(tau)
    return _log_integral_1d(h, -half, half, 0.0)


def log_marginal_univariate(r, b, w, sigma2: float, tau: float) -> float:
    """Quadrature oracle for the scalar-regression leaf.

    Model: r_i ~ N(beta * b_i, sigma2 / w_i) independent, beta ~ N(0, tau).
    Returns log[ p(r | beta integrated out) / p(r | beta = 0) ].
    """
    r = np.asarray(r, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)

    def h(beta):
        delta = -0.5 / sigma2 * float(np.sum(w * ((r - beta * b) ** 2 - r ** 2)))
        return delta + norm.logpdf(beta, 0.0, math.sqrt(tau))

    half = 12.0 * math.sqrt(tau)
    return _log_integral_1d(h, -half, half, 0.0)


def log_marginal_multivariate_mc(r, Psi, w, sigma2: float, Sigma0,
                                 rng: np.random.Generator,
                                 num_draws: int = 400_000):
    """Monte-Carlo oracle for the vector-regression leaf.

    Model: r_i ~ N(psi_i' beta, sigma2 / w_i) independent, beta ~ N(0, Sigma0).
    Estimates log[ p(r | beta integrated out) / p(r | beta = 0) ] by averaging
    the likelihood ratio over prior draws of beta. Returns (estimate,
    standard_error_of_the_log).
    """
    r = np.asarray(r, dtype=np.float64)
    Psi = np.asarray(Psi, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    Sigma0 = np.asarray(Sigma0, dtype=np.float64)
    d = Sigma0.shape[0]
    chol = np.linalg.cholesky(Sigma0)
    betas = rng.standard_normal((num_draws, d)) @ chol.T
    fitted = betas @ Psi.T                                # (B, n)
    # log L(beta) - log L(0), normalizing constants cancel exactly.
    ll = -0.5 / sigma2 * np.sum(w * (fitted ** 2 - 2.0 * fitted * r), axis=1)
    estimate = float(logsumexp(ll) - math.log(num_draws))
    ratios = np.exp(ll - ll.max())
    rel_se = float(ratios.std(ddof=1) / math.sqrt(num_draws) / ratios.mean())
    return estimate, rel_se


def log_marginal_variance(r, w, a: float, b: float) -> float:
    """Quadrature oracle for the variance leaf.

    Model: r_i ~ N(0, lam / w_i) independent, lam ~ InverseGamma(a, b).
    Returns the log marginal with the Gaussian normalizing constants
    sum_i 0.5 * log(w_i / (2 pi)) removed (they are partition-invariant),
    i.e. log integral of lam^(-n/2) exp(-sum(w r^2)/(2 lam)) IG(lam; a, b).
    """
    r = np.asarray(r, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = r.shape[0]
    s0 = float(np.sum(w * r * r))

    def h(t):  # t = log(lam)
        lam = math.exp(t)
        return (-0.5 * n * t - 0.5 * s0 / lam
                + invgamma.logpdf(lam, a, scale=b) + t)

    return _log_integral_1d(h, -30.0, 30.0, math.log(b / (a + 1.0)))


def two_point_split_probability(y, sigma2: float, tau: float,
                                alpha: float, beta: float) -> float:
    """Exact posterior probability that a single tree splits, for two data
    points separated by one binary feature.

    Only two tree shapes are reachable: the root leaf (both points share one
    mean) and a single split (each point gets its own mean). Full marginals
    come from scipy's Gaussian densities; the depth-decaying structure prior
    supplies the shape weights.
    """
    y = np.asarray(y, dtype=np.float64)
    cov_joint = sigma2 * np.eye(2) + tau * np.ones((2, 2))
    sign, logdet = np.linalg.slogdet(cov_joint)
    m0 = float(-math.log(2.0 * math.pi) - 0.5 * logdet
               - 0.5 * y @ np.linalg.solve(cov_joint, y))
    m1 = float(norm.logpdf(y, 0.0, math.sqrt(sigma2 + tau)).sum())
    p0 = alpha  # split probability at depth 0
    p1 = alpha / 2.0 ** beta
    log_root = math.log1p(-p0) + m0
    log_split = math.log(p0) + 2.0 * math.log1p(-p1) + m1
    denom = logsumexp([log_root, log_split])
    return float(math.exp(log_split - denom))


def direct_random_intercept_gibbs(y, group_ids, sigma2: float,
                                  ig_shape: float, ig_scale: float,
                                  rng: np.random.Generator,
                                  num_draws: int, burnin: int) -> np.ndarray:
    """Plain (non-expanded) Gibbs sampler for y_i = beta_{g(i)} + e_i.

    beta_j ~ N(0, s2_beta) with s2_beta ~ IG(ig_shape, ig_scale); sigma2 is
    held fixed. Returns retained beta draws with shape (num_groups, num_draws).
    Serves as the marginal-distribution oracle for the parameter-expanded
    random-effects sampler.
    """
    y = np.asarray(y, dtype=np.float64)
    group_ids = np.asarray(group_ids)
    num_groups = int(group_ids.max()) + 1
    counts = np.bincount(group_ids, minlength=num_groups).astype(np.float64)
    sums = np.bincount(group_ids, weights=y, minlength=num_groups)
    beta = np.zeros(num_groups)
    s2_beta = 1.0
    out = np.empty((num_groups, num_draws))
    for it in range(burnin + num_draws):
        prec = counts / sigma2 + 1.0 / s2_beta
        mean = (sums / sigma2) / prec
        beta = mean + rng.standard_normal(num_groups) / np.sqrt(prec)
        shape = ig_shape + 0.5 * num_groups
        scale = ig_scale + 0.5 * float(beta @ beta)
        s2_beta = scale / rng.gamma(shape)
        if it >= burnin:
            out[:, it - burnin] = beta
    return out
