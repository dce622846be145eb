"""Custom Gibbs samplers composed from the low-level forest interface.

These demonstrate the residual add-back/subtract protocol: any extra model
term can join the sampler by adding its current contribution back to the
residual, redrawing its parameters against that partial residual, and
subtracting the new contribution — the forest updates are unchanged.

Both recipes run on the raw outcome scale (no standardization) so their
parameter traces are directly interpretable.
"""

from __future__ import annotations

import numpy as np

from .data import CovariatePreprocessor, ForestDataset, Outcome
from .leaf_models import GAUSSIAN_CONSTANT, make_leaf_model
from .sampler import (ForestModelConfig, ForestSampler, GlobalModelConfig,
                      sample_global_error_variance)
from .tree import Forest, ForestSamples
from .validation import check_positive_scalar, check_vector

__all__ = ["recipe_additive_linear", "recipe_robust_errors"]


def _forest_machinery(X, y, num_trees, cutpoint_grid_size):
    covariates = CovariatePreprocessor().fit_transform(X)
    n = covariates.num_rows
    y = check_vector(np.asarray(y), "y", n=n)
    var_y = float(np.var(y, ddof=1)) if n > 1 else 1.0
    leaf_model = make_leaf_model(GAUSSIAN_CONSTANT, tau=var_y / num_trees)
    dataset = ForestDataset(covariates)
    config = ForestModelConfig(num_trees, leaf_model, covariates.num_features,
                               cutpoint_grid_size=cutpoint_grid_size)
    sampler = ForestSampler(dataset, config)
    forest = Forest(num_trees, 1, False, False)
    return covariates, y, var_y, dataset, sampler, forest


def _retention(num_gfr, num_mcmc):
    total = num_gfr + num_mcmc
    if total == 0:
        raise ValueError("num_gfr + num_mcmc must be positive")
    if num_mcmc > 0:
        return total, (lambda it: it >= num_gfr)
    return total, (lambda it: True)


def recipe_additive_linear(X, y, w, *, num_gfr: int = 10, num_mcmc: int = 100,
                           num_trees: int = 200, gamma_tau: float = 100.0,
                           a_global: float = 1.0, b_global: float = 1.0,
                           cutpoint_grid_size: int = 100, seed=None) -> dict:
    """Forest plus a linear term: y = f(x) + gamma * w + N(0, sigma2).

    Per iteration: add the linear term back to the residual, draw gamma from
    its conjugate Gaussian conditional (prior N(0, gamma_tau)), subtract it
    again, then run a forest update and the global variance draw.

    Returns {"gamma", "sigma2", "forests", "conservation"}.
    """
    check_positive_scalar(gamma_tau, "gamma_tau")
    rng = np.random.default_rng(seed)
    covariates, y, var_y, dataset, sampler, forest = _forest_machinery(
        X, y, num_trees, cutpoint_grid_size)
    w = check_vector(np.asarray(w), "w", n=covariates.num_rows)

    global_config = GlobalModelConfig(var_y)
    outcome = Outcome(y)
    sampler.prepare_for_sampler(forest, outcome, float(np.mean(y)))
    gamma = 0.0
    sum_w2 = float(np.sum(w * w))

    samples = ForestSamples(num_trees, 1, False, False)
    gamma_trace, sigma2_trace, conservation = [], [], []
    total, retain = _retention(num_gfr, num_mcmc)
    for it in range(total):
        outcome.add_vector(gamma * w)
        sigma2 = global_config.sigma2
        precision = 1.0 / gamma_tau + sum_w2 / sigma2
        mean = float(np.dot(w, outcome.residual)) / sigma2 / precision
        gamma = rng.normal(mean, np.sqrt(1.0 / precision))
        outcome.subtract_vector(gamma * w)
        sampler.sample_one_iteration(forest, outcome, rng, global_config,
                                     gfr=it < num_gfr)
        global_config.update_global_error_variance(sample_global_error_variance(
            outcome, dataset, rng, a_global, b_global))
        conservation.append(float(np.max(np.abs(
            outcome.residual + sampler.forest_prediction(forest)
            + gamma * w - y))))
        if retain(it):
            samples.add_sample(forest)
            gamma_trace.append(gamma)
            sigma2_trace.append(global_config.sigma2)
    return {"gamma": np.asarray(gamma_trace),
            "sigma2": np.asarray(sigma2_trace),
            "forests": samples,
            "conservation": np.asarray(conservation)}


def recipe_robust_errors(X, y, *, nu: float = 2.0, num_gfr: int = 10,
                         num_mcmc: int = 100, num_trees: int = 200,
                         cutpoint_grid_size: int = 100, seed=None) -> dict:
    """Forest regression with Student-t errors via per-row scale mixing.

    The error is eps_i = a * u_i with u_i ~ N(0, phi_i) and
    phi_i ~ IG(nu/2, nu * tau2 / 2), which integrates to a scaled t with nu
    degrees of freedom. The forest runs with the global variance fixed at 1
    and per-row variance weights phi_i * a2; after the forest draw the
    conditionals are phi_i ~ IG((nu+1)/2, (nu*tau2 + r_i^2/a2)/2),
    a2 ~ IG(n/2, sum(r_i^2/phi_i)/2), and tau2 ~ Gamma(n*nu/2) with rate
    nu/2 * sum(1/phi_i). The implied error variance a2 * tau2 is recorded
    after the weights are pushed to the dataset.

    Returns {"phi", "a2", "tau2", "sigma2_equivalent", "forests",
    "conservation"}.
    """
    check_positive_scalar(nu, "nu")
    rng = np.random.default_rng(seed)
    covariates, y, var_y, dataset, sampler, forest = _forest_machinery(
        X, y, num_trees, cutpoint_grid_size)
    n = covariates.num_rows

    global_config = GlobalModelConfig(1.0)  # variance lives in the weights
    outcome = Outcome(y)
    dataset.update_variance_weights(np.ones(n))
    sampler.prepare_for_sampler(forest, outcome, float(np.mean(y)))
    phi = np.ones(n)
    a2 = 1.0
    tau2 = 1.0

    samples = ForestSamples(num_trees, 1, False, False)
    phi_trace, a2_trace, tau2_trace, sig2_trace, conservation = \
        [], [], [], [], []
    total, retain = _retention(num_gfr, num_mcmc)
    for it in range(total):
        sampler.sample_one_iteration(forest, outcome, rng, global_config,
                                     gfr=it < num_gfr)
        r = outcome.residual
        phi = ((nu * tau2 + r * r / a2) / 2.0) \
            / rng.gamma((nu + 1.0) / 2.0, size=n)
        a2 = (0.5 * float(np.sum(r * r / phi))) / rng.gamma(n / 2.0)
        tau2 = rng.gamma(n * nu / 2.0) / (nu / 2.0 * float(np.sum(1.0 / phi)))
        dataset.update_variance_weights(phi * a2)
        conservation.append(float(np.max(np.abs(
            outcome.residual + sampler.forest_prediction(forest) - y))))
        if retain(it):
            samples.add_sample(forest)
            phi_trace.append(phi.copy())
            a2_trace.append(a2)
            tau2_trace.append(tau2)
            sig2_trace.append(a2 * tau2)
    return {"phi": np.asarray(phi_trace).T if phi_trace else np.empty((n, 0)),
            "a2": np.asarray(a2_trace),
            "tau2": np.asarray(tau2_trace),
            "sigma2_equivalent": np.asarray(sig2_trace),
            "forests": samples,
            "conservation": np.asarray(conservation)}
