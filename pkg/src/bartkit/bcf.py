"""Bayesian causal forests: prognostic + treatment-effect forest decomposition.

The outcome model is y = mu(x) + tau(x) * z + (optional random effects) + e.
The prognostic forest mu uses constant leaves (optionally with an appended
propensity-score covariate); the treatment forest tau uses univariate
leaf regression on the treatment itself, so control units receive exactly
zero treatment contribution when z is binary.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.special import ndtr
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import serialization as ser
from .bart import (BARTRegressor, ForestConfig, RandomEffectsConfig,
                   VarianceForestConfig, _resolve_variable_weights,
                   _variance_leaf_defaults)
from .data import (NUMERIC, CovariateMatrix, CovariatePreprocessor,
                   ForestDataset, Outcome, StandardizationInfo,
                   standardize_outcome)
from .errors import BartkitError
from .leaf_models import (GAUSSIAN_CONSTANT, GAUSSIAN_UNIVARIATE_REGRESSION,
                          LOG_LINEAR_VARIANCE, make_leaf_model,
                          sample_leaf_scale)
from .random_effects import (RandomEffectsDataset, RandomEffectsModel,
                             RandomEffectsSamples, intercept_basis,
                             intercept_plus_treatment_basis)
from .sampler import (ForestModelConfig, ForestSampler, GlobalModelConfig,
                      sample_global_error_variance,
                      sample_truncated_normal_latents)
from .tree import Forest, ForestSamples
from .validation import check_vector

PROPENSITY_COLUMN = "__propensity__"


def _default_mu_config() -> ForestConfig:
    return ForestConfig(num_trees=200)


def _default_tau_config() -> ForestConfig:
    return ForestConfig(num_trees=50, beta=3.0)


def _params_from_doc(params: dict) -> dict:
    """Constructor kwargs recovered from a serialized params echo."""

    def cfg(klass, value):
        if value is None:
            return None
        clean = dict(value)
        for key in ("keep_vars", "drop_vars"):
            if clean.get(key) is not None:
                clean[key] = tuple(clean[key])
        return klass(**clean)

    kwargs = {
        "num_gfr": int(params["num_gfr"]),
        "num_burnin": int(params["num_burnin"]),
        "num_mcmc": int(params["num_mcmc"]),
        "mu_forest": cfg(ForestConfig, params.get("mu_forest")),
        "tau_forest": cfg(ForestConfig, params.get("tau_forest")),
        "variance_forest": cfg(VarianceForestConfig,
                               params.get("variance_forest")),
        "random_effects": cfg(RandomEffectsConfig,
                              params.get("random_effects")),
        "propensity_covariate": params["propensity_covariate"],
        "sigma2_init": params.get("sigma2_init"),
        "a_global": float(params["a_global"]),
        "b_global": float(params["b_global"]),
        "sample_sigma2_global": bool(params["sample_sigma2_global"]),
        "probit_outcome_model": bool(params["probit_outcome_model"]),
        "cutpoint_grid_size": int(params["cutpoint_grid_size"]),
        "standardize": bool(params.get("standardize", True)),
    }
    if params.get("ordered_features"):
        kwargs["ordered_features"] = tuple(params["ordered_features"])
    if params.get("unordered_features"):
        kwargs["unordered_features"] = tuple(params["unordered_features"])
    return kwargs


class BCFRegressor(BaseEstimator, RegressorMixin):
    """Bayesian causal forest estimator.

    fit(X, Z, y) decomposes the outcome into a prognostic term mu(x) and a
    treatment term tau(x) * z. When Z is binary and no propensity score is
    supplied, an internal probit BART model estimates one; its posterior-mean
    probability is appended to the prognostic forest's covariates.
    """

    def __init__(self, *, num_gfr: int = 10, num_burnin: int = 0,
                 num_mcmc: int = 100,
                 mu_forest: Optional[ForestConfig] = None,
                 tau_forest: Optional[ForestConfig] = None,
                 variance_forest: Optional[VarianceForestConfig] = None,
                 random_effects: Optional[RandomEffectsConfig] = None,
                 propensity_covariate: str = "mu",
                 sigma2_init: Optional[float] = None,
                 a_global: float = 1.0, b_global: float = 1.0,
                 sample_sigma2_global: bool = True,
                 probit_outcome_model: bool = False,
                 cutpoint_grid_size: int = 100,
                 standardize: bool = True,
                 ordered_features: Optional[tuple] = None,
                 unordered_features: Optional[tuple] = None,
                 random_state=None):
        self.num_gfr = num_gfr
        self.num_burnin = num_burnin
        self.num_mcmc = num_mcmc
        self.mu_forest = mu_forest
        self.tau_forest = tau_forest
        self.variance_forest = variance_forest
        self.random_effects = random_effects
        self.propensity_covariate = propensity_covariate
        self.sigma2_init = sigma2_init
        self.a_global = a_global
        self.b_global = b_global
        self.sample_sigma2_global = sample_sigma2_global
        self.probit_outcome_model = probit_outcome_model
        self.cutpoint_grid_size = cutpoint_grid_size
        self.standardize = standardize
        self.ordered_features = ordered_features
        self.unordered_features = unordered_features
        self.random_state = random_state

    # -- fitting --------------------------------------------------------------

    def fit(self, X, Z, y, *, propensity=None, rfx_group_ids=None,
            variance_weights=None, previous_model=None,
            warm_start_sample: Optional[int] = None):
        """Run the sampler. Returns self."""
        if self.propensity_covariate not in ("mu", "none"):
            raise ValueError("propensity_covariate must be 'mu' or 'none'")
        rng = np.random.default_rng(self.random_state)
        mu_cfg = self.mu_forest or _default_mu_config()
        tau_cfg = self.tau_forest or _default_tau_config()
        var_cfg = self.variance_forest
        rfx_cfg = self.random_effects or RandomEffectsConfig()

        warm = None
        doc = None
        if previous_model is not None:
            doc = ser.parse_artifact(previous_model) \
                if isinstance(previous_model, str) else previous_model
            warm = ser.warm_start_state(doc, warm_start_sample)
            self.preprocessor_ = CovariatePreprocessor.from_dict(
                doc["preprocessing"])
            covariates = self.preprocessor_.transform(X)
            std = doc["standardization"]
            self.standardization_ = StandardizationInfo(
                float(std["center"]), float(std["scale"]))
        else:
            self.preprocessor_ = CovariatePreprocessor(
                ordered_columns=self.ordered_features,
                unordered_columns=self.unordered_features).fit(X)
            covariates = self.preprocessor_.transform(X)
            self.standardization_ = None
        n = covariates.num_rows

        z = check_vector(np.asarray(Z), "Z", n=n)
        z_binary = bool(np.all(np.isin(z, (0.0, 1.0))))

        # Propensity handling.
        self.propensity_model_samples_ = None
        pi = None
        if self.propensity_covariate == "mu":
            if propensity is not None:
                pi = check_vector(propensity, "propensity", n=n)
                if z_binary and (np.any(pi < 0.0) or np.any(pi > 1.0)):
                    raise ValueError("propensity scores must lie in [0, 1] "
                                     "for a binary treatment")
            elif doc is not None and "propensity" in doc["forests"]:
                self.propensity_model_samples_ = ser.forest_samples_from_dict(
                    doc["forests"]["propensity"])
                pi = ndtr(self.propensity_model_samples_.predict(
                    covariates.values)).mean(axis=1)
            elif z_binary:
                prop_model = BARTRegressor(
                    probit_outcome_model=True,
                    ordered_features=self.ordered_features,
                    unordered_features=self.unordered_features,
                    random_state=rng)
                prop_model.fit(X, z)
                pi = prop_model.predict(X)
                self.propensity_model_samples_ = prop_model.mean_forest_samples_
            else:
                raise BartkitError(
                    "continuous treatment requires an explicit propensity or "
                    "propensity_covariate='none'")

        y = np.asarray(y)
        if self.probit_outcome_model:
            y_bin = check_vector(y, "y", n=n)
            if not np.all(np.isin(y_bin, (0.0, 1.0))):
                raise ValueError("probit outcome must be coded 0/1")
            if var_cfg is not None:
                raise ValueError("variance forest is not available with a "
                                 "probit outcome model")
            self.standardization_ = StandardizationInfo(0.0, 1.0)
            latent = np.where(y_bin == 1.0, 0.6745, -0.6745)
            y_std = latent.copy()
        else:
            y_raw = check_vector(y, "y", n=n)
            if self.standardization_ is None:
                if self.standardize:
                    y_std, info = standardize_outcome(y_raw)
                    self.standardization_ = info
                else:
                    self.standardization_ = StandardizationInfo(0.0, 1.0)
                    y_std = y_raw.copy()
            else:
                y_std = self.standardization_.apply(y_raw)
            y_bin = None
            latent = None

        if variance_weights is not None:
            variance_weights = check_vector(variance_weights,
                                            "variance_weights", n=n)
        user_weights = variance_weights

        # Prognostic-forest covariates (propensity appended when used).
        if pi is not None:
            mu_cov = CovariateMatrix(
                np.column_stack([covariates.values, pi]),
                np.append(covariates.feature_types, NUMERIC),
                covariates.column_names + [PROPENSITY_COLUMN],
                dict(covariates.levels))
            always_keep = (covariates.num_features,)
        else:
            mu_cov = covariates
            always_keep = ()

        var_y = float(np.var(y_std, ddof=1)) if n > 1 else 1.0
        mu_scale = mu_cfg.leaf_scale_init if mu_cfg.leaf_scale_init is not None \
            else var_y / mu_cfg.num_trees
        tau_scale = tau_cfg.leaf_scale_init \
            if tau_cfg.leaf_scale_init is not None \
            else var_y / tau_cfg.num_trees
        mu_model = make_leaf_model(GAUSSIAN_CONSTANT, tau=mu_scale)
        tau_model = make_leaf_model(GAUSSIAN_UNIVARIATE_REGRESSION,
                                    tau=tau_scale)
        mu_do_scale = mu_cfg.sample_leaf_scale \
            if mu_cfg.sample_leaf_scale is not None else True
        tau_do_scale = tau_cfg.sample_leaf_scale \
            if tau_cfg.sample_leaf_scale is not None else True
        mu_b_leaf = mu_cfg.b_leaf if mu_cfg.b_leaf is not None \
            else mu_scale * (mu_cfg.a_leaf - 1.0)
        tau_b_leaf = tau_cfg.b_leaf if tau_cfg.b_leaf is not None \
            else tau_scale * (tau_cfg.a_leaf - 1.0)

        mu_weights = _resolve_variable_weights(
            mu_cov.num_features, mu_cov.column_names,
            mu_cfg.keep_vars, mu_cfg.drop_vars, always_keep=always_keep)
        tau_weights = _resolve_variable_weights(
            covariates.num_features, covariates.column_names,
            tau_cfg.keep_vars, tau_cfg.drop_vars)

        mu_dataset = ForestDataset(mu_cov, None, user_weights)
        tau_dataset = ForestDataset(covariates, z.reshape(-1, 1), user_weights)
        mu_config = ForestModelConfig(
            mu_cfg.num_trees, mu_model, mu_cov.num_features,
            alpha=mu_cfg.alpha, beta=mu_cfg.beta,
            min_samples_leaf=mu_cfg.min_samples_leaf,
            max_depth=mu_cfg.max_depth,
            cutpoint_grid_size=self.cutpoint_grid_size,
            variable_weights=mu_weights)
        tau_config = ForestModelConfig(
            tau_cfg.num_trees, tau_model, covariates.num_features,
            alpha=tau_cfg.alpha, beta=tau_cfg.beta,
            min_samples_leaf=tau_cfg.min_samples_leaf,
            max_depth=tau_cfg.max_depth,
            cutpoint_grid_size=self.cutpoint_grid_size,
            variable_weights=tau_weights)
        mu_sampler = ForestSampler(mu_dataset, mu_config)
        tau_sampler = ForestSampler(tau_dataset, tau_config)

        var_sampler = None
        var_forest = None
        if var_cfg is not None:
            a_leaf, b_leaf_var = _variance_leaf_defaults(var_cfg.num_trees)
            if var_cfg.a_leaf is not None:
                a_leaf = var_cfg.a_leaf
            if var_cfg.b_leaf is not None:
                b_leaf_var = var_cfg.b_leaf
            var_model = make_leaf_model(LOG_LINEAR_VARIANCE, a=a_leaf,
                                        b=b_leaf_var)
            var_weights_cfg = _resolve_variable_weights(
                covariates.num_features, covariates.column_names,
                var_cfg.keep_vars, var_cfg.drop_vars)
            var_dataset = ForestDataset(covariates, None, user_weights)
            var_config = ForestModelConfig(
                var_cfg.num_trees, var_model, covariates.num_features,
                alpha=var_cfg.alpha, beta=var_cfg.beta,
                min_samples_leaf=var_cfg.min_samples_leaf,
                max_depth=var_cfg.max_depth,
                cutpoint_grid_size=self.cutpoint_grid_size,
                variable_weights=var_weights_cfg)
            var_sampler = ForestSampler(var_dataset, var_config)

        rfx_dataset = None
        rfx_model = None
        if rfx_group_ids is not None:
            if rfx_cfg.model_spec == "intercept_only":
                rfx_basis = intercept_basis(n)
            elif rfx_cfg.model_spec == "intercept_plus_treatment":
                rfx_basis = intercept_plus_treatment_basis(z)
            else:
                raise ValueError(f"unknown random-effects model_spec "
                                 f"{rfx_cfg.model_spec!r}")
            rfx_dataset = RandomEffectsDataset(rfx_group_ids, rfx_basis)
            rfx_model = RandomEffectsModel(
                rfx_dataset.num_components, rfx_dataset.num_groups,
                alpha_prior_var=rfx_cfg.alpha_prior_var,
                variance_prior_shape=rfx_cfg.variance_prior_shape,
                variance_prior_scale=rfx_cfg.variance_prior_scale)

        if self.probit_outcome_model:
            sigma2 = 1.0
            do_sigma2 = False
        else:
            sigma2 = self.sigma2_init if self.sigma2_init is not None else var_y
            do_sigma2 = self.sample_sigma2_global
        global_config = GlobalModelConfig(sigma2)

        outcome = Outcome(y_std)
        mu_forest = Forest(mu_cfg.num_trees, 1, False, False)
        tau_forest = Forest(tau_cfg.num_trees, 1, True, False)
        num_gfr = self.num_gfr
        if warm is not None:
            for name in ("mu", "tau"):
                if name not in warm["forests"]:
                    raise ValueError(f"previous model has no {name} forest")
            mu_forest = warm["forests"]["mu"]
            tau_forest = warm["forests"]["tau"]
            if mu_forest.num_trees != mu_cfg.num_trees or \
                    tau_forest.num_trees != tau_cfg.num_trees:
                raise ValueError("previous model's forests do not match this "
                                 "configuration")
            if "sigma2" in warm:
                global_config.update_global_error_variance(warm["sigma2"])
            if "leaf_scale_mu" in warm:
                mu_model.update_scale(warm["leaf_scale_mu"])
            if "leaf_scale_tau" in warm:
                tau_model.update_scale(warm["leaf_scale_tau"])
            num_gfr = 0
            mu_sampler.prepare_for_sampler(mu_forest, outcome, None)
            tau_sampler.prepare_for_sampler(tau_forest, outcome, None)
        else:
            mu_sampler.prepare_for_sampler(mu_forest, outcome,
                                           float(np.mean(y_std)))
            tau_sampler.prepare_for_sampler(tau_forest, outcome, 0.0)
        if var_sampler is not None:
            var_forest = Forest(var_cfg.num_trees, 1, False, True)
            if warm is not None and "variance" in warm["forests"]:
                var_forest = warm["forests"]["variance"]
                var_sampler.prepare_for_sampler(var_forest, outcome, None)
            else:
                var_sampler.prepare_for_sampler(var_forest, outcome, 0.0)
        if warm is not None and rfx_model is not None and "rfx_model" in warm:
            rfx_model = warm["rfx_model"]
            outcome.subtract_vector(rfx_model.predict(rfx_dataset))

        mu_samples = ForestSamples(mu_cfg.num_trees, 1, False, False)
        tau_samples = ForestSamples(tau_cfg.num_trees, 1, True, False)
        var_samples = ForestSamples(var_cfg.num_trees, 1, False, True) \
            if var_cfg is not None else None
        rfx_samples = RandomEffectsSamples(
            rfx_dataset.num_components, rfx_dataset.num_groups,
            rfx_dataset.group_labels) if rfx_dataset is not None else None
        sigma2_trace = []
        mu_scale_trace = []
        tau_scale_trace = []

        total = num_gfr + self.num_burnin + self.num_mcmc
        if total == 0:
            raise ValueError("num_gfr + num_burnin + num_mcmc must be positive")
        retain_from = num_gfr + self.num_burnin if self.num_mcmc > 0 else 0
        retain_gfr_only = self.num_mcmc == 0

        for it in range(total):
            is_gfr = it < num_gfr
            if self.probit_outcome_model:
                fitted = latent - outcome.residual
                new_latent = sample_truncated_normal_latents(fitted, y_bin, rng)
                outcome.add_vector(new_latent - latent)
                latent = new_latent
            mu_sampler.sample_one_iteration(mu_forest, outcome, rng,
                                            global_config, gfr=is_gfr)
            tau_sampler.sample_one_iteration(tau_forest, outcome, rng,
                                             global_config, gfr=is_gfr)
            if var_sampler is not None:
                var_sampler.sample_one_iteration(var_forest, outcome, rng,
                                                 global_config, gfr=is_gfr)
                mult = np.exp(var_sampler.log_variance_total)
                base = user_weights if user_weights is not None else 1.0
                mu_dataset.update_variance_weights(base * mult)
                tau_dataset.update_variance_weights(base * mult)
            if rfx_model is not None:
                outcome.add_vector(rfx_model.predict(rfx_dataset))
                rfx_model.sample_one_iteration(
                    rfx_dataset, outcome, rng, global_config.sigma2,
                    mu_dataset.variance_weights)
                outcome.subtract_vector(rfx_model.predict(rfx_dataset))
            if do_sigma2:
                global_config.update_global_error_variance(
                    sample_global_error_variance(outcome, mu_dataset, rng,
                                                 self.a_global, self.b_global))
            if mu_do_scale:
                mu_model.update_scale(sample_leaf_scale(
                    mu_forest.leaf_value_vector(), mu_cfg.a_leaf, mu_b_leaf,
                    rng))
            if tau_do_scale:
                tau_model.update_scale(sample_leaf_scale(
                    tau_forest.leaf_value_vector(), tau_cfg.a_leaf, tau_b_leaf,
                    rng))

            retained = (it >= retain_from) if not retain_gfr_only else is_gfr
            if retained:
                mu_samples.add_sample(mu_forest)
                tau_samples.add_sample(tau_forest)
                if var_samples is not None:
                    var_samples.add_sample(var_forest)
                if rfx_samples is not None:
                    rfx_samples.add_sample(rfx_model)
                sigma2_trace.append(global_config.sigma2)
                if mu_do_scale:
                    mu_scale_trace.append(mu_model.tau)
                if tau_do_scale:
                    tau_scale_trace.append(tau_model.tau)

        self.mu_forest_samples_ = mu_samples
        self.tau_forest_samples_ = tau_samples
        self.variance_forest_samples_ = var_samples
        self.rfx_samples_ = rfx_samples
        self.rfx_model_spec_ = rfx_cfg.model_spec if rfx_samples is not None \
            else None
        self.sigma2_trace_ = np.asarray(sigma2_trace)
        self.mu_leaf_scale_trace_ = np.asarray(mu_scale_trace)
        self.tau_leaf_scale_trace_ = np.asarray(tau_scale_trace)
        self.num_samples_ = mu_samples.num_samples
        self.z_binary_ = z_binary
        self.uses_propensity_ = pi is not None
        self.rfx_prior_ = None if rfx_model is None else {
            "alpha_prior_var": rfx_cfg.alpha_prior_var,
            "variance_prior_shape": rfx_cfg.variance_prior_shape,
            "variance_prior_scale": rfx_cfg.variance_prior_scale}
        # Cached training-set treatment draws back subgroup average effects.
        self._train_tau_draws = tau_samples.predict(
            covariates.values, np.ones((n, 1)))
        self._train_group_ids = None if rfx_dataset is None \
            else rfx_dataset.group_indices.copy()
        return self

    # -- prediction -----------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "mu_forest_samples_"):
            raise NotFittedError("this BCFRegressor is not fitted yet")

    def _resolve_propensity(self, covariates, propensity, n):
        if not self.uses_propensity_:
            return None
        if propensity is not None:
            pi = check_vector(propensity, "propensity", n=n)
            if self.z_binary_ and (np.any(pi < 0.0) or np.any(pi > 1.0)):
                raise ValueError("propensity scores must lie in [0, 1] for a "
                                 "binary treatment")
            return pi
        if self.propensity_model_samples_ is not None:
            return ndtr(self.propensity_model_samples_.predict(
                covariates.values)).mean(axis=1)
        raise ValueError("this model was fit with a propensity covariate; "
                         "pass propensity to predict")

    def _rfx_draws(self, group_idx, z, n):
        basis = intercept_basis(n) if self.rfx_model_spec_ == "intercept_only" \
            else intercept_plus_treatment_basis(z)
        return self.rfx_samples_.predict(group_idx, basis)

    def _lookup_groups(self, rfx_group_ids):
        lookup = {lab: i for i, lab in
                  enumerate(self.rfx_samples_.group_labels)}
        raw = list(np.asarray(rfx_group_ids).tolist())
        try:
            return np.asarray([lookup[g] for g in raw], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"unknown random-effects group {exc}") from None

    def posterior_predict(self, X, Z, term: str = "y_hat", *, propensity=None,
                          rfx_group_ids=None) -> np.ndarray:
        """Per-sample draws of a model term, shape (n, num_samples).

        Terms: "y_hat" (outcome scale), "mu" (prognostic term), "cate"
        (treatment effect; includes the per-group treatment random effect
        when the model used model_spec="intercept_plus_treatment" and
        rfx_group_ids is given), "rfx", "variance".
        """
        self._check_fitted()
        covariates = self.preprocessor_.transform(X)
        n = covariates.num_rows
        z = check_vector(np.asarray(Z), "Z", n=n)
        info = self.standardization_
        group_idx = None
        if rfx_group_ids is not None:
            if self.rfx_samples_ is None:
                raise ValueError("this model has no random-effects term")
            group_idx = self._lookup_groups(rfx_group_ids)

        if term == "variance":
            if self.variance_forest_samples_ is None:
                raise ValueError("this model has no variance forest")
            mult = self.variance_forest_samples_.predict(covariates.values)
            return info.invert_variance(mult * self.sigma2_trace_[None, :])
        if term == "rfx":
            if self.rfx_samples_ is None:
                raise ValueError("this model has no random-effects term")
            if group_idx is None:
                raise ValueError("pass rfx_group_ids to predict the rfx term")
            return self._rfx_draws(group_idx, z, n) * info.scale
        if term == "cate":
            tau = self.tau_forest_samples_.predict(covariates.values,
                                                   np.ones((n, 1)))
            if group_idx is not None and \
                    self.rfx_model_spec_ == "intercept_plus_treatment":
                tau = tau + self.rfx_samples_.beta_samples[1][group_idx, :]
            return tau * info.scale
        if term == "mu":
            pi = self._resolve_propensity(covariates, propensity, n)
            mu_values = covariates.values if pi is None \
                else np.column_stack([covariates.values, pi])
            mu = self.mu_forest_samples_.predict(mu_values)
            return mu * info.scale + info.center
        if term != "y_hat":
            raise ValueError(f"unknown term {term!r}")
        pi = self._resolve_propensity(covariates, propensity, n)
        mu_values = covariates.values if pi is None \
            else np.column_stack([covariates.values, pi])
        mu = self.mu_forest_samples_.predict(mu_values)
        tau = self.tau_forest_samples_.predict(covariates.values,
                                               z.reshape(-1, 1))
        total = mu + tau
        if group_idx is not None:
            total = total + self._rfx_draws(group_idx, z, n)
        if self.probit_outcome_model:
            return ndtr(total)
        return total * info.scale + info.center

    def predict(self, X, Z, *, propensity=None, rfx_group_ids=None):
        """Posterior-mean prediction of the outcome."""
        return self.posterior_predict(
            X, Z, "y_hat", propensity=propensity,
            rfx_group_ids=rfx_group_ids).mean(axis=1)

    def subgroup_ate(self, group) -> np.ndarray:
        """Posterior draws of the average treatment effect within a training
        group: the group's treatment random effect (when present) plus the
        group-mean treatment forest prediction. Shape (num_samples,)."""
        self._check_fitted()
        if self._train_tau_draws is None:
            raise ValueError("subgroup_ate requires the training data; it is "
                             "unavailable on deserialized models")
        if self._train_group_ids is None:
            raise ValueError("this model was fit without rfx_group_ids")
        labels = list(self.rfx_samples_.group_labels)
        if group not in labels:
            raise ValueError(f"unknown group {group!r}")
        j = labels.index(group)
        rows = np.flatnonzero(self._train_group_ids == j)
        out = self._train_tau_draws[rows].mean(axis=0)
        if self.rfx_model_spec_ == "intercept_plus_treatment":
            out = out + self.rfx_samples_.beta_samples[1][j, :]
        return out * self.standardization_.scale

    # -- persistence ----------------------------------------------------------

    def to_json(self) -> str:
        self._check_fitted()
        forests = {
            "mu": ser.forest_samples_to_dict(self.mu_forest_samples_),
            "tau": ser.forest_samples_to_dict(self.tau_forest_samples_),
        }
        if self.variance_forest_samples_ is not None:
            forests["variance"] = ser.forest_samples_to_dict(
                self.variance_forest_samples_)
        if self.propensity_model_samples_ is not None:
            forests["propensity"] = ser.forest_samples_to_dict(
                self.propensity_model_samples_)
        traces = {"sigma2": [float(v) for v in self.sigma2_trace_]}
        if self.mu_leaf_scale_trace_.size:
            traces["leaf_scale_mu"] = [float(v)
                                       for v in self.mu_leaf_scale_trace_]
        if self.tau_leaf_scale_trace_.size:
            traces["leaf_scale_tau"] = [float(v)
                                        for v in self.tau_leaf_scale_trace_]
        rfx = None
        if self.rfx_samples_ is not None:
            rfx = ser.rfx_to_dict(self.rfx_samples_, self.rfx_prior_)
        doc = {
            "schema_version": ser.SCHEMA_VERSION,
            "model_kind": "bcf",
            "forests": forests,
            "traces": traces,
            "rfx": rfx,
            "standardization": {"center": self.standardization_.center,
                                "scale": self.standardization_.scale},
            "preprocessing": self.preprocessor_.to_dict(),
            "params": self._params_doc(),
        }
        return ser.dumps_canonical(doc)

    def _params_doc(self) -> dict:
        from .bart import _dataclass_or_none
        return {
            "num_gfr": self.num_gfr, "num_burnin": self.num_burnin,
            "num_mcmc": self.num_mcmc,
            "mu_forest": _dataclass_or_none(self.mu_forest
                                            or _default_mu_config()),
            "tau_forest": _dataclass_or_none(self.tau_forest
                                             or _default_tau_config()),
            "variance_forest": _dataclass_or_none(self.variance_forest),
            "random_effects": _dataclass_or_none(self.random_effects),
            "propensity_covariate": self.propensity_covariate,
            "sigma2_init": self.sigma2_init,
            "a_global": self.a_global, "b_global": self.b_global,
            "sample_sigma2_global": self.sample_sigma2_global,
            "probit_outcome_model": self.probit_outcome_model,
            "cutpoint_grid_size": self.cutpoint_grid_size,
            "standardize": self.standardize,
            "ordered_features": list(self.ordered_features)
            if self.ordered_features else None,
            "unordered_features": list(self.unordered_features)
            if self.unordered_features else None,
            "z_binary": self.z_binary_,
            "uses_propensity": self.uses_propensity_,
            "rfx_model_spec": self.rfx_model_spec_,
        }

    @classmethod
    def from_json(cls, text: str) -> "BCFRegressor":
        doc = ser.parse_artifact(text)
        if doc["model_kind"] != "bcf":
            raise ser.SerializationError(
                f"expected a bcf artifact, got {doc['model_kind']!r}")
        params = doc["params"]
        model = cls(**_params_from_doc(params))
        model.preprocessor_ = CovariatePreprocessor.from_dict(
            doc["preprocessing"])
        std = doc["standardization"]
        model.standardization_ = StandardizationInfo(float(std["center"]),
                                                     float(std["scale"]))
        model.mu_forest_samples_ = ser.forest_samples_from_dict(
            doc["forests"]["mu"])
        model.tau_forest_samples_ = ser.forest_samples_from_dict(
            doc["forests"]["tau"])
        model.variance_forest_samples_ = None
        if "variance" in doc["forests"]:
            model.variance_forest_samples_ = ser.forest_samples_from_dict(
                doc["forests"]["variance"])
        model.propensity_model_samples_ = None
        if "propensity" in doc["forests"]:
            model.propensity_model_samples_ = ser.forest_samples_from_dict(
                doc["forests"]["propensity"])
        model.rfx_samples_ = None
        model.rfx_prior_ = None
        if doc.get("rfx"):
            model.rfx_samples_ = ser.rfx_samples_from_dict(doc["rfx"])
            model.rfx_prior_ = dict(doc["rfx"].get("prior", {}))
        traces = doc.get("traces", {})
        model.sigma2_trace_ = np.asarray(traces.get("sigma2", []),
                                         dtype=np.float64)
        model.mu_leaf_scale_trace_ = np.asarray(
            traces.get("leaf_scale_mu", []), dtype=np.float64)
        model.tau_leaf_scale_trace_ = np.asarray(
            traces.get("leaf_scale_tau", []), dtype=np.float64)
        model.num_samples_ = model.mu_forest_samples_.num_samples
        model.z_binary_ = bool(params.get("z_binary", True))
        model.uses_propensity_ = bool(params.get("uses_propensity", False))
        model.rfx_model_spec_ = params.get("rfx_model_spec")
        model._train_tau_draws = None
        model._train_group_ids = None
        return model
