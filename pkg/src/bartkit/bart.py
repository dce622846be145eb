"""BART regression estimator with a scikit-learn style fit/predict surface.

The model is y = f(x) + e with f an additive forest of shallow trees. Options
layer in: leaf regression on a user basis, a multiplicative variance forest,
one-way random effects, a probit link for binary outcomes, and warm starts
from a serialized model.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import digamma, ndtr
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import serialization as ser
from .data import (CovariatePreprocessor, ForestDataset, Outcome,
                   StandardizationInfo, standardize_outcome)
from .leaf_models import (GAUSSIAN_CONSTANT, GAUSSIAN_MULTIVARIATE_REGRESSION,
                          GAUSSIAN_UNIVARIATE_REGRESSION, LOG_LINEAR_VARIANCE,
                          make_leaf_model, sample_leaf_scale)
from .random_effects import (RandomEffectsDataset, RandomEffectsModel,
                             RandomEffectsSamples, intercept_basis)
from .sampler import (ForestModelConfig, ForestSampler, GlobalModelConfig,
                      sample_global_error_variance,
                      sample_truncated_normal_latents)
from .tree import Forest, ForestSamples
from .validation import check_matrix, check_vector, resolve_column_indices


@dataclass(frozen=True)
class ForestConfig:
    """Settings for a mean forest (structure prior and leaf scale)."""

    num_trees: int = 200
    alpha: float = 0.95
    beta: float = 2.0
    min_samples_leaf: int = 5
    max_depth: Optional[int] = None
    keep_vars: Optional[tuple] = None
    drop_vars: Optional[tuple] = None
    leaf_scale_init: Optional[float] = None   # default: var(y_std) / num_trees
    sample_leaf_scale: Optional[bool] = None  # default: True for scalar leaves
    a_leaf: float = 3.0
    b_leaf: Optional[float] = None            # default: leaf_scale_init * (a_leaf - 1)


@dataclass(frozen=True)
class VarianceForestConfig:
    """Settings for the multiplicative variance forest."""

    num_trees: int = 20
    alpha: float = 0.95
    beta: float = 2.0
    min_samples_leaf: int = 5
    max_depth: Optional[int] = None
    keep_vars: Optional[tuple] = None
    drop_vars: Optional[tuple] = None
    # IG prior on exp(leaf); defaults center the forest's log-variance at 0
    # with prior variance ~1.5^2 regardless of the number of trees.
    a_leaf: Optional[float] = None
    b_leaf: Optional[float] = None


@dataclass(frozen=True)
class RandomEffectsConfig:
    """Settings for the one-way random-effects term."""

    model_spec: str = "intercept_only"  # or "intercept_plus_treatment"
    alpha_prior_var: float = 1.0
    variance_prior_shape: float = 1.0
    variance_prior_scale: float = 1.0


def _variance_leaf_defaults(num_trees: int) -> tuple[float, float]:
    a = num_trees / 2.25 + 0.5
    return a, math.exp(digamma(a))


def _resolve_variable_weights(num_features: int, column_names: list[str],
                              keep_vars, drop_vars,
                              always_keep: Sequence[int] = ()) -> np.ndarray:
    if keep_vars is not None and drop_vars is not None:
        raise ValueError("pass keep_vars or drop_vars, not both")
    weights = np.full(num_features, 1.0 / num_features)
    if keep_vars is not None:
        kept = set(resolve_column_indices(list(keep_vars), column_names,
                                          "keep_vars"))
        kept.update(always_keep)
        mask = np.zeros(num_features, dtype=bool)
        mask[sorted(kept)] = True
        weights = np.where(mask, weights, 0.0)
    elif drop_vars is not None:
        dropped = set(resolve_column_indices(list(drop_vars), column_names,
                                             "drop_vars"))
        dropped -= set(always_keep)
        weights[sorted(dropped)] = 0.0
    if weights.sum() <= 0:
        raise ValueError("variable selection removed every feature")
    return weights / weights.sum()


class BARTRegressor(BaseEstimator, RegressorMixin):
    """Bayesian additive regression trees.

    Sampling runs `num_gfr` grow-from-root iterations followed by
    `num_burnin + num_mcmc` Metropolis-Hastings iterations; the last
    `num_mcmc` draws are retained (the grow-from-root draws themselves when
    `num_mcmc` is 0). `predict` returns the posterior-mean prediction;
    `posterior_predict` exposes per-sample draws of individual model terms.
    """

    def __init__(self, *, num_gfr: int = 10, num_burnin: int = 0,
                 num_mcmc: int = 100,
                 mean_forest: Optional[ForestConfig] = None,
                 variance_forest: Optional[VarianceForestConfig] = None,
                 random_effects: Optional[RandomEffectsConfig] = None,
                 sigma2_init: Optional[float] = None,
                 a_global: float = 1.0, b_global: float = 1.0,
                 sample_sigma2_global: bool = True,
                 probit_outcome_model: bool = False,
                 cutpoint_grid_size: int = 100,
                 standardize: bool = True,
                 ordered_features: Optional[tuple] = None,
                 unordered_features: Optional[tuple] = None,
                 track_conservation: bool = False,
                 random_state=None):
        self.num_gfr = num_gfr
        self.num_burnin = num_burnin
        self.num_mcmc = num_mcmc
        self.mean_forest = mean_forest
        self.variance_forest = variance_forest
        self.random_effects = random_effects
        self.sigma2_init = sigma2_init
        self.a_global = a_global
        self.b_global = b_global
        self.sample_sigma2_global = sample_sigma2_global
        self.probit_outcome_model = probit_outcome_model
        self.cutpoint_grid_size = cutpoint_grid_size
        self.standardize = standardize
        self.ordered_features = ordered_features
        self.unordered_features = unordered_features
        self.track_conservation = track_conservation
        self.random_state = random_state

    # -- fitting --------------------------------------------------------------

    def fit(self, X, y, *, leaf_basis=None, rfx_group_ids=None,
            variance_weights=None, previous_model=None,
            warm_start_sample: Optional[int] = None):
        """Run the sampler. Returns self.

        leaf_basis: optional (n, q) basis; leaves become regression
            coefficients on it (scalar q=1 or vector-valued q>1).
        rfx_group_ids: optional per-row group labels enabling the
            random-intercept term.
        variance_weights: optional per-row multiplicative error variances.
        previous_model / warm_start_sample: JSON text (or parsed dict) of an
            earlier fit and the retained sample index to restart from
            (negative counts from the end). Warm starts skip the
            grow-from-root phase.
        """
        rng = np.random.default_rng(self.random_state)
        mean_cfg = self.mean_forest or ForestConfig()
        var_cfg = self.variance_forest
        if self.num_gfr < 0 or self.num_burnin < 0 or self.num_mcmc < 0:
            raise ValueError("iteration counts must be nonnegative")
        warm = None
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

        # Leaf model for the mean forest.
        basis = None
        if leaf_basis is not None:
            basis = check_matrix(leaf_basis, "leaf_basis", n=n)
        var_y = float(np.var(y_std, ddof=1)) if n > 1 else 1.0
        if self.probit_outcome_model:
            default_scale = 2.25 / mean_cfg.num_trees
        else:
            default_scale = var_y / mean_cfg.num_trees
        leaf_scale = mean_cfg.leaf_scale_init \
            if mean_cfg.leaf_scale_init is not None else default_scale
        if basis is None:
            leaf_model = make_leaf_model(GAUSSIAN_CONSTANT, tau=leaf_scale)
        elif basis.shape[1] == 1:
            leaf_model = make_leaf_model(GAUSSIAN_UNIVARIATE_REGRESSION,
                                         tau=leaf_scale)
        else:
            leaf_model = make_leaf_model(
                GAUSSIAN_MULTIVARIATE_REGRESSION,
                Sigma0=leaf_scale * np.eye(basis.shape[1]))
        scalar_leaf = leaf_model.model_code in (GAUSSIAN_CONSTANT,
                                                GAUSSIAN_UNIVARIATE_REGRESSION)
        do_leaf_scale = mean_cfg.sample_leaf_scale \
            if mean_cfg.sample_leaf_scale is not None else scalar_leaf
        if do_leaf_scale and not scalar_leaf:
            raise ValueError("leaf scale sampling requires a scalar leaf model")
        b_leaf = mean_cfg.b_leaf if mean_cfg.b_leaf is not None \
            else leaf_scale * (mean_cfg.a_leaf - 1.0)

        weights = _resolve_variable_weights(
            covariates.num_features, covariates.column_names,
            mean_cfg.keep_vars, mean_cfg.drop_vars)
        mean_dataset = ForestDataset(covariates, basis, user_weights)
        mean_config = ForestModelConfig(
            mean_cfg.num_trees, leaf_model, covariates.num_features,
            alpha=mean_cfg.alpha, beta=mean_cfg.beta,
            min_samples_leaf=mean_cfg.min_samples_leaf,
            max_depth=mean_cfg.max_depth,
            cutpoint_grid_size=self.cutpoint_grid_size,
            variable_weights=weights)
        mean_sampler = ForestSampler(mean_dataset, mean_config)

        # Variance forest (multiplicative, log-linear leaves).
        var_sampler = None
        var_forest = None
        var_model = None
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

        # Random effects.
        rfx_cfg = self.random_effects or RandomEffectsConfig()
        rfx_dataset = None
        rfx_model = None
        if rfx_group_ids is not None:
            if rfx_cfg.model_spec != "intercept_only":
                raise ValueError("BARTRegressor supports model_spec="
                                 "'intercept_only' random effects")
            rfx_dataset = RandomEffectsDataset(rfx_group_ids, intercept_basis(n))
            rfx_model = RandomEffectsModel(
                rfx_dataset.num_components, rfx_dataset.num_groups,
                alpha_prior_var=rfx_cfg.alpha_prior_var,
                variance_prior_shape=rfx_cfg.variance_prior_shape,
                variance_prior_scale=rfx_cfg.variance_prior_scale)

        # Global variance and initial state.
        if self.probit_outcome_model:
            sigma2 = 1.0
            do_sigma2 = False
        else:
            sigma2 = self.sigma2_init if self.sigma2_init is not None else var_y
            do_sigma2 = self.sample_sigma2_global
        global_config = GlobalModelConfig(sigma2)

        outcome = Outcome(y_std)
        forest = Forest(mean_cfg.num_trees, leaf_model.leaf_dimension,
                        leaf_model.requires_basis, False)
        num_gfr = self.num_gfr
        if warm is not None:
            if "mean" not in warm["forests"]:
                raise ValueError("previous model has no mean forest to resume")
            forest = warm["forests"]["mean"]
            if forest.num_trees != mean_cfg.num_trees or \
                    forest.leaf_dimension != leaf_model.leaf_dimension:
                raise ValueError("previous model's mean forest shape does not "
                                 "match this configuration")
            if "sigma2" in warm:
                global_config.update_global_error_variance(warm["sigma2"])
            if "leaf_scale" in warm and scalar_leaf:
                leaf_model.update_scale(warm["leaf_scale"])
            num_gfr = 0
            mean_sampler.prepare_for_sampler(forest, outcome, None)
        else:
            mean_sampler.prepare_for_sampler(forest, outcome,
                                             float(np.mean(y_std)))
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

        # Sample containers.
        mean_samples = ForestSamples(mean_cfg.num_trees,
                                     leaf_model.leaf_dimension,
                                     leaf_model.requires_basis, False)
        var_samples = ForestSamples(var_cfg.num_trees, 1, False, True) \
            if var_cfg is not None else None
        rfx_samples = RandomEffectsSamples(
            rfx_dataset.num_components, rfx_dataset.num_groups,
            rfx_dataset.group_labels) if rfx_dataset is not None else None
        sigma2_trace = []
        leaf_scale_trace = []
        conservation = []

        num_burnin = self.num_burnin
        total = num_gfr + num_burnin + self.num_mcmc
        if total == 0:
            raise ValueError("num_gfr + num_burnin + num_mcmc must be positive")
        retain_from = num_gfr + num_burnin if self.num_mcmc > 0 else 0
        retain_gfr_only = self.num_mcmc == 0

        for it in range(total):
            is_gfr = it < num_gfr
            if self.probit_outcome_model:
                fitted = latent - outcome.residual
                new_latent = sample_truncated_normal_latents(fitted, y_bin, rng)
                outcome.add_vector(new_latent - latent)
                latent = new_latent
            mean_sampler.sample_one_iteration(forest, outcome, rng,
                                              global_config, gfr=is_gfr)
            if var_sampler is not None:
                var_sampler.sample_one_iteration(var_forest, outcome, rng,
                                                 global_config, gfr=is_gfr)
                mult = np.exp(var_sampler.log_variance_total)
                base = user_weights if user_weights is not None else 1.0
                mean_dataset.update_variance_weights(base * mult)
            if rfx_model is not None:
                outcome.add_vector(rfx_model.predict(rfx_dataset))
                rfx_model.sample_one_iteration(
                    rfx_dataset, outcome, rng, global_config.sigma2,
                    mean_dataset.variance_weights)
                outcome.subtract_vector(rfx_model.predict(rfx_dataset))
            if do_sigma2:
                global_config.update_global_error_variance(
                    sample_global_error_variance(outcome, mean_dataset, rng,
                                                 self.a_global, self.b_global))
            if do_leaf_scale:
                leaf_model.update_scale(sample_leaf_scale(
                    forest.leaf_value_vector(), mean_cfg.a_leaf, b_leaf, rng))

            retained = (it >= retain_from) if not retain_gfr_only else is_gfr
            if retained:
                mean_samples.add_sample(forest)
                if var_samples is not None:
                    var_samples.add_sample(var_forest)
                if rfx_samples is not None:
                    rfx_samples.add_sample(rfx_model)
                sigma2_trace.append(global_config.sigma2)
                if do_leaf_scale:
                    leaf_scale_trace.append(leaf_model.tau)
            if self.track_conservation:
                target = latent if self.probit_outcome_model else y_std
                total_pred = mean_sampler.forest_prediction(forest)
                if rfx_model is not None:
                    total_pred = total_pred + rfx_model.predict(rfx_dataset)
                conservation.append(float(np.max(np.abs(
                    outcome.residual + total_pred - target))))

        self.mean_forest_samples_ = mean_samples
        self.variance_forest_samples_ = var_samples
        self.rfx_samples_ = rfx_samples
        self.sigma2_trace_ = np.asarray(sigma2_trace)
        self.leaf_scale_trace_ = np.asarray(leaf_scale_trace)
        self.conservation_trace_ = np.asarray(conservation)
        self.num_samples_ = mean_samples.num_samples
        self.leaf_model_code_ = leaf_model.model_code
        self.basis_dimension_ = 0 if basis is None else basis.shape[1]
        self.rfx_prior_ = None if rfx_model is None else {
            "alpha_prior_var": rfx_cfg.alpha_prior_var,
            "variance_prior_shape": rfx_cfg.variance_prior_shape,
            "variance_prior_scale": rfx_cfg.variance_prior_scale}
        self.sampler_counters_ = dict(mean_sampler.counters)
        return self

    # -- prediction -----------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "mean_forest_samples_"):
            raise NotFittedError("this BARTRegressor is not fitted yet")

    def _encode_predict_inputs(self, X, leaf_basis, rfx_group_ids):
        covariates = self.preprocessor_.transform(X)
        basis = None
        if self.basis_dimension_:
            if leaf_basis is None:
                raise ValueError("this model was fit with a leaf basis; pass "
                                 "leaf_basis to predict")
            basis = check_matrix(leaf_basis, "leaf_basis", n=covariates.num_rows)
            if basis.shape[1] != self.basis_dimension_:
                raise ValueError(f"leaf_basis has {basis.shape[1]} columns, "
                                 f"expected {self.basis_dimension_}")
        group_idx = None
        if rfx_group_ids is not None:
            if self.rfx_samples_ is None:
                raise ValueError("this model has no random-effects term")
            lookup = {lab: i for i, lab in
                      enumerate(self.rfx_samples_.group_labels)}
            raw = list(np.asarray(rfx_group_ids).tolist())
            try:
                group_idx = np.asarray([lookup[g] for g in raw], dtype=np.int64)
            except KeyError as exc:
                raise ValueError(f"unknown random-effects group {exc}") from None
        return covariates, basis, group_idx

    def posterior_predict(self, X, term: str = "y_hat", *, leaf_basis=None,
                          rfx_group_ids=None) -> np.ndarray:
        """Per-sample draws of a model term, shape (n, num_samples).

        Terms: "y_hat" (full prediction on the outcome scale; probability
        scale for probit models), "mean_forest" (location term),
        "variance_forest" (conditional error variance on the outcome scale,
        i.e. the forest's multiplier times the sigma2 trace), "rfx".
        """
        self._check_fitted()
        covariates, basis, group_idx = self._encode_predict_inputs(
            X, leaf_basis, rfx_group_ids)
        values = covariates.values
        info = self.standardization_
        if term == "mean_forest":
            f = self.mean_forest_samples_.predict(values, basis)
            return f * info.scale + info.center
        if term == "variance_forest":
            if self.variance_forest_samples_ is None:
                raise ValueError("this model has no variance forest")
            mult = self.variance_forest_samples_.predict(values)
            return info.invert_variance(mult * self.sigma2_trace_[None, :])
        if term == "rfx":
            if self.rfx_samples_ is None:
                raise ValueError("this model has no random-effects term")
            if group_idx is None:
                raise ValueError("pass rfx_group_ids to predict the rfx term")
            rfx = self.rfx_samples_.predict(group_idx, intercept_basis(
                values.shape[0]))
            return rfx * info.scale
        if term != "y_hat":
            raise ValueError(f"unknown term {term!r}")
        f = self.mean_forest_samples_.predict(values, basis)
        if group_idx is not None:
            f = f + self.rfx_samples_.predict(group_idx,
                                              intercept_basis(values.shape[0]))
        if self.probit_outcome_model:
            return ndtr(f)
        return f * info.scale + info.center

    def predict(self, X, *, leaf_basis=None, rfx_group_ids=None) -> np.ndarray:
        """Posterior-mean prediction on the outcome scale."""
        return self.posterior_predict(X, "y_hat", leaf_basis=leaf_basis,
                                      rfx_group_ids=rfx_group_ids).mean(axis=1)

    def compute_contrast(self, X0, X1, *, basis0=None, basis1=None,
                         scale: str = "linear") -> np.ndarray:
        """Per-sample prediction difference between two covariate/basis pairs.

        scale="linear" differences the location term directly (bypassing the
        probit link); scale="probability" differences probit probabilities.
        """
        self._check_fitted()
        if scale not in ("linear", "probability"):
            raise ValueError("scale must be 'linear' or 'probability'")
        cov0, b0, _ = self._encode_predict_inputs(X0, basis0, None)
        cov1, b1, _ = self._encode_predict_inputs(X1, basis1, None)
        if cov0.num_rows != cov1.num_rows:
            raise ValueError("X0 and X1 must have the same number of rows")
        f0 = self.mean_forest_samples_.predict(cov0.values, b0)
        f1 = self.mean_forest_samples_.predict(cov1.values, b1)
        if self.probit_outcome_model:
            if scale == "probability":
                return ndtr(f1) - ndtr(f0)
            return f1 - f0
        return (f1 - f0) * self.standardization_.scale

    # -- persistence ----------------------------------------------------------

    def to_json(self) -> str:
        self._check_fitted()
        forests = {"mean": ser.forest_samples_to_dict(self.mean_forest_samples_)}
        if self.variance_forest_samples_ is not None:
            forests["variance"] = ser.forest_samples_to_dict(
                self.variance_forest_samples_)
        traces = {"sigma2": [float(v) for v in self.sigma2_trace_]}
        if self.leaf_scale_trace_.size:
            traces["leaf_scale"] = [float(v) for v in self.leaf_scale_trace_]
        rfx = None
        if self.rfx_samples_ is not None:
            rfx = ser.rfx_to_dict(self.rfx_samples_, self.rfx_prior_)
        doc = {
            "schema_version": ser.SCHEMA_VERSION,
            "model_kind": "bart",
            "forests": forests,
            "traces": traces,
            "rfx": rfx,
            "standardization": {"center": self.standardization_.center,
                                "scale": self.standardization_.scale},
            "preprocessing": self.preprocessor_.to_dict(),
            "params": _params_doc(self),
        }
        return ser.dumps_canonical(doc)

    @classmethod
    def from_json(cls, text: str) -> "BARTRegressor":
        doc = ser.parse_artifact(text)
        if doc["model_kind"] != "bart":
            raise ser.SerializationError(
                f"expected a bart artifact, got {doc['model_kind']!r}")
        params = doc["params"]
        model = cls(**_params_from_doc(params))
        model.preprocessor_ = CovariatePreprocessor.from_dict(
            doc["preprocessing"])
        std = doc["standardization"]
        model.standardization_ = StandardizationInfo(float(std["center"]),
                                                     float(std["scale"]))
        model.mean_forest_samples_ = ser.forest_samples_from_dict(
            doc["forests"]["mean"])
        model.variance_forest_samples_ = None
        if "variance" in doc["forests"]:
            model.variance_forest_samples_ = ser.forest_samples_from_dict(
                doc["forests"]["variance"])
        model.rfx_samples_ = None
        model.rfx_prior_ = None
        if doc.get("rfx"):
            model.rfx_samples_ = ser.rfx_samples_from_dict(doc["rfx"])
            model.rfx_prior_ = dict(doc["rfx"].get("prior", {}))
        traces = doc.get("traces", {})
        model.sigma2_trace_ = np.asarray(traces.get("sigma2", []),
                                         dtype=np.float64)
        model.leaf_scale_trace_ = np.asarray(traces.get("leaf_scale", []),
                                             dtype=np.float64)
        model.conservation_trace_ = np.asarray([])
        model.num_samples_ = model.mean_forest_samples_.num_samples
        model.leaf_model_code_ = int(params.get("leaf_model_code", 0))
        model.basis_dimension_ = int(params.get("basis_dimension", 0))
        model.sampler_counters_ = {}
        return model


def _dataclass_or_none(value):
    return None if value is None else asdict(value)


def _params_doc(est: BARTRegressor) -> dict:
    params = {
        "num_gfr": est.num_gfr, "num_burnin": est.num_burnin,
        "num_mcmc": est.num_mcmc,
        "mean_forest": _dataclass_or_none(est.mean_forest or ForestConfig()),
        "variance_forest": _dataclass_or_none(est.variance_forest),
        "random_effects": _dataclass_or_none(est.random_effects),
        "sigma2_init": est.sigma2_init,
        "a_global": est.a_global, "b_global": est.b_global,
        "sample_sigma2_global": est.sample_sigma2_global,
        "probit_outcome_model": est.probit_outcome_model,
        "cutpoint_grid_size": est.cutpoint_grid_size,
        "standardize": est.standardize,
        "ordered_features": list(est.ordered_features)
        if est.ordered_features else None,
        "unordered_features": list(est.unordered_features)
        if est.unordered_features else None,
        "leaf_model_code": est.leaf_model_code_,
        "basis_dimension": est.basis_dimension_,
    }
    return params


def _params_from_doc(params: dict) -> dict:
    def cfg(cls, value):
        if value is None:
            return None
        clean = dict(value)
        for key in ("keep_vars", "drop_vars"):
            if clean.get(key) is not None:
                clean[key] = tuple(clean[key])
        return cls(**clean)

    out = {
        "num_gfr": int(params["num_gfr"]),
        "num_burnin": int(params["num_burnin"]),
        "num_mcmc": int(params["num_mcmc"]),
        "mean_forest": cfg(ForestConfig, params.get("mean_forest")),
        "variance_forest": cfg(VarianceForestConfig,
                               params.get("variance_forest")),
        "random_effects": cfg(RandomEffectsConfig,
                              params.get("random_effects")),
        "sigma2_init": params.get("sigma2_init"),
        "a_global": float(params["a_global"]),
        "b_global": float(params["b_global"]),
        "sample_sigma2_global": bool(params["sample_sigma2_global"]),
        "probit_outcome_model": bool(params["probit_outcome_model"]),
        "cutpoint_grid_size": int(params["cutpoint_grid_size"]),
        "standardize": bool(params.get("standardize", True)),
    }
    if params.get("ordered_features"):
        out["ordered_features"] = tuple(params["ordered_features"])
    if params.get("unordered_features"):
        out["unordered_features"] = tuple(params["unordered_features"])
    return out
