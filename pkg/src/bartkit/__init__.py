"""bartkit: Bayesian additive regression trees and causal forests.

High-level entry points are `BARTRegressor` and `BCFRegressor`. The
lower-level pieces (datasets, forests, leaf models, samplers, random
effects) are exported so that custom Gibbs samplers can be composed from
them; `recipes` contains two worked examples.
"""

from .bart import (BARTRegressor, ForestConfig, RandomEffectsConfig,
                   VarianceForestConfig)
from .bcf import BCFRegressor
from .data import (NUMERIC, ORDERED_CATEGORICAL, UNORDERED_CATEGORICAL,
                   CovariateMatrix, CovariatePreprocessor, ForestDataset,
                   Outcome, StandardizationInfo, load_csv, standardize_outcome)
from .errors import (BartkitError, EmptyInputError, ParseError, SchemaError,
                     SerializationError)
from .leaf_models import (GAUSSIAN_CONSTANT, GAUSSIAN_MULTIVARIATE_REGRESSION,
                          GAUSSIAN_UNIVARIATE_REGRESSION, LOG_LINEAR_VARIANCE,
                          GaussianConstantLeaf,
                          GaussianMultivariateRegressionLeaf,
                          GaussianUnivariateRegressionLeaf,
                          LogLinearVarianceLeaf, make_leaf_model,
                          sample_leaf_scale)
from .random_effects import (RandomEffectsDataset, RandomEffectsModel,
                             RandomEffectsSamples, intercept_basis,
                             intercept_plus_treatment_basis)
from .recipes import recipe_additive_linear, recipe_robust_errors
from .sampler import (ForestModelConfig, ForestSampler, GlobalModelConfig,
                      sample_global_error_variance,
                      sample_truncated_normal_latents, spawn_generators)
from .serialization import (SCHEMA_VERSION, dumps_canonical, parse_artifact,
                            warm_start_state)
from .simulate import (dgp_causal_friedman, dgp_friedman, dgp_linear_term,
                       dgp_robust, friedman_function)
from .tree import DecisionTree, Forest, ForestSamples, tree_log_prior

__version__ = "0.1.0"

__all__ = [
    "BARTRegressor", "BCFRegressor", "ForestConfig", "VarianceForestConfig",
    "RandomEffectsConfig",
    "BartkitError", "SchemaError", "ParseError", "EmptyInputError",
    "SerializationError",
    "NUMERIC", "ORDERED_CATEGORICAL", "UNORDERED_CATEGORICAL",
    "CovariateMatrix", "CovariatePreprocessor", "ForestDataset", "Outcome",
    "StandardizationInfo", "standardize_outcome", "load_csv",
    "DecisionTree", "Forest", "ForestSamples", "tree_log_prior",
    "GAUSSIAN_CONSTANT", "GAUSSIAN_UNIVARIATE_REGRESSION",
    "GAUSSIAN_MULTIVARIATE_REGRESSION", "LOG_LINEAR_VARIANCE",
    "GaussianConstantLeaf", "GaussianUnivariateRegressionLeaf",
    "GaussianMultivariateRegressionLeaf", "LogLinearVarianceLeaf",
    "make_leaf_model", "sample_leaf_scale",
    "ForestModelConfig", "ForestSampler", "GlobalModelConfig",
    "sample_global_error_variance", "sample_truncated_normal_latents",
    "spawn_generators",
    "RandomEffectsDataset", "RandomEffectsModel", "RandomEffectsSamples",
    "intercept_basis", "intercept_plus_treatment_basis",
    "SCHEMA_VERSION", "dumps_canonical", "parse_artifact", "warm_start_state",
    "dgp_friedman", "dgp_causal_friedman", "dgp_robust", "dgp_linear_term",
    "friedman_function",
    "recipe_additive_linear", "recipe_robust_errors",
    "__version__",
]
