"""Forest samplers: Metropolis-Hastings backfitting and grow-from-root moves,
the per-iteration Gibbs protocol, and the global error variance draw.

The sampler operates on an Outcome holding the running residual. For mean
forests each tree's prediction is added back to the residual, the tree is
re-sampled, new leaf parameters are drawn, and the new prediction is
subtracted, so the residual always excludes every model term. Variance forests
act multiplicatively on the error variance and never touch the residual; the
sampler instead tracks the forest's summed log-variance contribution.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from .data import (ORDERED_CATEGORICAL, UNORDERED_CATEGORICAL,
                   ForestDataset, Outcome)
from .leaf_models import LOG_LINEAR_VARIANCE
from .tree import (CATEGORY_SUBSET, DecisionTree, Forest, ForestSamples,
                   evaluate_split, split_kind_for_feature)
from .validation import check_positive_scalar, check_probability_simplex


class GlobalModelConfig:
    """Carries the global error variance sigma2 across sampler calls."""

    def __init__(self, sigma2: float = 1.0):
        self.update_global_error_variance(sigma2)

    def update_global_error_variance(self, value: float) -> None:
        self.sigma2 = check_positive_scalar(value, "sigma2")


class ForestModelConfig:
    """Structural prior and proposal settings for one forest."""

    def __init__(self, num_trees: int, leaf_model, num_features: int,
                 alpha: float = 0.95, beta: float = 2.0,
                 min_samples_leaf: int = 5, max_depth: Optional[int] = None,
                 cutpoint_grid_size: int = 100,
                 variable_weights: Optional[np.ndarray] = None):
        if num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        if beta < 0.0:
            raise ValueError(f"beta must be nonnegative, got {beta}")
        if min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if max_depth is not None and max_depth < 0:
            raise ValueError("max_depth must be nonnegative or None")
        if cutpoint_grid_size < 1:
            raise ValueError("cutpoint_grid_size must be >= 1")
        self.num_trees = int(num_trees)
        self.leaf_model = leaf_model
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.min_samples_leaf = int(min_samples_leaf)
        self.max_depth = None if max_depth is None else int(max_depth)
        self.cutpoint_grid_size = int(cutpoint_grid_size)
        if variable_weights is None:
            variable_weights = np.full(num_features, 1.0 / num_features)
        self.variable_weights = check_probability_simplex(
            variable_weights, "variable_weights", num_features)

    def split_probability(self, depth: int) -> float:
        return self.alpha / (1.0 + depth) ** self.beta


def sample_global_error_variance(outcome: Outcome, dataset: ForestDataset,
                                 rng: np.random.Generator,
                                 a: float = 1.0, b: float = 1.0) -> float:
    """Draw sigma2 from IG(a + n/2, b + sum(r^2 / v) / 2).

    Variance weights act as relative variances, so each squared residual is
    divided by its weight. With an empty residual this reduces to the prior.
    """
    r = outcome.residual
    w = dataset.precision_weights()
    shape = a + 0.5 * r.shape[0]
    scale = b + 0.5 * float(np.dot(w * r, r))
    return scale / rng.gamma(shape)


def sample_truncated_normal_latents(mean: np.ndarray, y: np.ndarray,
                                    rng: np.random.Generator) -> np.ndarray:
    """Draw z_i ~ N(mean_i, 1) truncated to (0, inf) if y_i = 1, (-inf, 0] else.

    Inverse-CDF sampling carried out in log space so the draws stay finite
    even when the truncated tail's probability underflows a double.
    """
    mean = np.asarray(mean, dtype=np.float64)
    yv = np.asarray(y)
    u = 1.0 - rng.uniform(size=mean.shape[0])  # in (0, 1]
    log_u = np.log(u)
    out = np.empty_like(mean)
    pos = yv == 1
    # Positive outcomes: eps > -mean, solve survival(eps) = u * survival(-mean).
    out[pos] = mean[pos] - ndtri_exp(log_u[pos] + log_ndtr(mean[pos]))
    # Zero outcomes: eps <= -mean, solve cdf(eps) = u * cdf(-mean).
    neg = ~pos
    out[neg] = mean[neg] + ndtri_exp(log_u[neg] + log_ndtr(-mean[neg]))
    return out


def spawn_generators(seed, count: int) -> list[np.random.Generator]:
    """Independent generators with deterministically derived streams."""
    seq = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child))
            for child in seq.spawn(count)]


class ForestSampler:
    """Samples one forest conditional on everything else.

    Bound to a ForestDataset and a ForestModelConfig at construction; the
    per-iteration protocol takes the Forest, Outcome, RNG, and global config.
    """

    def __init__(self, dataset: ForestDataset, config: ForestModelConfig):
        self.dataset = dataset
        self.config = config
        values = dataset.covariates.values
        if config.variable_weights.shape[0] != values.shape[1]:
            raise ValueError("variable_weights length must match feature count")
        self._values = values
        self._feature_types = dataset.covariates.feature_types
        self._sort_idx = np.argsort(values, axis=0, kind="stable")
        eligible = config.variable_weights > 0.0
        self._scan_features = np.flatnonzero(
            eligible & (self._feature_types != UNORDERED_CATEGORICAL))
        self._subset_features = np.flatnonzero(
            eligible & (self._feature_types == UNORDERED_CATEGORICAL))
        # Row ids and values ordered per scanned feature, as (k, n) matrices;
        # the grow-from-root pass partitions these down the tree so each node
        # scan touches only its own rows.
        self._presorted = np.ascontiguousarray(
            self._sort_idx[:, self._scan_features].T)
        self._prevalues = np.ascontiguousarray(
            values[self._presorted, self._scan_features[:, None]]) \
            if self._scan_features.shape[0] else np.empty((0, values.shape[0]))
        self._scan_log_weights = np.log(
            config.variable_weights[self._scan_features]) \
            if self._scan_features.shape[0] else np.empty(0)
        self._member_buf = np.zeros(values.shape[0], dtype=bool)
        self._grid_cache: dict[int, np.ndarray] = {}
        self.assignments: Optional[list[np.ndarray]] = None
        self.log_variance_total: Optional[np.ndarray] = None
        self.counters = {"grow_proposed": 0, "grow_accepted": 0,
                         "prune_proposed": 0, "prune_accepted": 0}

    # -- lifecycle ------------------------------------------------------------

    @property
    def _is_variance_model(self) -> bool:
        return self.config.leaf_model.model_code == LOG_LINEAR_VARIANCE

    def prepare_for_sampler(self, forest: Forest, outcome: Outcome,
                            leaf_init=None) -> None:
        """Sync sampler state with a forest and fold its prediction into the
        residual.

        With `leaf_init` given, every tree is reset to a root leaf holding
        leaf_init / num_trees so the forest's initial prediction equals
        leaf_init (on the log scale for variance forests). With `leaf_init`
        None the forest is taken as-is (warm start). Mean-model predictions
        are subtracted from the outcome residual; variance forests leave the
        residual alone and start the running log-variance total instead.
        """
        if leaf_init is not None:
            vec = np.asarray(leaf_init, dtype=np.float64).reshape(
                forest.leaf_dimension)
            forest.set_root_values(vec / forest.num_trees)
        self.assignments = [tree.leaf_assignment(self._values)
                            for tree in forest.trees]
        if self._is_variance_model:
            self.log_variance_total = forest.predict_components(self._values)
        else:
            basis = self.dataset.basis
            total = np.zeros(self.dataset.num_rows)
            for tree, assign in zip(forest.trees, self.assignments):
                total += self._tree_prediction(tree, assign, basis)
            outcome.subtract_vector(total)

    def forest_prediction(self, forest: Forest) -> np.ndarray:
        """Current forest prediction using cached row assignments."""
        if self.assignments is None:
            raise ValueError("call prepare_for_sampler first")
        if self._is_variance_model:
            return np.exp(self.log_variance_total)
        basis = self.dataset.basis
        total = np.zeros(self.dataset.num_rows)
        for tree, assign in zip(forest.trees, self.assignments):
            total += self._tree_prediction(tree, assign, basis)
        return total

    def _tree_prediction(self, tree: DecisionTree, assign: np.ndarray,
                         basis: Optional[np.ndarray]) -> np.ndarray:
        leaf_vals = tree.leaf_value_matrix()[assign]
        if self.config.leaf_model.requires_basis:
            return np.einsum("ij,ij->i", leaf_vals, basis)
        return leaf_vals[:, 0]

    # -- one Gibbs iteration over the forest ---------------------------------

    def sample_one_iteration(self, forest: Forest, outcome: Outcome,
                             rng: np.random.Generator,
                             global_config: GlobalModelConfig, *,
                             gfr: bool = False,
                             forest_samples: Optional[ForestSamples] = None,
                             keep_forest: bool = False) -> None:
        if self.assignments is None:
            raise ValueError("call prepare_for_sampler first")
        if self._is_variance_model:
            self._iterate_variance_forest(forest, outcome, rng, global_config, gfr)
        else:
            self._iterate_mean_forest(forest, outcome, rng, global_config, gfr)
        if keep_forest:
            if forest_samples is None:
                raise ValueError("keep_forest requires a ForestSamples container")
            forest_samples.add_sample(forest)

    def _iterate_mean_forest(self, forest, outcome, rng, global_config, gfr):
        sigma2 = global_config.sigma2
        precision = self.dataset.precision_weights()
        basis = self.dataset.basis
        model = self.config.leaf_model
        if model.requires_basis and basis is None:
            raise ValueError("this leaf model requires a dataset basis")
        for t, tree in enumerate(forest.trees):
            assign = self.assignments[t]
            outcome.add_vector(self._tree_prediction(tree, assign, basis))
            residual = outcome.residual
            row_stats = model.row_stats(residual, precision, basis)
            if gfr:
                self._gfr_regrow(tree, assign, row_stats, sigma2, rng)
            else:
                self._mh_move(tree, assign, row_stats, sigma2, rng)
            self._draw_leaf_values(tree, assign, row_stats, sigma2, rng)
            outcome.subtract_vector(self._tree_prediction(tree, assign, basis))

    def _iterate_variance_forest(self, forest, outcome, rng, global_config, gfr):
        sigma2 = global_config.sigma2
        base_weights = (np.ones(self.dataset.num_rows)
                        if self.dataset.variance_weights is None
                        else self.dataset.variance_weights)
        residual = outcome.residual
        model = self.config.leaf_model
        for t, tree in enumerate(forest.trees):
            assign = self.assignments[t]
            lam_old = tree.leaf_value_matrix()[assign, 0]
            h_other = self.log_variance_total - lam_old
            precision = 1.0 / (sigma2 * base_weights * np.exp(h_other))
            row_stats = model.row_stats(residual, precision)
            if gfr:
                self._gfr_regrow(tree, assign, row_stats, 1.0, rng)
            else:
                self._mh_move(tree, assign, row_stats, 1.0, rng)
            self._draw_leaf_values(tree, assign, row_stats, 1.0, rng)
            lam_new = tree.leaf_value_matrix()[assign, 0]
            self.log_variance_total = h_other + lam_new

    # -- leaf parameter draws -------------------------------------------------

    def _draw_leaf_values(self, tree, assign, row_stats, sigma2, rng):
        model = self.config.leaf_model
        leaves = tree.leaves()
        slot_of = np.full(len(tree.kind), -1, dtype=np.int64)
        slot_of[leaves] = np.arange(len(leaves))
        slots = slot_of[assign]
        if isinstance(row_stats, tuple):
            d = model.leaf_dimension
            G = np.zeros((len(leaves), d, d))
            h = np.zeros((len(leaves), d))
            np.add.at(G, slots, row_stats[0])
            np.add.at(h, slots, row_stats[1])
            for s_idx, node in enumerate(leaves):
                tree.leaf_values[node] = model.sample_leaf(
                    (G[s_idx], h[s_idx]), sigma2, rng)
        else:
            L = len(leaves)
            s0 = np.bincount(slots, weights=row_stats[:, 0], minlength=L)
            s1 = np.bincount(slots, weights=row_stats[:, 1], minlength=L)
            for s_idx, node in enumerate(leaves):
                tree.leaf_values[node] = model.sample_leaf(
                    np.array([s0[s_idx], s1[s_idx]]), sigma2, rng)

    # -- candidate cutpoints --------------------------------------------------

    def _node_thresholds(self, feature: int, rows: np.ndarray):
        """Candidate thresholds for one feature at one node (MH proposals and
        reverse-move bookkeeping). Returns a float array, possibly empty."""
        vals = np.unique(self._values[rows, feature])
        if vals.shape[0] < 2:
            return np.empty(0)
        if self._feature_types[feature] == ORDERED_CATEGORICAL:
            thresholds = vals[:-1]
        else:
            thresholds = 0.5 * (vals[:-1] + vals[1:])
        grid = self.config.cutpoint_grid_size
        if thresholds.shape[0] > grid:
            keep = np.unique(np.round(
                np.linspace(0, thresholds.shape[0] - 1, grid)).astype(np.int64))
            thresholds = thresholds[keep]
        return thresholds

    def _subset_proposal_count(self, feature: int, rows: np.ndarray) -> int:
        levels = np.unique(self._values[rows, feature].astype(np.int64))
        if levels.shape[0] < 2:
            return 0
        return 2 ** levels.shape[0] - 2

    # -- Metropolis-Hastings grow/prune ---------------------------------------

    def _mh_move(self, tree, assign, row_stats, sigma2, rng):
        root_only = tree.num_leaves == 1
        p_grow = 1.0 if root_only else 0.5
        if rng.uniform() < p_grow:
            self._mh_grow(tree, assign, row_stats, sigma2, rng, p_grow)
        else:
            self._mh_prune(tree, assign, row_stats, sigma2, rng)

    def _node_stats(self, row_stats, rows):
        if isinstance(row_stats, tuple):
            return tuple(part[rows].sum(axis=0) for part in row_stats)
        return row_stats[rows].sum(axis=0)

    def _mh_grow(self, tree, assign, row_stats, sigma2, rng, p_grow_current):
        cfg = self.config
        model = cfg.leaf_model
        self.counters["grow_proposed"] += 1
        leaves = tree.leaves()
        leaf = leaves[rng.integers(len(leaves))]
        depth = tree.depth[leaf]
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            return
        feature = int(rng.choice(cfg.variable_weights.shape[0],
                                 p=cfg.variable_weights))
        rows = np.flatnonzero(assign == leaf)
        if rows.shape[0] < 2 * cfg.min_samples_leaf:
            return

        ftype = self._feature_types[feature]
        if ftype == UNORDERED_CATEGORICAL:
            n_cut = self._subset_proposal_count(feature, rows)
            if n_cut == 0:
                return
            levels = np.unique(self._values[rows, feature].astype(np.int64))
            while True:
                mask_bits = rng.integers(0, 2, size=levels.shape[0]).astype(bool)
                if mask_bits.any() and not mask_bits.all():
                    break
            level_set = frozenset(int(v) for v in levels[mask_bits])
            kind = CATEGORY_SUBSET
            threshold = math.nan
        else:
            thresholds = self._node_thresholds(feature, rows)
            if thresholds.shape[0] == 0:
                return
            n_cut = thresholds.shape[0]
            threshold = float(thresholds[rng.integers(n_cut)])
            level_set = None
            kind = split_kind_for_feature(ftype)

        goes_left = evaluate_split(kind, threshold, level_set,
                                   self._values[rows, feature])
        n_left = int(goes_left.sum())
        n_right = rows.shape[0] - n_left
        if min(n_left, n_right) < cfg.min_samples_leaf:
            return

        stats_node = self._node_stats(row_stats, rows)
        rows_left = rows[goes_left]
        rows_right = rows[~goes_left]
        stats_left = self._node_stats(row_stats, rows_left)
        stats_right = self._node_stats(row_stats, rows_right)
        log_lik_ratio = (model.log_marginal(stats_left, sigma2)
                         + model.log_marginal(stats_right, sigma2)
                         - model.log_marginal(stats_node, sigma2))
        p_d = cfg.split_probability(depth)
        p_d1 = cfg.split_probability(depth + 1)
        log_prior_ratio = (math.log(p_d) + 2.0 * math.log1p(-p_d1)
                           - math.log1p(-p_d))

        # The proposal draws the split rule (feature by weight, cutpoint
        # uniformly) from the same distribution the tree prior assigns to
        # rules, so those factors cancel and only move/node terms remain.
        left_id, right_id = tree.apply_grow(leaf, kind, feature,
                                            threshold, level_set)
        n_prunable_after = len(tree.prune_candidates())
        log_forward = math.log(p_grow_current) - math.log(len(leaves))
        log_reverse = math.log(0.5) - math.log(n_prunable_after)
        log_ratio = log_lik_ratio + log_prior_ratio + log_reverse - log_forward
        if math.log(1.0 - rng.uniform()) < log_ratio:
            self.counters["grow_accepted"] += 1
            assign[rows_left] = left_id
            assign[rows_right] = right_id
        else:
            tree.apply_prune(leaf)

    def _mh_prune(self, tree, assign, row_stats, sigma2, rng):
        cfg = self.config
        model = cfg.leaf_model
        self.counters["prune_proposed"] += 1
        candidates = tree.prune_candidates()
        node = candidates[rng.integers(len(candidates))]
        left_id, right_id = tree.left[node], tree.right[node]
        rows_left = np.flatnonzero(assign == left_id)
        rows_right = np.flatnonzero(assign == right_id)
        rows = np.concatenate([rows_left, rows_right])
        depth = tree.depth[node]

        stats_left = self._node_stats(row_stats, rows_left)
        stats_right = self._node_stats(row_stats, rows_right)
        stats_node = self._node_stats(row_stats, rows)
        log_lik_ratio = (model.log_marginal(stats_node, sigma2)
                         - model.log_marginal(stats_left, sigma2)
                         - model.log_marginal(stats_right, sigma2))
        p_d = cfg.split_probability(depth)
        p_d1 = cfg.split_probability(depth + 1)
        log_prior_ratio = (math.log1p(-p_d) - math.log(p_d)
                           - 2.0 * math.log1p(-p_d1))

        # Rule-selection factors cancel between the reverse grow proposal and
        # the tree prior, exactly as in the grow move.
        num_leaves_after = tree.num_leaves - 1
        p_grow_after = 1.0 if num_leaves_after == 1 else 0.5
        log_forward = math.log(0.5) - math.log(len(candidates))
        log_reverse = math.log(p_grow_after) - math.log(num_leaves_after)
        log_ratio = log_lik_ratio + log_prior_ratio + log_reverse - log_forward
        if math.log(1.0 - rng.uniform()) < log_ratio:
            self.counters["prune_accepted"] += 1
            tree.apply_prune(node)
            assign[rows] = node

    # -- grow-from-root -------------------------------------------------------

    def _gfr_regrow(self, tree, assign, row_stats, sigma2, rng):
        tree.reset_to_root()
        assign[:] = tree.root
        n = self.dataset.num_rows
        all_rows = np.arange(n)
        k = self._scan_features.shape[0]
        scalar_pair = not isinstance(row_stats, tuple)
        if k and scalar_pair:
            # Per-feature presorted payload [value, stat0, stat1], partitioned
            # down the tree so each node scan touches only its own rows.
            comp0 = self._presorted
            payload0 = np.empty((k, n, 3))
            payload0[:, :, 0] = self._prevalues
            payload0[:, :, 1:] = row_stats[comp0]
        else:
            comp0 = payload0 = None
        stack = [(tree.root, all_rows, comp0, payload0)]
        while stack:
            node, rows, comp, payload = stack.pop()
            chosen = self._gfr_sample_split(rows, tree.depth[node], row_stats,
                                            sigma2, rng, payload)
            if chosen is None:
                assign[rows] = node
                continue
            kind, feature, threshold, level_set, goes_left = chosen
            left_id, right_id = tree.apply_grow(node, kind, feature,
                                                threshold, level_set)
            rows_left = rows[goes_left]
            rows_right = rows[~goes_left]
            if comp is not None:
                nl, nr = rows_left.shape[0], rows_right.shape[0]
                lookup = self._member_buf
                lookup[rows_left] = True
                mask = lookup[comp]
                lookup[rows_left] = False
                comp_l = comp[mask].reshape(k, nl)
                payload_l = payload[mask].reshape(k, nl, 3)
                inv = ~mask
                comp_r = comp[inv].reshape(k, nr)
                payload_r = payload[inv].reshape(k, nr, 3)
            else:
                comp_l = payload_l = comp_r = payload_r = None
            stack.append((right_id, rows_right, comp_r, payload_r))
            stack.append((left_id, rows_left, comp_l, payload_l))

    def _gfr_sample_split(self, rows, depth, row_stats, sigma2, rng,
                          payload=None):
        """Sample one option among {no-split} + candidate splits with
        probability proportional to exp(log prior + log marginal likelihood).

        Candidate descriptors are materialized lazily: each scan returns a
        score vector plus a resolver invoked only for the sampled candidate.
        `payload` is the node's per-feature presorted [value, stat0, stat1]
        data when the partitioned fast path is active.
        """
        cfg = self.config
        model = cfg.leaf_model
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            return None
        if rows.shape[0] < 2 * cfg.min_samples_leaf:
            return None
        p_split = cfg.split_probability(depth)
        log_p_split = math.log(p_split)
        stats_node = self._node_stats(row_stats, rows)
        log_no_split = math.log1p(-p_split) + model.log_marginal(stats_node, sigma2)

        # Each split candidate's prior is the full rule probability:
        # p_split x variable weight x uniform over that feature's candidates.
        segments = []  # (scores, resolver)
        if self._scan_features.shape[0] > 0:
            if payload is not None:
                result = self._scan_scalar_pair(payload, sigma2)
            else:
                result = self._scan_tuple(rows, row_stats, sigma2)
            if result is not None:
                segments.append(result)
        for feature in self._subset_features:
            result = self._scan_level_subsets(int(feature), rows, row_stats, sigma2)
            if result is not None:
                segments.append(result)
        if not segments:
            return None

        if len(segments) == 1:
            split_scores = segments[0][0]
        else:
            split_scores = np.concatenate([s for s, _ in segments])
        split_scores += log_p_split
        top = max(float(split_scores.max()), log_no_split)
        weights = np.empty(split_scores.shape[0] + 1)
        weights[0] = math.exp(log_no_split - top)
        np.exp(split_scores - top, out=weights[1:])
        cum = np.cumsum(weights)
        choice = int(np.searchsorted(cum, rng.random() * cum[-1], "right"))
        if choice >= weights.shape[0]:
            choice = weights.shape[0] - 1
        if choice == 0:
            return None
        choice -= 1
        for scores, resolver in segments:
            if choice < scores.shape[0]:
                kind, feature, threshold, level_set = resolver(choice)
                break
            choice -= scores.shape[0]
        goes_left = evaluate_split(kind, threshold, level_set,
                                   self._values[rows, feature])
        return kind, feature, threshold, level_set, goes_left

    def _grid_keep(self, count: int) -> np.ndarray:
        """Indices of an evenly spaced subset of `count` positions. Strictly
        increasing because the stride exceeds 1 whenever thinning applies."""
        keep = self._grid_cache.get(count)
        if keep is None:
            keep = np.round(np.linspace(
                0, count - 1, self.config.cutpoint_grid_size)).astype(np.int64)
            self._grid_cache[count] = keep
        return keep

    def _position_filter(self, vals, n_node):
        """Eligible split positions: distinct-value boundaries satisfying
        min_samples_leaf, thinned to the cutpoint grid per feature. Returns
        the (k, n_node-1) eligibility mask and per-feature candidate counts."""
        msl = self.config.min_samples_leaf
        eligible = vals[:, :-1] < vals[:, 1:]
        if msl > 1:
            # counts_left at boundary position p is p + 1, so the feasible
            # band is a contiguous slice of positions.
            eligible[:, :msl - 1] = False
            eligible[:, n_node - msl:] = False
        grid = self.config.cutpoint_grid_size
        n_bound = eligible.sum(axis=1)
        for k in np.flatnonzero(n_bound > grid):
            positions = np.flatnonzero(eligible[k])
            keep = positions[self._grid_keep(positions.shape[0])]
            eligible[k] = False
            eligible[k, keep] = True
        return eligible, np.minimum(n_bound, grid)

    def _scan_scalar_pair(self, payload, sigma2):
        """Vectorized split scores from presorted per-feature node data:
        `payload` (k, n_node, 3) holds [value, stat0, stat1] per row."""
        n_node = payload.shape[1]
        if n_node < 2:
            return None
        model = self.config.leaf_model
        vals = payload[:, :, 0]
        eligible, counts = self._position_filter(vals, n_node)
        k_idx, pos_idx = np.nonzero(eligible)
        if k_idx.shape[0] == 0:
            return None
        cum = np.cumsum(payload[:, :, 1:], axis=1)
        total = cum[:, -1:, :]
        left = cum[:, :-1, :]
        right = total - left
        pair = np.empty((k_idx.shape[0], 2, 2))
        pair[:, 0] = left[k_idx, pos_idx]
        pair[:, 1] = right[k_idx, pos_idx]
        rule_prior = self._scan_log_weights - np.log(np.maximum(counts, 1))
        flat_scores = (model.log_marginal_grid(pair, sigma2).sum(axis=1)
                       + rule_prior[k_idx])

        def resolve(i: int):
            k, pos = int(k_idx[i]), int(pos_idx[i])
            feature = int(self._scan_features[k])
            ftype = self._feature_types[feature]
            if ftype == ORDERED_CATEGORICAL:
                threshold = float(vals[k, pos])
            else:
                threshold = float(0.5 * (vals[k, pos] + vals[k, pos + 1]))
            return split_kind_for_feature(ftype), feature, threshold, None

        return flat_scores, resolve

    def _scan_tuple(self, rows, row_stats, sigma2):
        """Per-feature scan for tuple-valued (matrix) sufficient statistics."""
        n_node = rows.shape[0]
        if n_node < 2:
            return None
        model = self.config.leaf_model
        member = np.zeros(self.dataset.num_rows, dtype=bool)
        member[rows] = True
        all_scores = []
        cand_feature = []
        cand_pos = []
        vals_by_feature = {}
        for k, feature in enumerate(self._scan_features):
            feature = int(feature)
            idx = self._sort_idx[:, feature]
            comp = idx[member[idx]]
            vals = self._values[comp, feature]
            eligible, _ = self._position_filter(vals[None, :], n_node)
            positions = np.flatnonzero(eligible[0])
            if positions.shape[0] == 0:
                continue
            G_cum = np.cumsum(row_stats[0][comp], axis=0)
            h_cum = np.cumsum(row_stats[1][comp], axis=0)
            G_left = G_cum[positions]
            h_left = h_cum[positions]
            G_right = G_cum[-1] - G_left
            h_right = h_cum[-1] - h_left
            rule_prior = (self._scan_log_weights[k]
                          - math.log(positions.shape[0]))
            scores = (model.log_marginal_grid((G_left, h_left), sigma2)
                      + model.log_marginal_grid((G_right, h_right), sigma2)
                      + rule_prior)
            all_scores.append(scores)
            cand_feature.append(np.full(positions.shape[0], feature))
            cand_pos.append(positions)
            vals_by_feature[feature] = vals
        if not all_scores:
            return None
        cand_feature = np.concatenate(cand_feature)
        cand_pos = np.concatenate(cand_pos)

        def resolve(i: int):
            feature = int(cand_feature[i])
            pos = int(cand_pos[i])
            vals = vals_by_feature[feature]
            ftype = self._feature_types[feature]
            if ftype == ORDERED_CATEGORICAL:
                threshold = float(vals[pos])
            else:
                threshold = float(0.5 * (vals[pos] + vals[pos + 1]))
            return split_kind_for_feature(ftype), feature, threshold, None

        return np.concatenate(all_scores), resolve

    def _scan_level_subsets(self, feature, rows, row_stats, sigma2):
        """Candidates for an unordered categorical: levels ordered by mean
        residual, contiguous prefixes of that order as left subsets."""
        cfg = self.config
        model = cfg.leaf_model
        codes = self._values[rows, feature].astype(np.int64)
        levels, inverse, counts = np.unique(codes, return_inverse=True,
                                            return_counts=True)
        L = levels.shape[0]
        if L < 2:
            return None
        if isinstance(row_stats, tuple):
            # Order by per-level mean of the cross stat's first component.
            h = row_stats[1][rows]
            level_order = np.argsort(
                np.bincount(inverse, weights=h[:, 0], minlength=L) / counts)
            group_G = np.zeros((L,) + row_stats[0].shape[1:])
            group_h = np.zeros((L,) + row_stats[1].shape[1:])
            np.add.at(group_G, inverse, row_stats[0][rows])
            np.add.at(group_h, inverse, row_stats[1][rows])
            G_cum = np.cumsum(group_G[level_order], axis=0)
            h_cum = np.cumsum(group_h[level_order], axis=0)
            pair_cum = None
        else:
            pair = row_stats[rows]
            s0 = np.bincount(inverse, weights=pair[:, 0], minlength=L)
            s1 = np.bincount(inverse, weights=pair[:, 1], minlength=L)
            with np.errstate(divide="ignore", invalid="ignore"):
                means = np.where(s0 > 0, s1 / np.maximum(s0, 1e-300), 0.0)
            level_order = np.argsort(means, kind="stable")
            pair_cum = np.cumsum(
                np.stack([s0[level_order], s1[level_order]], axis=-1), axis=0)
        count_cum = np.cumsum(counts[level_order])
        msl = cfg.min_samples_leaf
        n_node = rows.shape[0]
        prefix_ok = np.flatnonzero(
            (count_cum[:-1] >= msl) & (n_node - count_cum[:-1] >= msl))
        if prefix_ok.shape[0] == 0:
            return None
        scores = np.empty(prefix_ok.shape[0])
        ordered_levels = levels[level_order]
        rule_prior = (math.log(cfg.variable_weights[feature])
                      - math.log(prefix_ok.shape[0]))
        for i, k in enumerate(prefix_ok):
            if pair_cum is not None:
                left = pair_cum[k]
                right = pair_cum[-1] - left
            else:
                left = (G_cum[k], h_cum[k])
                right = (G_cum[-1] - G_cum[k], h_cum[-1] - h_cum[k])
            scores[i] = (model.log_marginal(left, sigma2)
                         + model.log_marginal(right, sigma2)
                         + rule_prior)

        def resolve(i: int):
            k = int(prefix_ok[i])
            level_set = frozenset(int(v) for v in ordered_levels[:k + 1])
            return CATEGORY_SUBSET, feature, math.nan, level_set

        return scores, resolve
