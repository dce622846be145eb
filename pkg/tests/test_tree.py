"""Decision-tree container, split routing, structure prior, and forests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bartkit import DecisionTree, Forest, ForestSamples, tree_log_prior
from bartkit.errors import SchemaError
from bartkit.tree import evaluate_split


def grown_tree():
    """Root split on x0 <= 0.5; left child split on x1 <= 0.25."""
    t = DecisionTree(root_value=np.array([0.0]))
    left, right = t.apply_grow(0, "numeric_le", 0, threshold=0.5)
    t.leaf_values[right] = 3.0
    ll, lr = t.apply_grow(left, "numeric_le", 1, threshold=0.25)
    t.leaf_values[ll] = 1.0
    t.leaf_values[lr] = 2.0
    return t, (ll, lr, right)


class TestTreeStructure:
    def test_fresh_tree_is_single_leaf(self):
        t = DecisionTree(root_value=np.array([0.7]))
        assert t.num_leaves == 1
        assert t.num_active_nodes == 1
        assert t.leaves() == [0]
        assert t.max_leaf_depth == 0

    def test_grow_creates_two_children(self):
        t = DecisionTree()
        left, right = t.apply_grow(0, "numeric_le", 2, threshold=1.5)
        assert t.num_leaves == 2
        assert sorted(t.leaves()) == sorted([left, right])
        assert t.internal_nodes() == [0]
        assert t.max_leaf_depth == 1

    def test_grow_on_internal_node_rejected(self):
        t, _ = grown_tree()
        with pytest.raises(ValueError):
            t.apply_grow(0, "numeric_le", 0, threshold=0.1)

    def test_prune_restores_leaf(self):
        t = DecisionTree()
        t.apply_grow(0, "numeric_le", 0, threshold=0.0)
        t.apply_prune(0)
        assert t.num_leaves == 1
        assert t.leaves() == [0]

    def test_prune_requires_leaf_children(self):
        t, _ = grown_tree()
        with pytest.raises(ValueError):
            t.apply_prune(0)  # left child is internal

    def test_prune_candidates(self):
        t, _ = grown_tree()
        # only the left child has two leaf children
        assert t.prune_candidates() == [1]

    def test_slots_are_reused_after_prune(self):
        t = DecisionTree()
        l, r = t.apply_grow(0, "numeric_le", 0, threshold=0.0)
        t.apply_prune(0)
        l2, r2 = t.apply_grow(0, "numeric_le", 0, threshold=0.0)
        assert {l2, r2} == {l, r}
        assert t.num_active_nodes == 3

    def test_grow_rejects_empty_child(self):
        t = DecisionTree()
        with pytest.raises(ValueError):
            t.apply_grow(0, "numeric_le", 0, threshold=0.9,
                         node_values=np.array([0.3, 0.4]))

    def test_grow_rejects_nonfinite_threshold(self):
        t = DecisionTree()
        with pytest.raises(ValueError):
            t.apply_grow(0, "numeric_le", 0, threshold=math.inf)

    def test_category_split_needs_levels(self):
        t = DecisionTree()
        with pytest.raises(ValueError):
            t.apply_grow(0, "category_subset", 0, level_set=[])


class TestRouting:
    def test_numeric_le_routes_left_on_equality(self):
        mask = evaluate_split("numeric_le", 0.5, None, np.array([0.5, 0.51]))
        np.testing.assert_array_equal(mask, [True, False])

    def test_category_subset(self):
        mask = evaluate_split("category_subset", math.nan, frozenset([0, 2]),
                              np.array([2.0, 1.0]))
        np.testing.assert_array_equal(mask, [True, False])

    def test_leaf_assignment(self):
        t, (ll, lr, right) = grown_tree()
        X = np.array([
            [0.2, 0.1],   # left, then x1<=0.25 -> ll
            [0.2, 0.9],   # left, then x1>0.25 -> lr
            [0.9, 0.0],   # right
        ])
        np.testing.assert_array_equal(t.leaf_assignment(X), [ll, lr, right])

    def test_predict_constant_leaves(self):
        t, _ = grown_tree()
        X = np.array([[0.2, 0.1], [0.2, 0.9], [0.9, 0.0]])
        np.testing.assert_allclose(t.predict(X), [1.0, 2.0, 3.0])

    def test_predict_with_basis(self):
        t = DecisionTree(leaf_dimension=1)
        l, r = t.apply_grow(0, "numeric_le", 0, threshold=0.0)
        t.leaf_values[l] = 2.0
        t.leaf_values[r] = -1.0
        X = np.array([[-1.0], [1.0]])
        basis = np.array([[0.5], [4.0]])
        np.testing.assert_allclose(t.predict(X, basis), [1.0, -4.0])

    def test_split_features_used(self):
        t, _ = grown_tree()
        assert t.split_features_used() == {0, 1}


class TestRecords:
    def test_round_trip(self):
        t, _ = grown_tree()
        records = t.to_records()
        clone = DecisionTree.from_records(records, leaf_dimension=1)
        assert clone.to_records() == records
        X = np.array([[0.2, 0.1], [0.2, 0.9], [0.9, 0.0]])
        np.testing.assert_array_equal(clone.predict(X), t.predict(X))

    def test_records_are_bfs_renumbered(self):
        t, _ = grown_tree()
        ids = [rec["id"] for rec in t.to_records()]
        assert ids == list(range(len(ids)))

    def test_unreachable_node_named_in_error(self):
        t, _ = grown_tree()
        records = t.to_records()
        records.append({"id": 9, "parent": 2, "kind": "leaf",
                        "leaf_values": [0.0]})
        with pytest.raises(SchemaError, match="9"):
            DecisionTree.from_records(records, leaf_dimension=1)

    def test_missing_child_rejected(self):
        t, _ = grown_tree()
        records = [r for r in t.to_records() if r["id"] != 2]
        with pytest.raises(SchemaError):
            DecisionTree.from_records(records, leaf_dimension=1)

    def test_duplicate_id_rejected(self):
        t = DecisionTree(root_value=np.array([1.0]))
        records = t.to_records() * 2
        with pytest.raises(SchemaError, match="duplicate"):
            DecisionTree.from_records(records, leaf_dimension=1)

    def test_two_roots_rejected(self):
        records = [
            {"id": 0, "parent": -1, "kind": "leaf", "leaf_values": [0.0]},
            {"id": 1, "parent": -1, "kind": "leaf", "leaf_values": [0.0]},
        ]
        with pytest.raises(SchemaError, match="root"):
            DecisionTree.from_records(records, leaf_dimension=1)

    def test_leaf_value_length_checked(self):
        records = [{"id": 0, "parent": -1, "kind": "leaf",
                    "leaf_values": [1.0, 2.0]}]
        with pytest.raises(SchemaError):
            DecisionTree.from_records(records, leaf_dimension=1)

    @given(st.data())
    @settings(max_examples=40, deadline=None)
    def test_random_trees_round_trip(self, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
        t = DecisionTree()
        for _ in range(data.draw(st.integers(0, 12))):
            node = int(rng.choice(t.leaves()))
            kind = rng.choice(["numeric_le", "ordered_le", "category_subset"])
            if kind == "category_subset":
                levels = sorted(rng.choice(5, size=2, replace=False).tolist())
                t.apply_grow(node, kind, int(rng.integers(0, 4)), level_set=levels)
            else:
                t.apply_grow(node, kind, int(rng.integers(0, 4)),
                             threshold=float(rng.normal()))
        for leaf in t.leaves():
            t.leaf_values[leaf] = rng.normal()
        records = t.to_records()
        clone = DecisionTree.from_records(records, leaf_dimension=1)
        assert clone.to_records() == records


class TestStructurePrior:
    def test_single_leaf(self):
        t = DecisionTree()
        assert tree_log_prior(t, 0.95, 2.0) == pytest.approx(math.log(1 - 0.95))

    def test_one_split(self):
        t = DecisionTree()
        t.apply_grow(0, "numeric_le", 0, threshold=0.0)
        alpha, beta = 0.8, 1.5
        expected = math.log(alpha) + 2 * math.log1p(-alpha / 2 ** beta)
        assert tree_log_prior(t, alpha, beta) == pytest.approx(expected, rel=1e-12)

    def test_parameter_validation(self):
        t = DecisionTree()
        with pytest.raises(ValueError):
            tree_log_prior(t, 0.0, 2.0)
        with pytest.raises(ValueError):
            tree_log_prior(t, 0.5, -1.0)


class TestForest:
    def test_prediction_sums_trees(self):
        f = Forest(num_trees=3, leaf_dimension=1)
        f.set_root_values(np.array([0.5]))
        X = np.zeros((4, 2))
        np.testing.assert_allclose(f.predict(X), np.full(4, 1.5))

    def test_exponentiated_forest(self):
        f = Forest(num_trees=2, leaf_dimension=1, is_exponentiated=True)
        f.set_root_values(np.array([0.3]))
        X = np.zeros((2, 1))
        np.testing.assert_allclose(f.predict(X), np.exp(0.6))

    def test_copy_is_independent(self):
        f = Forest(num_trees=1, leaf_dimension=1)
        f.set_root_values(np.array([1.0]))
        g = f.copy()
        g.trees[0].leaf_values[0] = 9.0
        assert f.trees[0].leaf_value_matrix()[0, 0] == 1.0

    def test_total_leaves(self):
        f = Forest(num_trees=2, leaf_dimension=1)
        f.set_root_values(np.array([0.0]))
        f.trees[0].apply_grow(0, "numeric_le", 0, threshold=0.0)
        assert f.total_leaves == 3

    def test_leaf_value_vector(self):
        f = Forest(num_trees=2, leaf_dimension=1)
        f.set_root_values(np.array([0.5]))
        np.testing.assert_allclose(sorted(f.leaf_value_vector()), [0.5, 0.5])


class TestForestSamples:
    def test_add_sample_deep_copies(self):
        f = Forest(num_trees=1, leaf_dimension=1)
        f.set_root_values(np.array([1.0]))
        samples = ForestSamples(num_trees=1, leaf_dimension=1)
        samples.add_sample(f)
        f.trees[0].leaf_values[0] = 42.0
        np.testing.assert_allclose(samples.predict(np.zeros((1, 1))), [[1.0]])

    def test_predict_shape(self):
        f = Forest(num_trees=2, leaf_dimension=1)
        f.set_root_values(np.array([0.5]))
        samples = ForestSamples(num_trees=2, leaf_dimension=1)
        samples.add_sample(f)
        samples.add_sample(f)
        out = samples.predict(np.zeros((5, 1)))
        assert out.shape == (5, 2)
        np.testing.assert_allclose(out, 1.0)

    def test_extend_concatenates(self):
        f = Forest(num_trees=1, leaf_dimension=1)
        f.set_root_values(np.array([0.0]))
        a = ForestSamples(num_trees=1, leaf_dimension=1)
        b = ForestSamples(num_trees=1, leaf_dimension=1)
        a.add_sample(f)
        b.add_sample(f)
        b.add_sample(f)
        a.extend(b)
        assert a.num_samples == 3
