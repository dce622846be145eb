"""Decision trees with axis-aligned and level-subset splits, stored as flat
index-based node arrays, plus the additive forest containers built from them.

Split semantics: numeric and ordered-categorical rules send rows with
x <= threshold left (boundary routes left); unordered-categorical rules send
rows whose level index belongs to an explicit subset left.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

from .data import NUMERIC, ORDERED_CATEGORICAL, UNORDERED_CATEGORICAL
from .errors import SchemaError

LEAF = "leaf"
NUMERIC_LE = "numeric_le"
ORDERED_LE = "ordered_le"
CATEGORY_SUBSET = "category_subset"

_SPLIT_KIND_FOR_FEATURE = {NUMERIC: NUMERIC_LE,
                           ORDERED_CATEGORICAL: ORDERED_LE,
                           UNORDERED_CATEGORICAL: CATEGORY_SUBSET}

_NO_NODE = -1


def split_kind_for_feature(feature_type: int) -> str:
    return _SPLIT_KIND_FOR_FEATURE[int(feature_type)]


class DecisionTree:
    """A binary tree over encoded covariates with vector-valued leaves.

    Nodes live in parallel arrays indexed by node id. Pruned nodes go onto a
    free list and their slots are reused by later grows, keeping the arrays
    compact across long Metropolis-Hastings runs; serialization renumbers
    nodes in breadth-first order, so internal ids are not part of the
    artifact. Leaf values live in one (capacity, leaf_dimension) array so the
    per-node value matrix is a view rather than a rebuild.
    """

    def __init__(self, leaf_dimension: int = 1,
                 root_value: Optional[np.ndarray] = None):
        if leaf_dimension < 1:
            raise ValueError("leaf_dimension must be >= 1")
        self.leaf_dimension = int(leaf_dimension)
        self.parent = [_NO_NODE]
        self.left = [_NO_NODE]
        self.right = [_NO_NODE]
        self.depth = [0]
        self.kind = [LEAF]
        self.feature = [_NO_NODE]
        self.threshold = [math.nan]
        self.level_set = [None]
        self.leaf_values = np.zeros((8, leaf_dimension))
        if root_value is not None:
            self.leaf_values[0] = np.asarray(
                root_value, dtype=np.float64).reshape(leaf_dimension)
        self.active = [True]
        self.root = 0
        self._free: list[int] = []

    # -- structure queries ----------------------------------------------------

    def is_leaf(self, node: int) -> bool:
        return self.kind[node] == LEAF

    def leaves(self) -> list[int]:
        return [i for i in range(len(self.kind))
                if self.active[i] and self.kind[i] == LEAF]

    def internal_nodes(self) -> list[int]:
        return [i for i in range(len(self.kind))
                if self.active[i] and self.kind[i] != LEAF]

    def prune_candidates(self) -> list[int]:
        """Internal nodes whose children are both leaves."""
        out = []
        for i in self.internal_nodes():
            if self.kind[self.left[i]] == LEAF and self.kind[self.right[i]] == LEAF:
                out.append(i)
        return out

    @property
    def num_leaves(self) -> int:
        return len(self.leaves())

    @property
    def num_active_nodes(self) -> int:
        return int(sum(self.active))

    @property
    def max_leaf_depth(self) -> int:
        return max(self.depth[i] for i in self.leaves())

    # -- structural edits -------------------------------------------------

    def apply_grow(self, node: int, kind: str, feature: int,
                   threshold: float = math.nan,
                   level_set: Optional[Iterable[int]] = None,
                   node_values: Optional[np.ndarray] = None) -> tuple[int, int]:
        """Split a leaf in place; new children start with zero leaf values.

        `node_values` (the split feature's values for the rows currently at
        the node) is optional; when given, a rule that routes zero rows to
        either child is rejected.
        """
        if not (0 <= node < len(self.kind)) or not self.active[node]:
            raise ValueError(f"node {node} does not exist")
        if self.kind[node] != LEAF:
            raise ValueError(f"node {node} is not a leaf")
        if kind not in (NUMERIC_LE, ORDERED_LE, CATEGORY_SUBSET):
            raise ValueError(f"unknown split kind {kind!r}")
        if feature < 0:
            raise ValueError("split feature must be nonnegative")
        if kind == CATEGORY_SUBSET:
            if not level_set:
                raise ValueError("category_subset split needs a nonempty level set")
            level_set = frozenset(int(v) for v in level_set)
        else:
            threshold = float(threshold)
            if not math.isfinite(threshold):
                raise ValueError("split threshold must be finite")
        if node_values is not None:
            goes_left = evaluate_split(kind, threshold, level_set, np.asarray(node_values))
            n_left = int(goes_left.sum())
            if n_left == 0 or n_left == goes_left.shape[0]:
                raise ValueError("split routes zero rows to one child (empty child)")

        left_id = self._add_node(node)
        right_id = self._add_node(node)
        self.kind[node] = kind
        self.feature[node] = int(feature)
        self.threshold[node] = threshold if kind != CATEGORY_SUBSET else math.nan
        self.level_set[node] = level_set if kind == CATEGORY_SUBSET else None
        self.left[node] = left_id
        self.right[node] = right_id
        self.leaf_values[node] = 0.0
        return left_id, right_id

    def _add_node(self, parent: int) -> int:
        if self._free:
            nid = self._free.pop()
            self.parent[nid] = parent
            self.left[nid] = _NO_NODE
            self.right[nid] = _NO_NODE
            self.depth[nid] = self.depth[parent] + 1
            self.kind[nid] = LEAF
            self.feature[nid] = _NO_NODE
            self.threshold[nid] = math.nan
            self.level_set[nid] = None
            self.leaf_values[nid] = 0.0
            self.active[nid] = True
            return nid
        self.parent.append(parent)
        self.left.append(_NO_NODE)
        self.right.append(_NO_NODE)
        self.depth.append(self.depth[parent] + 1)
        self.kind.append(LEAF)
        self.feature.append(_NO_NODE)
        self.threshold.append(math.nan)
        self.level_set.append(None)
        nid = len(self.kind) - 1
        if nid >= self.leaf_values.shape[0]:
            grown = np.zeros((2 * self.leaf_values.shape[0], self.leaf_dimension))
            grown[:self.leaf_values.shape[0]] = self.leaf_values
            self.leaf_values = grown
        else:
            self.leaf_values[nid] = 0.0
        self.active.append(True)
        return nid

    def apply_prune(self, node: int) -> None:
        """Collapse an internal node whose children are both leaves."""
        if not (0 <= node < len(self.kind)) or not self.active[node]:
            raise ValueError(f"node {node} does not exist")
        if self.kind[node] == LEAF:
            raise ValueError(f"node {node} is already a leaf")
        lc, rc = self.left[node], self.right[node]
        if self.kind[lc] != LEAF or self.kind[rc] != LEAF:
            raise ValueError(f"node {node} has non-leaf children")
        self.active[lc] = self.active[rc] = False
        self.leaf_values[lc] = 0.0
        self.leaf_values[rc] = 0.0
        self._free.append(lc)
        self._free.append(rc)
        self.left[node] = self.right[node] = _NO_NODE
        self.kind[node] = LEAF
        self.feature[node] = _NO_NODE
        self.threshold[node] = math.nan
        self.level_set[node] = None
        self.leaf_values[node] = 0.0

    def reset_to_root(self) -> None:
        self.parent = [_NO_NODE]
        self.left = [_NO_NODE]
        self.right = [_NO_NODE]
        self.depth = [0]
        self.kind = [LEAF]
        self.feature = [_NO_NODE]
        self.threshold = [math.nan]
        self.level_set = [None]
        self.leaf_values = np.zeros((8, self.leaf_dimension))
        self.active = [True]
        self.root = 0
        self._free = []

    def copy(self) -> "DecisionTree":
        out = DecisionTree.__new__(DecisionTree)
        out.leaf_dimension = self.leaf_dimension
        out.parent = list(self.parent)
        out.left = list(self.left)
        out.right = list(self.right)
        out.depth = list(self.depth)
        out.kind = list(self.kind)
        out.feature = list(self.feature)
        out.threshold = list(self.threshold)
        out.level_set = list(self.level_set)
        out.leaf_values = self.leaf_values[:len(self.kind)].copy()
        out.active = list(self.active)
        out.root = self.root
        out._free = list(self._free)
        return out

    # -- evaluation ---------------------------------------------------------

    def leaf_assignment(self, values: np.ndarray) -> np.ndarray:
        """Node id of the leaf each row lands in; values are encoded covariates."""
        n = values.shape[0]
        out = np.empty(n, dtype=np.int64)
        stack = [(self.root, np.arange(n))]
        while stack:
            node, rows = stack.pop()
            while self.kind[node] != LEAF:
                col = values[rows, self.feature[node]]
                mask = evaluate_split(self.kind[node], self.threshold[node],
                                      self.level_set[node], col)
                stack.append((self.right[node], rows[~mask]))
                rows = rows[mask]
                node = self.left[node]
            out[rows] = node
        return out

    def leaf_value_matrix(self) -> np.ndarray:
        """View of leaf values for all node slots, indexable by node id."""
        return self.leaf_values[:len(self.kind)]

    def predict(self, values: np.ndarray,
                basis: Optional[np.ndarray] = None) -> np.ndarray:
        """Per-row contribution: leaf value, or its dot product with the basis."""
        assign = self.leaf_assignment(values)
        leaf_vals = self.leaf_value_matrix()[assign]
        if basis is None:
            if self.leaf_dimension != 1:
                raise ValueError("basis required for vector-valued leaves")
            return leaf_vals[:, 0]
        if basis.shape[1] != self.leaf_dimension:
            raise ValueError(f"basis has dimension {basis.shape[1]}, "
                             f"leaves have {self.leaf_dimension}")
        return np.einsum("ij,ij->i", leaf_vals, basis)

    def split_features_used(self) -> set[int]:
        return {self.feature[i] for i in self.internal_nodes()}

    # -- canonical record form (used by the JSON artifact) -------------------

    def to_records(self) -> list[dict]:
        """Nodes in breadth-first order with ids renumbered 0..k-1."""
        order = []
        queue = [self.root]
        while queue:
            node = queue.pop(0)
            order.append(node)
            if self.kind[node] != LEAF:
                queue.append(self.left[node])
                queue.append(self.right[node])
        new_id = {node: i for i, node in enumerate(order)}
        records = []
        for node in order:
            rec = {
                "id": new_id[node],
                "parent": _NO_NODE if self.parent[node] == _NO_NODE
                else new_id[self.parent[node]],
                "left": _NO_NODE if self.kind[node] == LEAF else new_id[self.left[node]],
                "right": _NO_NODE if self.kind[node] == LEAF else new_id[self.right[node]],
                "kind": self.kind[node],
                "feature": int(self.feature[node]),
            }
            if self.kind[node] == CATEGORY_SUBSET:
                rec["level_set"] = sorted(int(v) for v in self.level_set[node])
            elif self.kind[node] != LEAF:
                rec["threshold"] = float(self.threshold[node])
            if self.kind[node] == LEAF:
                rec["leaf_values"] = [float(v) for v in self.leaf_values[node]]
            records.append(rec)
        return records

    @classmethod
    def from_records(cls, records: list[dict], leaf_dimension: int) -> "DecisionTree":
        if not records:
            raise SchemaError("tree has no nodes")
        by_id = {}
        for rec in records:
            nid = int(rec["id"])
            if nid in by_id:
                raise SchemaError(f"duplicate node id {nid}")
            by_id[nid] = rec
        roots = [nid for nid, rec in by_id.items() if int(rec["parent"]) == _NO_NODE]
        if len(roots) != 1:
            raise SchemaError(f"tree must have exactly one root, found {len(roots)}")

        tree = cls(leaf_dimension)
        id_map = {}  # record id -> internal id
        visited = 0
        stack = [(roots[0], _NO_NODE, 0)]
        while stack:
            rid, parent_internal, depth = stack.pop()
            rec = by_id[rid]
            if int(rec["parent"]) != _NO_NODE:
                parent_rec = by_id.get(int(rec["parent"]))
                if parent_rec is None or rid not in (int(parent_rec.get("left", _NO_NODE)),
                                                     int(parent_rec.get("right", _NO_NODE))):
                    raise SchemaError(f"orphan node {rid}: parent link is inconsistent")
            if parent_internal == _NO_NODE:
                internal = tree.root
            else:
                internal = tree._add_node(parent_internal)
            id_map[rid] = internal
            visited += 1

            kind = rec.get("kind", LEAF)
            if kind == LEAF:
                values = np.asarray(rec.get("leaf_values", []), dtype=np.float64)
                if values.shape != (leaf_dimension,):
                    raise SchemaError(f"node {rid}: leaf_values must have length "
                                      f"{leaf_dimension}")
                tree.kind[internal] = LEAF
                tree.leaf_values[internal] = values
            elif kind in (NUMERIC_LE, ORDERED_LE, CATEGORY_SUBSET):
                lc, rc = int(rec.get("left", _NO_NODE)), int(rec.get("right", _NO_NODE))
                if lc not in by_id or rc not in by_id:
                    raise SchemaError(f"node {rid}: child pointer to missing node")
                tree.kind[internal] = kind
                tree.feature[internal] = int(rec["feature"])
                if tree.feature[internal] < 0:
                    raise SchemaError(f"node {rid}: split feature must be nonnegative")
                if kind == CATEGORY_SUBSET:
                    levels = rec.get("level_set")
                    if not levels:
                        raise SchemaError(f"node {rid}: category_subset needs level_set")
                    tree.level_set[internal] = frozenset(int(v) for v in levels)
                else:
                    thr = float(rec.get("threshold", math.nan))
                    if not math.isfinite(thr):
                        raise SchemaError(f"node {rid}: threshold must be finite")
                    tree.threshold[internal] = thr
                # Children are pushed right-first so the left child is created
                # first, preserving breadth-compatible internal layout.
                stack.append((rc, internal, depth + 1))
                stack.append((lc, internal, depth + 1))
            else:
                raise SchemaError(f"node {rid}: unknown kind {kind!r}")

        if visited != len(by_id):
            unreachable = sorted(set(by_id) - set(id_map))
            raise SchemaError(f"orphan node {unreachable[0]}: unreachable from root")
        # Wire child links using the id map (left was created before right).
        for rid, rec in by_id.items():
            if rec.get("kind", LEAF) != LEAF:
                internal = id_map[rid]
                tree.left[internal] = id_map[int(rec["left"])]
                tree.right[internal] = id_map[int(rec["right"])]
        return tree


def evaluate_split(kind: str, threshold: float, level_set, values: np.ndarray) -> np.ndarray:
    """Boolean mask of rows routed left by a split rule."""
    if kind in (NUMERIC_LE, ORDERED_LE):
        return values <= threshold
    if kind == CATEGORY_SUBSET:
        return np.isin(values.astype(np.int64), np.fromiter(level_set, dtype=np.int64))
    raise ValueError(f"unknown split kind {kind!r}")


def tree_log_prior(tree: DecisionTree, alpha: float, beta: float) -> float:
    """Log prior of a tree structure under the depth-decaying split process.

    A node at depth d splits with probability alpha / (1 + d)^beta; internal
    nodes contribute log of that and leaves log of its complement.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    total = 0.0
    for node in range(len(tree.kind)):
        if not tree.active[node]:
            continue
        p_split = alpha / (1.0 + tree.depth[node]) ** beta
        if tree.kind[node] == LEAF:
            total += math.log1p(-p_split)
        else:
            total += math.log(p_split)
    return total


class Forest:
    """An additive ensemble of trees sharing one leaf model.

    For exponentiated forests the trees' summed contribution is a log scale
    and `predict` returns its exponential (a multiplicative variance factor).
    """

    def __init__(self, num_trees: int, leaf_dimension: int = 1,
                 requires_basis: bool = False, is_exponentiated: bool = False):
        if num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        self.num_trees = int(num_trees)
        self.leaf_dimension = int(leaf_dimension)
        self.requires_basis = bool(requires_basis)
        self.is_exponentiated = bool(is_exponentiated)
        self.trees = [DecisionTree(leaf_dimension) for _ in range(num_trees)]

    def set_root_values(self, value) -> None:
        """Reset every tree to a root leaf holding `value` (vector or scalar)."""
        vec = np.asarray(value, dtype=np.float64).reshape(self.leaf_dimension)
        for tree in self.trees:
            tree.reset_to_root()
            tree.leaf_values[tree.root] = vec.copy()

    def predict_components(self, values: np.ndarray,
                           basis: Optional[np.ndarray] = None) -> np.ndarray:
        total = np.zeros(values.shape[0])
        for tree in self.trees:
            total += tree.predict(values, basis if self.requires_basis else None)
        return total

    def predict(self, values: np.ndarray,
                basis: Optional[np.ndarray] = None) -> np.ndarray:
        total = self.predict_components(values, basis)
        return np.exp(total) if self.is_exponentiated else total

    def copy(self) -> "Forest":
        out = Forest(self.num_trees, self.leaf_dimension,
                     self.requires_basis, self.is_exponentiated)
        out.trees = [t.copy() for t in self.trees]
        return out

    def leaf_value_vector(self) -> np.ndarray:
        """All leaf values across the forest, flattened (for scale updates)."""
        chunks = [tree.leaf_value_matrix()[tree.leaves()] for tree in self.trees]
        return np.concatenate(chunks, axis=0).ravel()

    @property
    def total_leaves(self) -> int:
        return sum(tree.num_leaves for tree in self.trees)


class ForestSamples:
    """Retained forest snapshots from one sampling run."""

    def __init__(self, num_trees: int, leaf_dimension: int = 1,
                 requires_basis: bool = False, is_exponentiated: bool = False):
        self.num_trees = int(num_trees)
        self.leaf_dimension = int(leaf_dimension)
        self.requires_basis = bool(requires_basis)
        self.is_exponentiated = bool(is_exponentiated)
        self.forests: list[Forest] = []

    def add_sample(self, forest: Forest) -> None:
        if forest.num_trees != self.num_trees or \
                forest.leaf_dimension != self.leaf_dimension:
            raise ValueError("forest shape does not match this container")
        self.forests.append(forest.copy())

    @property
    def num_samples(self) -> int:
        return len(self.forests)

    def extend(self, other: "ForestSamples") -> None:
        """Append another container's samples (e.g. to pool chains)."""
        if other.num_trees != self.num_trees or \
                other.leaf_dimension != self.leaf_dimension:
            raise ValueError("forest sample containers have different shapes")
        self.forests.extend(f.copy() for f in other.forests)

    def predict(self, values: np.ndarray,
                basis: Optional[np.ndarray] = None) -> np.ndarray:
        """(n, num_samples) matrix of per-sample forest predictions."""
        out = np.empty((values.shape[0], len(self.forests)))
        for s, forest in enumerate(self.forests):
            out[:, s] = forest.predict(values, basis)
        return out
