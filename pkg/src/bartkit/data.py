"""Data containers and ingestion: covariate encoding, outcome residuals, CSV loading.

Covariates are stored as a dense float64 matrix. Categorical columns hold level
indices; the raw labels live in a per-column level table so that encoding is
reversible and new data can be encoded against a fitted schema.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInputError, ParseError, SchemaError
from .validation import check_matrix, check_vector

# Feature type codes. Numeric splits use "x <= t" on raw values; ordered
# categorical splits use "level <= t" on level ranks; unordered categorical
# splits send an explicit level subset left.
NUMERIC = 0
ORDERED_CATEGORICAL = 1
UNORDERED_CATEGORICAL = 2

_TYPE_NAMES = {NUMERIC: "numeric", ORDERED_CATEGORICAL: "ordered",
               UNORDERED_CATEGORICAL: "unordered"}


@dataclass
class CovariateMatrix:
    """Encoded covariates plus the schema needed to re-encode new data."""

    values: np.ndarray                 # (n, p) float64
    feature_types: np.ndarray          # (p,) int8 of the codes above
    column_names: list[str]
    levels: dict[int, list] = field(default_factory=dict)  # col -> raw labels

    def __post_init__(self):
        self.values = check_matrix(self.values, "covariates")
        self.feature_types = np.asarray(self.feature_types, dtype=np.int8)
        if self.feature_types.shape != (self.values.shape[1],):
            raise SchemaError("feature_types length must match number of columns")
        for t in self.feature_types:
            if t not in _TYPE_NAMES:
                raise SchemaError(f"unknown feature type code {int(t)}")
        if len(self.column_names) != self.values.shape[1]:
            raise SchemaError("column_names length must match number of columns")

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]

    @property
    def num_features(self) -> int:
        return self.values.shape[1]

    def decode_column(self, j: int) -> list:
        """Map a categorical column's level indices back to raw labels."""
        if j not in self.levels:
            raise ValueError(f"column {j} is not categorical")
        labels = self.levels[j]
        return [labels[int(v)] for v in self.values[:, j]]


def _sort_levels(values: list) -> list:
    """Order for ordered-categorical levels: numeric if possible, else lexicographic."""
    try:
        return sorted(set(values), key=float)
    except (TypeError, ValueError):
        return sorted(set(values), key=str)


def _first_occurrence_levels(values: list) -> list:
    seen = {}
    for v in values:
        if v not in seen:
            seen[v] = len(seen)
    return list(seen)


def _encode_with_levels(raw: list, labels: list, col: str) -> np.ndarray:
    lookup = {lab: i for i, lab in enumerate(labels)}
    out = np.empty(len(raw), dtype=np.float64)
    for i, v in enumerate(raw):
        try:
            out[i] = lookup[v]
        except KeyError:
            raise ParseError(
                f"column {col!r}: value {v!r} is not among the fitted levels"
            ) from None
    return out


class CovariatePreprocessor:
    """Captures a covariate schema at fit time and re-encodes new data against it.

    Accepts a pandas DataFrame (Categorical dtype drives the feature type, the
    `ordered` flag picking ordered vs unordered; object/string columns are
    unordered), a plain numeric array, or a column dict as produced by the CSV
    loader. Explicit `ordered_columns` / `unordered_columns` override inference.
    """

    def __init__(self, ordered_columns: Optional[Sequence] = None,
                 unordered_columns: Optional[Sequence] = None):
        self.ordered_columns = list(ordered_columns) if ordered_columns else []
        self.unordered_columns = list(unordered_columns) if unordered_columns else []
        overlap = set(map(str, self.ordered_columns)) & set(map(str, self.unordered_columns))
        if overlap:
            raise SchemaError(f"columns marked both ordered and unordered: {sorted(overlap)}")
        self._fitted = False

    # -- schema capture -----------------------------------------------------

    def fit(self, X) -> "CovariatePreprocessor":
        names, columns = _columns_of(X)
        if not columns:
            raise EmptyInputError("covariates have no columns")
        explicit_ordered = _match_columns(self.ordered_columns, names, "ordered_columns")
        explicit_unordered = _match_columns(self.unordered_columns, names, "unordered_columns")
        hints = _categorical_dtype_hints(X, names)

        self.column_names_ = list(names)
        types = []
        levels: dict[int, list] = {}
        for j, (name, col) in enumerate(zip(names, columns)):
            if j in hints and j not in explicit_ordered and j not in explicit_unordered:
                kind, labs = hints[j]
            else:
                kind, labs = _infer_column(col, name,
                                           ordered=j in explicit_ordered,
                                           unordered=j in explicit_unordered)
            types.append(kind)
            if labs is not None:
                levels[j] = labs
        self.feature_types_ = np.asarray(types, dtype=np.int8)
        self.levels_ = levels
        self._fitted = True
        return self

    def transform(self, X) -> CovariateMatrix:
        if not self._fitted:
            raise ValueError("CovariatePreprocessor must be fitted before transform")
        names, columns = _columns_of(X)
        if set(self.column_names_) <= set(names):
            # Select the fitted columns by name; extras are ignored.
            by_name = dict(zip(names, columns))
            columns = [by_name[n] for n in self.column_names_]
        elif len(names) != len(self.column_names_):
            raise SchemaError(
                f"expected columns {self.column_names_}, got {list(names)}")
        out = np.empty((len(columns[0]), len(columns)), dtype=np.float64)
        for j, col in enumerate(columns):
            name = self.column_names_[j]
            if j in self.levels_:
                out[:, j] = _encode_with_levels(list(col), self.levels_[j], name)
            else:
                out[:, j] = _parse_numeric(col, name)
        return CovariateMatrix(out, self.feature_types_, list(self.column_names_),
                               dict(self.levels_))

    def fit_transform(self, X) -> CovariateMatrix:
        return self.fit(X).transform(X)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "column_names": list(self.column_names_),
            "feature_types": [int(t) for t in self.feature_types_],
            "levels": {str(j): list(labs) for j, labs in self.levels_.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovariatePreprocessor":
        obj = cls()
        obj.column_names_ = list(d["column_names"])
        obj.feature_types_ = np.asarray(d["feature_types"], dtype=np.int8)
        obj.levels_ = {int(j): list(labs) for j, labs in d.get("levels", {}).items()}
        obj._fitted = True
        return obj


def _columns_of(X):
    """Split the supported covariate containers into (names, list-of-columns)."""
    try:
        import pandas as pd
    except ImportError:  # pragma: no cover - pandas is a hard dependency
        pd = None
    if pd is not None and isinstance(X, pd.DataFrame):
        if X.shape[0] == 0:
            raise EmptyInputError("covariates have no rows")
        return [str(c) for c in X.columns], [X[c].tolist() for c in X.columns]
    if isinstance(X, dict):
        names = list(X)
        cols = [list(X[n]) for n in names]
        if cols and len(cols[0]) == 0:
            raise EmptyInputError("covariates have no rows")
        return names, cols
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"covariates must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInputError("covariates have no rows")
    names = [f"x{j + 1}" for j in range(arr.shape[1])]
    return names, [arr[:, j].tolist() for j in range(arr.shape[1])]


def _categorical_dtype_hints(X, names) -> dict:
    """Feature types implied by pandas Categorical dtypes, keyed by position."""
    try:
        import pandas as pd
    except ImportError:  # pragma: no cover
        return {}
    if not isinstance(X, pd.DataFrame):
        return {}
    hints = {}
    for j, name in enumerate(X.columns):
        dtype = X[name].dtype
        if isinstance(dtype, pd.CategoricalDtype):
            labels = [lab.item() if hasattr(lab, "item") else lab
                      for lab in dtype.categories]
            kind = ORDERED_CATEGORICAL if dtype.ordered else UNORDERED_CATEGORICAL
            hints[j] = (kind, labels)
    return hints


def _match_columns(cols, names, what) -> set:
    out = set()
    lookup = {n: i for i, n in enumerate(names)}
    for c in cols:
        if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
            if not 0 <= int(c) < len(names):
                raise SchemaError(f"{what}: column index {int(c)} out of range")
            out.add(int(c))
        elif str(c) in lookup:
            out.add(lookup[str(c)])
        else:
            raise SchemaError(f"{what}: unknown column {c!r}")
    return out


def _infer_column(col: list, name: str, *, ordered: bool, unordered: bool):
    """Return (feature type, level labels or None) for one raw column."""
    try:
        import pandas as pd
        if isinstance(col, pd.Series):  # pragma: no cover - normalized earlier
            col = col.tolist()
    except ImportError:  # pragma: no cover
        pass
    if unordered:
        return UNORDERED_CATEGORICAL, _first_occurrence_levels(col)
    if ordered:
        return ORDERED_CATEGORICAL, _sort_levels(col)
    # Inference path: anything non-numeric is an unordered categorical.
    try:
        _parse_numeric(col, name)
        return NUMERIC, None
    except ParseError:
        return UNORDERED_CATEGORICAL, _first_occurrence_levels(col)


def _parse_numeric(col, name: str) -> np.ndarray:
    out = np.empty(len(col), dtype=np.float64)
    for i, v in enumerate(col):
        if isinstance(v, bool):
            out[i] = float(v)
            continue
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            raise ParseError(
                f"column {name!r}, row {i + 1}: cannot parse {v!r} as a number"
            ) from None
        if not np.isfinite(out[i]):
            raise ParseError(f"column {name!r}, row {i + 1}: non-finite value {v!r}")
    return out


# ---------------------------------------------------------------------------
# Outcome and dataset containers used by the samplers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardizationInfo:
    center: float
    scale: float

    def apply(self, y: np.ndarray) -> np.ndarray:
        return (y - self.center) / self.scale

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.scale + self.center

    def invert_variance(self, values: np.ndarray) -> np.ndarray:
        return values * (self.scale ** 2)


def standardize_outcome(y) -> tuple[np.ndarray, StandardizationInfo]:
    """Center and scale by the sample standard deviation (n-1 denominator)."""
    arr = check_vector(y, "outcome")
    if arr.shape[0] < 2:
        raise EmptyInputError("outcome needs at least 2 rows to standardize")
    center = float(arr.mean())
    scale = float(arr.std(ddof=1))
    if scale <= 0.0 or not np.isfinite(scale):
        raise ValueError("outcome has degenerate scale (zero sample variance)")
    info = StandardizationInfo(center, scale)
    return info.apply(arr), info


class Outcome:
    """Holds the running residual that the Gibbs samplers operate on."""

    def __init__(self, y: np.ndarray):
        self.residual = check_vector(y, "outcome").copy()
        self.n = self.residual.shape[0]

    def add_vector(self, values: np.ndarray) -> None:
        v = check_vector(values, "values", n=self.n)
        self.residual += v

    def subtract_vector(self, values: np.ndarray) -> None:
        v = check_vector(values, "values", n=self.n)
        self.residual -= v


class ForestDataset:
    """Covariates plus optional leaf basis and observation variance weights.

    A variance weight v_i scales the error variance of row i multiplicatively:
    Var(eps_i) = sigma2 * v_i.
    """

    def __init__(self, covariates: CovariateMatrix,
                 basis: Optional[np.ndarray] = None,
                 variance_weights: Optional[np.ndarray] = None):
        if not isinstance(covariates, CovariateMatrix):
            covariates = CovariateMatrix(
                np.asarray(covariates, dtype=np.float64),
                np.zeros(np.atleast_2d(covariates).shape[1], dtype=np.int8),
                [f"x{j + 1}" for j in range(np.atleast_2d(covariates).shape[1])])
        self.covariates = covariates
        n = covariates.num_rows
        self.basis = None if basis is None else check_matrix(basis, "basis", n=n)
        self.variance_weights = None
        if variance_weights is not None:
            self.update_variance_weights(variance_weights)

    @property
    def num_rows(self) -> int:
        return self.covariates.num_rows

    @property
    def basis_dimension(self) -> int:
        return 0 if self.basis is None else self.basis.shape[1]

    def update_basis(self, basis: np.ndarray) -> None:
        new = check_matrix(basis, "basis", n=self.num_rows)
        if self.basis is not None and new.shape[1] != self.basis.shape[1]:
            raise ValueError(
                f"basis dimension changed from {self.basis.shape[1]} to {new.shape[1]}")
        self.basis = new

    def update_variance_weights(self, weights: np.ndarray) -> None:
        w = check_vector(weights, "variance_weights", n=self.num_rows)
        if np.any(w <= 0.0):
            bad = int(np.flatnonzero(w <= 0.0)[0])
            raise ValueError(f"variance_weights must be strictly positive "
                             f"(row {bad} is {w[bad]!r})")
        self.variance_weights = w

    def precision_weights(self) -> np.ndarray:
        """1 / variance_weights, the per-row precision contribution."""
        if self.variance_weights is None:
            return np.ones(self.num_rows)
        return 1.0 / self.variance_weights


def encode_group_ids(raw) -> tuple[np.ndarray, list]:
    """Map raw group labels to dense 0..L-1 indices (first occurrence order)."""
    values = list(np.asarray(raw).tolist()) if not isinstance(raw, list) else raw
    if len(values) == 0:
        raise EmptyInputError("group ids have no rows")
    labels = _first_occurrence_levels(values)
    lookup = {lab: i for i, lab in enumerate(labels)}
    return np.asarray([lookup[v] for v in values], dtype=np.int64), labels


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def load_csv_columns(path) -> dict[str, list]:
    """Read an RFC-4180 CSV with a header row into a column dict.

    Numeric-looking values are coerced to floats so that categorical levels
    round-trip as numbers when the raw column is numeric-coded.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyInputError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyInputError(f"{path}: no data rows")
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {i + 1} has {len(row)} fields, "
                             f"expected {len(header)}")
    return {name: [_coerce_scalar(row[j].strip()) for row in body]
            for j, name in enumerate(header)}


def split_csv_columns(table: dict, path: str, outcome_col=None,
                      treatment_col=None, group_col=None, propensity_col=None):
    """Pull the named special columns out of a column dict.

    Returns (covariate table, outcome, treatment, group labels, propensity);
    absent selectors yield None. The special columns are removed from the
    covariate table.
    """

    def column(name):
        if name not in table:
            raise SchemaError(f"{path}: missing column {name!r}")
        return table[name]

    y = _parse_numeric(column(outcome_col), outcome_col) \
        if outcome_col is not None else None
    z = _parse_numeric(column(treatment_col), treatment_col) \
        if treatment_col is not None else None
    groups = list(column(group_col)) if group_col is not None else None
    pi = _parse_numeric(column(propensity_col), propensity_col) \
        if propensity_col is not None else None
    drop = {outcome_col, treatment_col, group_col, propensity_col} - {None}
    covariates = {name: col for name, col in table.items() if name not in drop}
    if not covariates:
        raise SchemaError(f"{path}: no covariate columns remain")
    return covariates, y, z, groups, pi


def load_csv(path, outcome_col: Optional[str] = None,
             treatment_col: Optional[str] = None,
             categorical_spec: Optional[dict] = None,
             group_col: Optional[str] = None,
             propensity_col: Optional[str] = None):
    """Read a CSV with a header row into model-ready arrays.

    Returns (CovariateMatrix, outcome, treatment, group labels, propensity);
    selectors left as None yield None. Selected columns are removed from the
    covariates. `categorical_spec` is a dict with optional keys "ordered" and
    "unordered", each a list of column names.
    """
    table = load_csv_columns(path)
    cov_table, y, z, groups, pi = split_csv_columns(
        table, path, outcome_col, treatment_col, group_col, propensity_col)
    spec = categorical_spec or {}
    for key in spec:
        if key not in ("ordered", "unordered"):
            raise SchemaError(f"categorical_spec: unknown key {key!r}")
    pre = CovariatePreprocessor(ordered_columns=spec.get("ordered"),
                                unordered_columns=spec.get("unordered"))
    covariates = pre.fit_transform(cov_table)
    return covariates, y, z, groups, pi


def _coerce_scalar(v: str):
    try:
        f = float(v)
    except (TypeError, ValueError):
        return v
    if f.is_integer() and ("." not in v and "e" not in v.lower()):
        return int(f)
    return f
