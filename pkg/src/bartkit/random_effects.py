"""One-way random effects with parameter expansion.

The group effect for group j is beta_j = alpha ⊙ xi_j: a shared working scale
vector alpha (one entry per basis column) times raw group coefficients xi_j.
The redundant parameterization keeps the Gibbs sweep mobile when group
variances are small. Priors: xi_jc ~ N(0, sigma2_c) with sigma2_c ~ IG(a0, b0),
alpha_c ~ N(0, alpha_prior_var).
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .data import Outcome, encode_group_ids
from .validation import check_matrix, check_vector


def intercept_basis(n: int) -> np.ndarray:
    """Random-intercept design: a single all-ones column."""
    return np.ones((n, 1))


def intercept_plus_treatment_basis(treatment: np.ndarray) -> np.ndarray:
    """Random intercept plus random treatment slope: columns [1, z]."""
    z = check_vector(treatment, "treatment")
    return np.column_stack([np.ones(z.shape[0]), z])


class RandomEffectsDataset:
    """Group membership and per-row basis for the random-effects term."""

    def __init__(self, group_ids, basis: np.ndarray,
                 group_labels: Optional[list] = None):
        if group_labels is None:
            self.group_indices, self.group_labels = encode_group_ids(group_ids)
        else:
            # group_ids are already dense indices into group_labels.
            self.group_indices = np.asarray(group_ids, dtype=np.int64)
            self.group_labels = list(group_labels)
        self.num_groups = len(self.group_labels)
        if self.group_indices.min() < 0 or \
                self.group_indices.max() >= self.num_groups:
            raise ValueError("group indices out of range")
        self.basis = check_matrix(basis, "rfx basis",
                                  n=self.group_indices.shape[0])
        self.num_components = self.basis.shape[1]
        self._rows_by_group = [np.flatnonzero(self.group_indices == j)
                               for j in range(self.num_groups)]

    @property
    def num_rows(self) -> int:
        return self.group_indices.shape[0]

    def rows_of_group(self, j: int) -> np.ndarray:
        return self._rows_by_group[j]


class RandomEffectsModel:
    """Sampler state for the expanded parameterization."""

    def __init__(self, num_components: int, num_groups: int,
                 alpha_prior_var: float = 1.0,
                 variance_prior_shape: float = 1.0,
                 variance_prior_scale: float = 1.0):
        if num_components < 1 or num_groups < 1:
            raise ValueError("need at least one component and one group")
        self.num_components = int(num_components)
        self.num_groups = int(num_groups)
        self.alpha_prior_var = float(alpha_prior_var)
        self.variance_prior_shape = float(variance_prior_shape)
        self.variance_prior_scale = float(variance_prior_scale)
        self.xi = np.zeros((num_components, num_groups))
        self.alpha = np.ones(num_components)
        self.variance_components = np.ones(num_components)

    @property
    def beta(self) -> np.ndarray:
        """(k, L) group effects alpha ⊙ xi_j."""
        return self.alpha[:, None] * self.xi

    def predict(self, dataset: RandomEffectsDataset) -> np.ndarray:
        effects = self.beta[:, dataset.group_indices].T  # (n, k)
        return np.einsum("ij,ij->i", effects, dataset.basis)

    def sample_one_iteration(self, dataset: RandomEffectsDataset,
                             outcome: Outcome, rng: np.random.Generator,
                             sigma2: float,
                             variance_weights: Optional[np.ndarray] = None) -> None:
        """One Gibbs sweep: xi per group, then alpha, then variance components.

        The outcome residual must include the current random-effects term
        (the caller adds the model's prediction back before the sweep and
        subtracts the new prediction afterwards).
        """
        r = outcome.residual
        w = dataset.basis
        k = self.num_components
        inv_var = (np.ones(r.shape[0]) if variance_weights is None
                   else 1.0 / variance_weights) / sigma2

        # xi_j | alpha, sigma2_c: Gaussian with design u_i = alpha ⊙ w_i.
        u = w * self.alpha[None, :]
        prior_prec = 1.0 / self.variance_components
        for j in range(self.num_groups):
            rows = dataset.rows_of_group(j)
            uj = u[rows]
            wj = inv_var[rows]
            P = np.diag(prior_prec) + (uj * wj[:, None]).T @ uj
            b = uj.T @ (wj * r[rows])
            self.xi[:, j] = _sample_gaussian(P, b, rng)

        # alpha | xi, sigma2: Gaussian with design t_i = xi_{g(i)} ⊙ w_i.
        t = self.xi[:, dataset.group_indices].T * w
        P = np.eye(k) / self.alpha_prior_var + (t * inv_var[:, None]).T @ t
        b = t.T @ (inv_var * r)
        self.alpha = _sample_gaussian(P, b, rng)

        # sigma2_c | xi: conjugate inverse gamma over the raw coefficients.
        shape = self.variance_prior_shape + 0.5 * self.num_groups
        scale = self.variance_prior_scale + 0.5 * np.sum(self.xi ** 2, axis=1)
        self.variance_components = scale / rng.gamma(shape, size=k)

    def state_dict(self) -> dict:
        return {
            "xi": self.xi.tolist(),
            "alpha": self.alpha.tolist(),
            "variance_components": self.variance_components.tolist(),
            "alpha_prior_var": self.alpha_prior_var,
            "variance_prior_shape": self.variance_prior_shape,
            "variance_prior_scale": self.variance_prior_scale,
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "RandomEffectsModel":
        xi = np.asarray(d["xi"], dtype=np.float64)
        model = cls(xi.shape[0], xi.shape[1],
                    alpha_prior_var=float(d["alpha_prior_var"]),
                    variance_prior_shape=float(d["variance_prior_shape"]),
                    variance_prior_scale=float(d["variance_prior_scale"]))
        model.xi = xi
        model.alpha = np.asarray(d["alpha"], dtype=np.float64)
        model.variance_components = np.asarray(d["variance_components"],
                                               dtype=np.float64)
        return model


def _sample_gaussian(precision: np.ndarray, linear: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    """Draw from N(P^-1 b, P^-1) via the Cholesky factor of P."""
    chol = np.linalg.cholesky(precision)
    mean = np.linalg.solve(precision, linear)
    z = rng.standard_normal(linear.shape[0])
    return mean + solve_triangular(chol.T, z, lower=False)


class RandomEffectsSamples:
    """Retained draws: beta has dims (components, groups, samples)."""

    def __init__(self, num_components: int, num_groups: int,
                 group_labels: Optional[list] = None):
        self.num_components = int(num_components)
        self.num_groups = int(num_groups)
        self.group_labels = group_labels if group_labels is not None else \
            list(range(num_groups))
        self._beta = []
        self._xi = []
        self._alpha = []
        self._variance = []

    def add_sample(self, model: RandomEffectsModel) -> None:
        self._beta.append(model.beta.copy())
        self._xi.append(model.xi.copy())
        self._alpha.append(model.alpha.copy())
        self._variance.append(model.variance_components.copy())

    @property
    def num_samples(self) -> int:
        return len(self._beta)

    def extend(self, other: "RandomEffectsSamples") -> None:
        """Append another container's samples (e.g. to pool chains)."""
        if other.num_components != self.num_components or \
                other.num_groups != self.num_groups:
            raise ValueError("random-effects containers have different shapes")
        self._beta.extend(b.copy() for b in other._beta)
        self._xi.extend(x.copy() for x in other._xi)
        self._alpha.extend(a.copy() for a in other._alpha)
        self._variance.extend(v.copy() for v in other._variance)

    @property
    def beta_samples(self) -> np.ndarray:
        return np.stack(self._beta, axis=-1) if self._beta else \
            np.zeros((self.num_components, self.num_groups, 0))

    @property
    def xi_samples(self) -> np.ndarray:
        return np.stack(self._xi, axis=-1) if self._xi else \
            np.zeros((self.num_components, self.num_groups, 0))

    @property
    def alpha_samples(self) -> np.ndarray:
        return np.stack(self._alpha, axis=-1) if self._alpha else \
            np.zeros((self.num_components, 0))

    @property
    def variance_samples(self) -> np.ndarray:
        return np.stack(self._variance, axis=-1) if self._variance else \
            np.zeros((self.num_components, 0))

    def predict(self, group_indices: np.ndarray, basis: np.ndarray) -> np.ndarray:
        """(n, num_samples) random-effects predictions for given rows."""
        beta = self.beta_samples  # (k, L, S)
        effects = beta[:, group_indices, :]           # (k, n, S)
        return np.einsum("kns,nk->ns", effects, basis)
