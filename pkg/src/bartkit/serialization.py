"""Model artifact serialization: canonical JSON with deterministic bytes.

The artifact is a single UTF-8 JSON document with top-level keys
{schema_version, model_kind, forests, traces, rfx, standardization,
preprocessing, params}. Serialization sorts object keys and renders floats
with 17 significant digits, so serialize -> parse -> serialize is
byte-identical and equal models produce equal bytes.
"""

from __future__ import annotations

import json
import math
from typing import Optional

import numpy as np

from .errors import SerializationError
from .random_effects import RandomEffectsModel, RandomEffectsSamples
from .tree import DecisionTree, Forest, ForestSamples

SCHEMA_VERSION = "1.0"
TOP_LEVEL_KEYS = ("schema_version", "model_kind", "forests", "traces", "rfx",
                  "standardization", "preprocessing", "params")


def dumps_canonical(obj) -> str:
    """Render a JSON document with sorted keys and .17g float formatting."""
    pieces: list[str] = []
    _write(obj, pieces)
    return "".join(pieces)


def _write(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise SerializationError(f"cannot serialize non-finite number {v!r}")
        out.append(format(v, ".17g"))
    elif isinstance(obj, dict):
        out.append("{")
        first = True
        for key in sorted(obj):
            if not isinstance(key, str):
                raise SerializationError(f"object keys must be strings, got {key!r}")
            if not first:
                out.append(",")
            first = False
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _write(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _write(item, out)
        out.append("]")
    elif isinstance(obj, np.ndarray):
        _write(obj.tolist(), out)
    else:
        raise SerializationError(f"cannot serialize object of type {type(obj).__name__}")


def parse_artifact(text: str) -> dict:
    """Parse and structurally validate a model artifact document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SerializationError(f"artifact is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SerializationError("artifact must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SerializationError(
            f"unsupported schema_version {version!r}; this build reads "
            f"{SCHEMA_VERSION!r}")
    for key in TOP_LEVEL_KEYS:
        if key not in doc:
            raise SerializationError(f"artifact is missing key {key!r}")
    if doc.get("model_kind") not in ("bart", "bcf"):
        raise SerializationError(
            f"unknown model_kind {doc.get('model_kind')!r}")
    return doc


# -- forest containers --------------------------------------------------------


def forest_samples_to_dict(fs: ForestSamples) -> dict:
    return {
        "num_trees": fs.num_trees,
        "leaf_dimension": fs.leaf_dimension,
        "requires_basis": fs.requires_basis,
        "is_exponentiated": fs.is_exponentiated,
        "samples": [[tree.to_records() for tree in forest.trees]
                    for forest in fs.forests],
    }


def forest_samples_from_dict(d: dict) -> ForestSamples:
    try:
        fs = ForestSamples(int(d["num_trees"]), int(d["leaf_dimension"]),
                           bool(d["requires_basis"]), bool(d["is_exponentiated"]))
        samples = d["samples"]
    except KeyError as exc:
        raise SerializationError(f"forest container missing key {exc}") from None
    for trees in samples:
        if len(trees) != fs.num_trees:
            raise SerializationError(
                f"forest sample has {len(trees)} trees, expected {fs.num_trees}")
        forest = Forest(fs.num_trees, fs.leaf_dimension, fs.requires_basis,
                        fs.is_exponentiated)
        forest.trees = [DecisionTree.from_records(recs, fs.leaf_dimension)
                        for recs in trees]
        fs.forests.append(forest)
    return fs


def forest_at_index(fs: ForestSamples, index: int) -> Forest:
    if not 0 <= index < fs.num_samples:
        raise SerializationError(
            f"sample index {index} out of range [0, {fs.num_samples})")
    return fs.forests[index].copy()


# -- random effects -----------------------------------------------------------


def rfx_to_dict(samples: RandomEffectsSamples, prior: dict) -> dict:
    return {
        "num_components": samples.num_components,
        "num_groups": samples.num_groups,
        "group_labels": list(samples.group_labels),
        "beta_samples": samples.beta_samples.tolist(),
        "xi_samples": samples.xi_samples.tolist(),
        "alpha_samples": samples.alpha_samples.tolist(),
        "variance_samples": samples.variance_samples.tolist(),
        "prior": dict(prior),
    }


def rfx_samples_from_dict(d: dict) -> RandomEffectsSamples:
    out = RandomEffectsSamples(int(d["num_components"]), int(d["num_groups"]),
                               list(d["group_labels"]))
    beta = np.asarray(d["beta_samples"], dtype=np.float64)
    xi = np.asarray(d["xi_samples"], dtype=np.float64)
    alpha = np.asarray(d["alpha_samples"], dtype=np.float64)
    var = np.asarray(d["variance_samples"], dtype=np.float64)
    expect = (out.num_components, out.num_groups)
    if beta.shape[:2] != expect or xi.shape[:2] != expect:
        raise SerializationError("random-effects sample dimensions are inconsistent")
    for s in range(beta.shape[2]):
        out._beta.append(beta[:, :, s])
        out._xi.append(xi[:, :, s])
        out._alpha.append(alpha[:, s])
        out._variance.append(var[:, s])
    return out


def rfx_model_at_index(d: dict, index: int) -> RandomEffectsModel:
    """Rebuild the sampler state from the traces at one retained sample."""
    samples = rfx_samples_from_dict(d)
    if not 0 <= index < samples.num_samples:
        raise SerializationError(
            f"sample index {index} out of range [0, {samples.num_samples})")
    prior = d.get("prior", {})
    model = RandomEffectsModel(
        samples.num_components, samples.num_groups,
        alpha_prior_var=float(prior.get("alpha_prior_var", 1.0)),
        variance_prior_shape=float(prior.get("variance_prior_shape", 1.0)),
        variance_prior_scale=float(prior.get("variance_prior_scale", 1.0)))
    model.xi = samples.xi_samples[:, :, index].copy()
    model.alpha = samples.alpha_samples[:, index].copy()
    model.variance_components = samples.variance_samples[:, index].copy()
    return model


# -- warm start ---------------------------------------------------------------


def warm_start_state(doc: dict, sample_index: Optional[int] = None) -> dict:
    """Extract per-forest snapshots, sigma2, leaf scales, and the
    random-effects state at one retained sample of a parsed artifact.

    A negative or None index selects the last retained sample.
    """
    forests = {name: forest_samples_from_dict(fd)
               for name, fd in doc["forests"].items()}
    counts = {fs.num_samples for fs in forests.values()}
    if len(counts) > 1:
        raise SerializationError("forest containers disagree on sample count")
    num_samples = counts.pop() if counts else 0
    if num_samples == 0:
        raise SerializationError("artifact has no retained samples to resume from")
    index = num_samples - 1 if sample_index is None else int(sample_index)
    if index < 0:
        index += num_samples
    state = {"index": index,
             "forests": {name: forest_at_index(fs, index)
                         for name, fs in forests.items()}}
    traces = doc.get("traces", {})
    for name, values in traces.items():
        if isinstance(values, list) and len(values) == num_samples:
            state[name] = float(values[index])
    if doc.get("rfx"):
        state["rfx_model"] = rfx_model_at_index(doc["rfx"], index)
    return state
