"""Model-agnostic attributions for single predictions and whole features.

``shapley_sampling`` estimates Shapley values by Monte Carlo over feature
orderings: for each sampled ordering and background row, features flip one
at a time from the background value to the instance value and the
prediction deltas are credited to the flipped feature. The per-ordering
deltas telescope, so the attributions sum exactly to prediction minus base
value, and their spread gives a standard error per feature.

Attributions are in model output units: positive-class probability for
classification tasks, index units for regression. Feature order follows
the encoder (numerics first, then categoricals).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dataset as ds
from . import metrics
from .errors import ConfigError, ShapeError, UnsupportedModelError
from .harness import FittedModel
from .numcore import Rng


def _feature_names(batch: ds.EncodedBatch) -> tuple[str, ...]:
    return tuple(batch.numeric_names) + tuple(batch.categorical_names)


@dataclass
class Attribution:
    feature_names: tuple[str, ...]
    values: np.ndarray  # (k,) mean contribution per feature
    stderr: np.ndarray  # (k,) standard error of that mean
    base_value: float  # mean prediction over the sampled background rows
    prediction: float
    n_permutations: int

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "values": [float(v) for v in self.values],
            "stderr": [float(v) for v in self.stderr],
            "base_value": self.base_value,
            "prediction": self.prediction,
            "n_permutations": self.n_permutations,
        }


def _hybrid_batch(like: ds.EncodedBatch, num_std, num_raw, cat) -> ds.EncodedBatch:
    n = num_std.shape[0]
    return ds.EncodedBatch(
        ids=[f"hybrid_{i}" for i in range(n)],
        num_std=num_std,
        num_raw=num_raw,
        cat=cat,
        numeric_names=like.numeric_names,
        categorical_names=like.categorical_names,
        cat_cards=like.cat_cards,
    )


def shapley_sampling(
    fitted: FittedModel,
    instance: ds.EncodedBatch,
    background: ds.EncodedBatch,
    n_permutations: int = 256,
    seed: int = 0,
) -> Attribution:
    """Shapley attribution of one prediction against a background sample.

    ``instance`` must hold exactly one row. Every hybrid row for all
    orderings is scored in a single model call, so cost is
    ``n_permutations * (n_features + 1)`` predictions.
    """
    if len(instance) != 1:
        raise ShapeError(f"instance must hold exactly one row, got {len(instance)}")
    if len(background) == 0:
        raise ConfigError("background must hold at least one row")
    if n_permutations < 1:
        raise ConfigError("n_permutations must be >= 1")
    if instance.numeric_names != background.numeric_names or (
        instance.categorical_names != background.categorical_names
    ):
        raise ConfigError("instance and background use different encoders")

    k_num = instance.num_std.shape[1]
    k_cat = instance.cat.shape[1]
    k = k_num + k_cat
    m = n_permutations
    n_bg = len(background)

    order_rng = Rng(seed).child(0)
    pick_rng = Rng(seed).child(1)
    perms = np.empty((m, k), dtype=np.int64)
    rows_std = np.empty((m, k + 1, k_num))
    rows_raw = np.empty((m, k + 1, k_num))
    rows_cat = np.empty((m, k + 1, k_cat), dtype=np.int64)
    for p in range(m):
        perm = order_rng.permutation(k)
        b = int(pick_rng.integers(0, n_bg))
        cur_std = background.num_std[b].copy()
        cur_raw = background.num_raw[b].copy()
        cur_cat = background.cat[b].copy()
        rows_std[p, 0], rows_raw[p, 0], rows_cat[p, 0] = cur_std, cur_raw, cur_cat
        for i, j in enumerate(perm):
            if j < k_num:
                cur_std[j] = instance.num_std[0, j]
                cur_raw[j] = instance.num_raw[0, j]
            else:
                cur_cat[j - k_num] = instance.cat[0, j - k_num]
            rows_std[p, i + 1] = cur_std
            rows_raw[p, i + 1] = cur_raw
            rows_cat[p, i + 1] = cur_cat
        perms[p] = perm

    flat = _hybrid_batch(
        instance,
        rows_std.reshape(m * (k + 1), k_num),
        rows_raw.reshape(m * (k + 1), k_num),
        rows_cat.reshape(m * (k + 1), k_cat),
    )
    preds = fitted.predict_encoded(flat).reshape(m, k + 1)

    deltas = np.diff(preds, axis=1)  # (m, k) in visit order
    contrib = np.empty((m, k))
    contrib[np.arange(m)[:, None], perms] = deltas
    values = contrib.mean(axis=0)
    if m > 1:
        stderr = contrib.std(axis=0, ddof=1) / np.sqrt(m)
    else:
        stderr = np.zeros(k)
    return Attribution(
        feature_names=_feature_names(instance),
        values=values,
        stderr=stderr,
        base_value=float(preds[:, 0].mean()),
        prediction=float(preds[0, -1]),
        n_permutations=m,
    )


@dataclass
class PermutationImportance:
    metric: str  # "auc" (drop) or "rmse" (increase)
    baseline: float
    feature_names: tuple[str, ...]
    drops: np.ndarray  # (k, n_repeats), positive means the feature helps

    def mean_drop(self) -> dict[str, float]:
        return {
            name: float(v)
            for name, v in zip(self.feature_names, self.drops.mean(axis=1))
        }

    def ranking(self) -> list[str]:
        order = np.argsort(-self.drops.mean(axis=1), kind="mergesort")
        return [self.feature_names[i] for i in order]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "baseline": self.baseline,
            "feature_names": list(self.feature_names),
            "drops": [[float(v) for v in row] for row in self.drops],
        }


def permutation_importance(
    fitted: FittedModel,
    batch: ds.EncodedBatch,
    targets,
    n_repeats: int = 5,
    seed: int = 0,
) -> PermutationImportance:
    """Metric degradation when one feature column is shuffled.

    Classification reports the AUC drop, regression the RMSE increase;
    either way larger is more important and noise features sit near zero.
    """
    if n_repeats < 1:
        raise ConfigError("n_repeats must be >= 1")
    y = np.asarray(targets)
    if len(batch) != y.size:
        raise ShapeError(f"batch has {len(batch)} rows but {y.size} targets")
    classify = fitted.task.is_classification

    def score(preds: np.ndarray) -> float:
        if classify:
            return metrics.auc(preds, y.astype(bool))
        return float(np.sqrt(np.mean((preds - y.astype(np.float64)) ** 2)))

    baseline = score(fitted.predict_encoded(batch))
    names = _feature_names(batch)
    k_num = batch.num_std.shape[1]
    rng = Rng(seed)
    drops = np.empty((len(names), n_repeats))
    for j in range(len(names)):
        for r in range(n_repeats):
            perm = rng.child(j, r).permutation(len(batch))
            num_std = batch.num_std.copy()
            num_raw = batch.num_raw.copy()
            cat = batch.cat.copy()
            if j < k_num:
                num_std[:, j] = num_std[perm, j]
                num_raw[:, j] = num_raw[perm, j]
            else:
                cat[:, j - k_num] = cat[perm, j - k_num]
            shuffled = score(
                fitted.predict_encoded(_hybrid_batch(batch, num_std, num_raw, cat))
            )
            drops[j, r] = baseline - shuffled if classify else shuffled - baseline
    return PermutationImportance(
        metric="auc" if classify else "rmse",
        baseline=baseline,
        feature_names=names,
        drops=drops,
    )


def gain_importance(fitted: FittedModel) -> dict[str, float]:
    """Total split gain per feature; defined for tree models only."""
    if fitted.tree_model is None:
        raise UnsupportedModelError(
            f"gain importance needs a tree model, got {fitted.name!r}"
        )
    names = tuple(fitted.encoder.numeric_names) + tuple(
        fitted.encoder.categorical_names
    )
    gains = fitted.tree_model.gain_importance()
    if len(names) != gains.size:
        raise ShapeError(f"{gains.size} gains for {len(names)} features")
    return {name: float(g) for name, g in zip(names, gains)}


def dependence_export(
    fitted: FittedModel, batch: ds.EncodedBatch, feature: str, path
) -> None:
    """Write id, raw feature value and prediction per row for plotting."""
    names = _feature_names(batch)
    if feature not in names:
        raise ConfigError(f"unknown feature {feature!r}; choose from {names}")
    j = names.index(feature)
    k_num = batch.num_std.shape[1]
    if j < k_num:
        values = batch.num_raw[:, j]
    else:
        values = batch.cat[:, j - k_num]
    preds = fitted.predict_encoded(batch)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,value,pred\n")
        for rid, v, p in zip(batch.ids, values, preds):
            fh.write(f"{rid},{float(v)!r},{float(p)!r}\n")
