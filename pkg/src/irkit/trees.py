"""Decision-tree models: single Newton trees, boosting, and bagged forests.

All trees are grown by exact greedy search. Numeric splits test midpoints
between consecutive distinct values; categorical splits are either
single-category equality tests (``one_hot_threshold`` mode) or the column is
replaced by ordered target statistics before growing (``ordered_target``
mode). Ordered statistics encode row i using only rows before it in a seeded
permutation, so a row's own label can never leak into its code:

    code_i = (sum of y over earlier same-category rows + a * prior)
             / (count of earlier same-category rows + a)

with prior the global target mean and a = 1. Inference uses the full-sample
statistic per category; unseen categories fall back to the prior.

Split gain is the Newton objective reduction
0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)); a node splits only on
strictly positive gain. Ties break to the lowest feature index, then the
lowest threshold. Leaf values are the damped Newton step -G/(H+lam).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .numcore import Rng, _sigmoid_np


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DomainError("feature matrix contains non-finite values")
    return X


# ---------------------------------------------------------------------------
# single trees


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 6
    min_leaf: int = 20
    lam: float = 1.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")


@dataclass
class Tree:
    """Flat node arrays; feature -1 marks a leaf, value holds its output."""

    feature: np.ndarray
    threshold: np.ndarray
    is_cat: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    count: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _check_matrix(X)
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                break
            r = rows[active]
            na = node[active]
            x = X[r, f[active]]
            thr = self.threshold[na]
            go_left = np.where(self.is_cat[na], x == thr, x <= thr)
            node[active] = np.where(go_left, self.left[na], self.right[na])
        return self.value[node]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "is_cat": self.is_cat.astype(int).tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "count": self.count.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            is_cat=np.asarray(d["is_cat"], dtype=bool),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
            gain=np.asarray(d["gain"], dtype=np.float64),
            count=np.asarray(d["count"], dtype=np.int64),
        )


def _best_numeric(x, g, h, min_leaf, lam, parent_score):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    gs = np.cumsum(g[order])
    hs = np.cumsum(h[order])
    m = x.size
    G, H = gs[-1], hs[-1]
    pos = np.arange(m - 1)
    valid = (xs[:-1] < xs[1:]) & (pos + 1 >= min_leaf) & (m - pos - 1 >= min_leaf)
    if not valid.any():
        return None
    GL, HL = gs[:-1][valid], hs[:-1][valid]
    GR, HR = G - GL, H - HL
    dl, dr = HL + lam, HR + lam
    ok = (dl > 0) & (dr > 0)
    gains = np.full(GL.shape, -np.inf)
    gains[ok] = 0.5 * (GL[ok] ** 2 / dl[ok] + GR[ok] ** 2 / dr[ok] - parent_score)
    k = int(np.argmax(gains))  # first max: lowest threshold wins ties
    if not gains[k] > 0.0:
        return None
    p = pos[valid][k]
    thr = 0.5 * (xs[p] + xs[p + 1])
    return gains[k], thr, order[: p + 1]


def _best_categorical(x, g, h, min_leaf, lam, parent_score):
    codes = x.astype(np.int64)
    if not np.all(codes == x):
        raise DomainError("categorical column holds non-integer codes")
    m = x.size
    G, H = g.sum(), h.sum()
    nc = np.bincount(codes)
    Gc = np.bincount(codes, weights=g, minlength=nc.size)
    Hc = np.bincount(codes, weights=h, minlength=nc.size)
    dl, dr = Hc + lam, (H - Hc) + lam
    valid = (nc >= min_leaf) & (m - nc >= min_leaf) & (dl > 0) & (dr > 0)
    if not valid.any():
        return None
    gains = np.full(nc.shape, -np.inf)
    gains[valid] = 0.5 * (
        Gc[valid] ** 2 / dl[valid]
        + (G - Gc[valid]) ** 2 / dr[valid]
        - parent_score
    )
    c = int(np.argmax(gains))  # first max: lowest category code wins ties
    if not gains[c] > 0.0:
        return None
    return gains[c], float(c), np.flatnonzero(codes == c)


def _grow(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    *,
    max_depth: int,
    min_leaf: int,
    lam: float,
    cat_mask: np.ndarray,
    mtry: int | None = None,
    rng: Rng | None = None,
) -> tuple[Tree, np.ndarray]:
    """Grow one tree; returns it plus each row's leaf node id."""
    n, p = X.shape
    feature = [-1]
    threshold = [np.nan]
    is_cat = [False]
    left = [-1]
    right = [-1]
    value = [0.0]
    gain = [0.0]
    count = [n]
    leaf_of = np.zeros(n, dtype=np.int64)

    stack: list[tuple[np.ndarray, int, int]] = [(np.arange(n), 0, 0)]
    while stack:
        rows, depth, nid = stack.pop()
        gs = float(g[rows].sum())
        hs = float(h[rows].sum())
        count[nid] = rows.size

        best = None
        if depth < max_depth and rows.size >= 2 * min_leaf and hs + lam > 0:
            parent_score = gs * gs / (hs + lam)
            if mtry is not None and mtry < p:
                feats = np.sort(rng.choice(p, size=mtry, replace=False))
            else:
                feats = range(p)
            for f in feats:
                x = X[rows, f]
                finder = _best_categorical if cat_mask[f] else _best_numeric
                cand = finder(x, g[rows], h[rows], min_leaf, lam, parent_score)
                if cand is not None and (best is None or cand[0] > best[0]):
                    best = (cand[0], int(f), cand[1], cand[2])

        if best is None:
            value[nid] = -gs / (hs + lam) if hs + lam > 0 else 0.0
            leaf_of[rows] = nid
            continue

        node_gain, f, thr, left_local = best
        left_rows = rows[left_local]
        in_left = np.zeros(rows.size, dtype=bool)
        in_left[left_local] = True
        right_rows = rows[~in_left]

        lid = len(feature)
        rid = lid + 1
        for _ in range(2):
            feature.append(-1)
            threshold.append(np.nan)
            is_cat.append(False)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            gain.append(0.0)
            count.append(0)
        feature[nid] = f
        threshold[nid] = float(thr)
        is_cat[nid] = bool(cat_mask[f])
        left[nid] = lid
        right[nid] = rid
        gain[nid] = float(node_gain)
        stack.append((right_rows, depth + 1, rid))
        stack.append((left_rows, depth + 1, lid))

    tree = Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        is_cat=np.asarray(is_cat, dtype=bool),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        gain=np.asarray(gain, dtype=np.float64),
        count=np.asarray(count, dtype=np.int64),
    )
    return tree, leaf_of


def fit_tree(
    X,
    grad,
    hess,
    config: TreeConfig = TreeConfig(),
    cat_idx: tuple[int, ...] = (),
) -> Tree:
    """One Newton tree on per-row gradients and Hessians.

    Plain least-squares regression on targets y is the special case
    grad=-y, hess=1, lam=0: leaves then hold in-leaf target means and gain
    is the usual variance reduction.
    """
    X = _check_matrix(X)
    g = np.asarray(grad, dtype=np.float64).ravel()
    h = np.asarray(hess, dtype=np.float64).ravel()
    if g.shape != (X.shape[0],) or h.shape != (X.shape[0],):
        raise ShapeError(f"grad/hess must be ({X.shape[0]},)")
    cat_mask = np.zeros(X.shape[1], dtype=bool)
    for j in cat_idx:
        cat_mask[j] = True
    tree, _ = _grow(
        X,
        g,
        h,
        max_depth=config.max_depth,
        min_leaf=config.min_leaf,
        lam=config.lam,
        cat_mask=cat_mask,
    )
    return tree


# ---------------------------------------------------------------------------
# ordered target statistics


def ordered_target_encode(
    values,
    y,
    permutation,
    prior_weight: float = 1.0,
) -> tuple[np.ndarray, dict[int, float], float]:
    """Leak-free target codes plus the full-sample inference map.

    Row i's code uses only rows strictly earlier in ``permutation``; the
    first occurrence of any category receives exactly the prior.
    """
    codes = np.asarray(values)
    if not np.all(codes == codes.astype(np.int64)):
        raise DomainError("categorical values must be integer codes")
    codes = codes.astype(np.int64)
    yv = np.asarray(y, dtype=np.float64).ravel()
    perm = np.asarray(permutation, dtype=np.int64)
    if codes.shape != yv.shape or perm.shape != yv.shape:
        raise ShapeError("values, y and permutation must share one length")
    if prior_weight <= 0:
        raise ConfigError(f"prior_weight must be > 0, got {prior_weight}")

    prior = float(yv.mean())
    a = float(prior_weight)
    out = np.empty(yv.size, dtype=np.float64)
    run_sum: dict[int, float] = {}
    run_cnt: dict[int, int] = {}
    for i in perm:
        c = int(codes[i])
        s = run_sum.get(c, 0.0)
        k = run_cnt.get(c, 0)
        out[i] = (s + a * prior) / (k + a)
        run_sum[c] = s + yv[i]
        run_cnt[c] = k + 1
    infer = {
        c: (run_sum[c] + a * prior) / (run_cnt[c] + a) for c in sorted(run_cnt)
    }
    return out, infer, prior


def _apply_cat_map(column: np.ndarray, mapping: dict[int, float], prior: float) -> np.ndarray:
    out = np.full(column.shape, prior, dtype=np.float64)
    for c, v in mapping.items():
        out[column == c] = v
    return out


# ---------------------------------------------------------------------------
# gradient boosting


_CAT_MODES = ("one_hot_threshold", "ordered_target")
_OBJECTIVES = ("logistic", "squared")


@dataclass(frozen=True)
class GbdtConfig:
    n_trees: int = 1000
    max_depth: int = 8
    learning_rate: float = 0.05
    min_leaf: int = 20
    lam: float = 1.0
    early_stopping_patience: int = 50
    cat_mode: str = "one_hot_threshold"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.cat_mode not in _CAT_MODES:
            raise ConfigError(f"cat_mode must be one of {_CAT_MODES}, got {self.cat_mode!r}")
        TreeConfig(self.max_depth, self.min_leaf, self.lam)


def _logistic_loss(margin: np.ndarray, y: np.ndarray) -> float:
    # stable binary cross-entropy on logits
    return float(np.mean(np.maximum(margin, 0) - margin * y + np.log1p(np.exp(-np.abs(margin)))))


def _squared_loss(margin: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((margin - y) ** 2))


@dataclass
class GbdtModel:
    objective: str
    config: GbdtConfig
    base_score: float
    trees: list[Tree]
    cat_idx: tuple[int, ...]
    cat_maps: dict[int, dict[int, float]] = field(default_factory=dict)
    cat_priors: dict[int, float] = field(default_factory=dict)
    n_features: int = 0
    history: dict = field(default_factory=dict)
    best_round: int = -1
    stopped_early: bool = False

    def encode(self, X) -> np.ndarray:
        """Replace categorical codes by target statistics in ordered mode."""
        X = _check_matrix(X)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} columns, got {X.shape[1]}")
        if self.config.cat_mode != "ordered_target":
            return X
        X = X.copy()
        for j in self.cat_idx:
            X[:, j] = _apply_cat_map(
                X[:, j].astype(np.int64), self.cat_maps[j], self.cat_priors[j]
            )
        return X

    def predict_margin(self, X) -> np.ndarray:
        Xe = self.encode(X)
        margin = np.full(Xe.shape[0], self.base_score)
        for tree in self.trees:
            margin += self.config.learning_rate * tree.predict(Xe)
        return margin

    def predict(self, X) -> np.ndarray:
        """Probability of the positive class (logistic) or the value (squared)."""
        margin = self.predict_margin(X)
        if self.objective == "logistic":
            return _sigmoid_np(margin)
        return margin

    def gain_importance(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        for tree in self.trees:
            internal = tree.feature >= 0
            np.add.at(out, tree.feature[internal], tree.gain[internal])
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "gbdt",
                "objective": self.objective,
                "config": {
                    "n_trees": self.config.n_trees,
                    "max_depth": self.config.max_depth,
                    "learning_rate": self.config.learning_rate,
                    "min_leaf": self.config.min_leaf,
                    "lam": self.config.lam,
                    "early_stopping_patience": self.config.early_stopping_patience,
                    "cat_mode": self.config.cat_mode,
                    "seed": self.config.seed,
                },
                "base_score": self.base_score,
                "cat_idx": list(self.cat_idx),
                "cat_maps": {
                    str(j): {str(c): v for c, v in m.items()}
                    for j, m in self.cat_maps.items()
                },
                "cat_priors": {str(j): v for j, v in self.cat_priors.items()},
                "n_features": self.n_features,
                "best_round": self.best_round,
                "stopped_early": self.stopped_early,
                "trees": [t.to_dict() for t in self.trees],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        d = json.loads(text)
        if d.get("kind") != "gbdt":
            raise ConfigError(f"not a gbdt payload: kind={d.get('kind')!r}")
        return cls(
            objective=d["objective"],
            config=GbdtConfig(**d["config"]),
            base_score=d["base_score"],
            trees=[Tree.from_dict(t) for t in d["trees"]],
            cat_idx=tuple(d["cat_idx"]),
            cat_maps={
                int(j): {int(c): v for c, v in m.items()}
                for j, m in d["cat_maps"].items()
            },
            cat_priors={int(j): v for j, v in d["cat_priors"].items()},
            n_features=d["n_features"],
            best_round=d["best_round"],
            stopped_early=d["stopped_early"],
        )


def fit_gbdt(
    X,
    y,
    objective: str,
    config: GbdtConfig = GbdtConfig(),
    cat_idx: tuple[int, ...] = (),
    X_val=None,
    y_val=None,
) -> GbdtModel:
    """Newton boosting with optional validation-loss early stopping.

    With a validation set, training stops once the validation loss has not
    improved for ``early_stopping_patience`` rounds and the model keeps only
    the trees up to the best round.
    """
    if objective not in _OBJECTIVES:
        raise ConfigError(f"objective must be one of {_OBJECTIVES}, got {objective!r}")
    X = _check_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape != (X.shape[0],):
        raise ShapeError(f"targets must be ({X.shape[0]},), got {y.shape}")
    n, p = X.shape
    rng = Rng(config.seed)

    model = GbdtModel(
        objective=objective,
        config=config,
        base_score=0.0,
        trees=[],
        cat_idx=tuple(int(j) for j in cat_idx),
        n_features=p,
    )

    cat_mask = np.zeros(p, dtype=bool)
    if config.cat_mode == "ordered_target":
        X_fit = X.copy()
        for j in model.cat_idx:
            perm = rng.child(j).permutation(n)
            codes, infer, prior = ordered_target_encode(X[:, j], y, perm)
            X_fit[:, j] = codes
            model.cat_maps[j] = infer
            model.cat_priors[j] = prior
    else:
        X_fit = X
        for j in model.cat_idx:
            cat_mask[j] = True

    if objective == "logistic":
        p_bar = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        model.base_score = float(np.log(p_bar / (1 - p_bar)))
        loss_fn = _logistic_loss
    else:
        model.base_score = float(y.mean())
        loss_fn = _squared_loss

    have_val = X_val is not None
    if have_val:
        y_val = np.asarray(y_val, dtype=np.float64).ravel()
        X_val_enc = model.encode(X_val)
        margin_val = np.full(X_val_enc.shape[0], model.base_score)

    margin = np.full(n, model.base_score)
    train_loss: list[float] = []
    val_loss: list[float] = []
    best = np.inf
    best_round = -1

    for t in range(config.n_trees):
        if objective == "logistic":
            prob = _sigmoid_np(margin)
            g = prob - y
            h = prob * (1 - prob)
        else:
            g = margin - y
            h = np.ones(n)
        tree, leaf_of = _grow(
            X_fit,
            g,
            h,
            max_depth=config.max_depth,
            min_leaf=config.min_leaf,
            lam=config.lam,
            cat_mask=cat_mask,
        )
        model.trees.append(tree)
        margin += config.learning_rate * tree.value[leaf_of]
        train_loss.append(loss_fn(margin, y))

        if have_val:
            margin_val += config.learning_rate * tree.predict(X_val_enc)
            lv = loss_fn(margin_val, y_val)
            val_loss.append(lv)
            if lv < best:
                best = lv
                best_round = t
            elif t - best_round >= config.early_stopping_patience:
                model.stopped_early = True
                break

    model.best_round = best_round if have_val else len(model.trees) - 1
    if have_val:
        model.trees = model.trees[: model.best_round + 1]
    model.history = {"train_loss": train_loss, "val_loss": val_loss}
    return model


# ---------------------------------------------------------------------------
# random forest


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 16
    min_leaf: int = 5
    mtry: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        TreeConfig(self.max_depth, self.min_leaf, 0.0)


@dataclass
class ForestModel:
    kind: str  # "classify" or "regress"
    config: ForestConfig
    trees: list[Tree]
    n_features: int

    def predict(self, X) -> np.ndarray:
        """Mean over trees: class fraction (classify) or value (regress)."""
        X = _check_matrix(X)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} columns, got {X.shape[1]}")
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def gain_importance(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        for tree in self.trees:
            internal = tree.feature >= 0
            np.add.at(out, tree.feature[internal], tree.gain[internal])
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "forest",
                "task_kind": self.kind,
                "config": {
                    "n_trees": self.config.n_trees,
                    "max_depth": self.config.max_depth,
                    "min_leaf": self.config.min_leaf,
                    "mtry": self.config.mtry,
                    "seed": self.config.seed,
                },
                "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        d = json.loads(text)
        if d.get("kind") != "forest":
            raise ConfigError(f"not a forest payload: kind={d.get('kind')!r}")
        return cls(
            kind=d["task_kind"],
            config=ForestConfig(**d["config"]),
            trees=[Tree.from_dict(t) for t in d["trees"]],
            n_features=d["n_features"],
        )


def fit_forest(
    X,
    y,
    kind: str,
    config: ForestConfig = ForestConfig(),
    cat_idx: tuple[int, ...] = (),
) -> ForestModel:
    """Bootstrap-aggregated trees with per-node feature subsampling.

    Trees fit targets directly (grad=-y, hess=1, lam=0), so leaves hold
    in-leaf target means; averaging them gives a probability for ``classify``
    and a value for ``regress``.
    """
    if kind not in ("classify", "regress"):
        raise ConfigError(f"kind must be classify or regress, got {kind!r}")
    X = _check_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape != (X.shape[0],):
        raise ShapeError(f"targets must be ({X.shape[0]},), got {y.shape}")
    n, p = X.shape
    cat_mask = np.zeros(p, dtype=bool)
    for j in cat_idx:
        cat_mask[j] = True
    if config.mtry is not None:
        mtry = config.mtry
        if not 1 <= mtry <= p:
            raise ConfigError(f"mtry must be in [1, {p}], got {mtry}")
    else:
        mtry = int(np.ceil(np.sqrt(p))) if kind == "classify" else max(1, round(p / 3))

    rng = Rng(config.seed)
    trees = []
    for t in range(config.n_trees):
        tree_rng = rng.child(t)
        boot = tree_rng.integers(0, n, size=n)
        tree, _ = _grow(
            X[boot],
            -y[boot],
            np.ones(n),
            max_depth=config.max_depth,
            min_leaf=config.min_leaf,
            lam=0.0,
            cat_mask=cat_mask,
            mtry=mtry,
            rng=tree_rng,
        )
        trees.append(tree)
    return ForestModel(kind=kind, config=config, trees=trees, n_features=p)
