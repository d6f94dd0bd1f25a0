"""Training loops and the model-by-task experiment matrix.

Loss pairing is fixed by task kind: classification heads train with softmax
cross-entropy, regression heads with mean squared error. Optimizer and
learning rate are configurable; the shipped defaults are AdamW at 1e-3 for
classification and SGD at 1e-4 for regression. Regression targets are
z-scored internally during training and predictions are mapped back, so
optimizer settings are comparable across target scales.

``run_experiment`` drives the full pipeline per task: exclusions, split,
encoder fit on Train only, model fits with validation early stopping, and
evaluation artifacts (metrics.csv, ROC and scatter points, subgroup
summaries, a markdown report). Fitted models are cached on disk keyed by a
fingerprint of data ids, task, model family and configuration, so reruns
with identical inputs reuse identical artifacts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import dataset as ds
from . import metrics, nets, trees
from .errors import ConfigError, NumericFault, UndefinedMetricError
from .numcore import Rng, Tensor, backward

# ---------------------------------------------------------------------------
# losses


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy; labels are int class ids."""
    y = np.asarray(labels, dtype=np.int64).ravel()
    n = y.size
    lse = logits.logsumexp(axis=-1).reshape(n)
    picked = logits[np.arange(n), y]
    return (lse - picked).mean()


def mse(pred: Tensor, targets) -> Tensor:
    d = pred.reshape(-1) - Tensor(np.asarray(targets, dtype=np.float64).ravel())
    return (d * d).mean()


# ---------------------------------------------------------------------------
# optimizers


class Sgd:
    """Plain gradient descent with optional decoupled weight decay."""

    def __init__(self, params, lr: float, weight_decay: float = 0.0):
        if not lr > 0:
            raise ConfigError(f"lr must be > 0, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                continue
            p.value -= self.lr * (p.grad + self.weight_decay * p.value)


class AdamW:
    """Adam moments with decoupled weight decay."""

    def __init__(
        self,
        params,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        if not lr > 0:
            raise ConfigError(f"lr must be > 0, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / b1c
            v_hat = self.v[i] / b2c
            p.value -= self.lr * (
                m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.value
            )


_OPTIMIZERS = {"sgd": Sgd, "adamw": AdamW}


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 256
    optimizer: str = "adamw"
    lr: float = 1e-3
    weight_decay: float = 0.0
    patience: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.optimizer not in _OPTIMIZERS:
            raise ConfigError(
                f"optimizer must be one of {tuple(_OPTIMIZERS)}, got {self.optimizer!r}"
            )
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")

    @classmethod
    def for_classification(cls, **kw) -> "TrainConfig":
        kw.setdefault("optimizer", "adamw")
        kw.setdefault("lr", 1e-3)
        return cls(**kw)

    @classmethod
    def for_regression(cls, **kw) -> "TrainConfig":
        kw.setdefault("optimizer", "sgd")
        kw.setdefault("lr", 1e-4)
        return cls(**kw)


@dataclass
class TrainResult:
    net: nets.Net
    task_kind: str  # "classify" | "regress"
    history: dict
    best_epoch: int
    stopped_early: bool
    y_mean: float = 0.0
    y_std: float = 1.0

    def predict(self, num, cat) -> np.ndarray:
        out = self.net.predict(num, cat)
        if self.task_kind == "regress":
            return out * self.y_std + self.y_mean
        return out


def _snapshot(net: nets.Net) -> list[np.ndarray]:
    return [p.value.copy() for p in net.parameters()]


def _restore(net: nets.Net, snap: list[np.ndarray]) -> None:
    for p, v in zip(net.parameters(), snap):
        p.value = v.copy()


def train(
    net: nets.Net,
    num_tr,
    cat_tr,
    y_tr,
    num_va,
    cat_va,
    y_va,
    task_kind: str,
    config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Minibatch training with validation early stopping.

    Classification tracks validation AUC (higher is better); regression
    tracks validation RMSE in original units. The parameters from the best
    epoch are restored before returning. Non-finite losses abort.
    """
    if task_kind not in ("classify", "regress"):
        raise ConfigError(f"task_kind must be classify or regress, got {task_kind!r}")
    num_tr = np.asarray(num_tr, dtype=np.float64)
    cat_tr = np.asarray(cat_tr, dtype=np.int64)
    y_tr = np.asarray(y_tr, dtype=np.float64).ravel()
    n = y_tr.size

    y_mean, y_std = 0.0, 1.0
    y_fit = y_tr
    if task_kind == "regress":
        y_mean = float(y_tr.mean())
        y_std = float(y_tr.std()) or 1.0
        y_fit = (y_tr - y_mean) / y_std

    opt_cls = _OPTIMIZERS[config.optimizer]
    opt = opt_cls(net.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    rng = Rng(config.seed)

    result = TrainResult(
        net=net,
        task_kind=task_kind,
        history={"train_loss": [], "val_metric": [],
                 "metric_name": "auc" if task_kind == "classify" else "rmse"},
        best_epoch=-1,
        stopped_early=False,
        y_mean=y_mean,
        y_std=y_std,
    )
    best_metric = -np.inf if task_kind == "classify" else np.inf
    best_params = _snapshot(net)

    for epoch in range(config.epochs):
        perm = rng.child(epoch).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            logits = net.forward(num_tr[idx], cat_tr[idx])
            if task_kind == "classify":
                loss = cross_entropy(logits, y_fit[idx].astype(np.int64))
            else:
                loss = mse(logits, y_fit[idx])
            lv = loss.item()
            if not np.isfinite(lv):
                raise NumericFault(f"non-finite loss at epoch {epoch}")
            backward(loss)
            opt.step()
            epoch_loss += lv * idx.size
        result.history["train_loss"].append(epoch_loss / n)

        preds = result.predict(num_va, cat_va)
        if task_kind == "classify":
            metric = metrics.auc(preds, np.asarray(y_va, dtype=bool))
            improved = metric > best_metric
        else:
            err = preds - np.asarray(y_va, dtype=np.float64).ravel()
            metric = float(np.sqrt(np.mean(err**2)))
            improved = metric < best_metric
        result.history["val_metric"].append(metric)

        if improved:
            best_metric = metric
            result.best_epoch = epoch
            best_params = _snapshot(net)
        elif epoch - result.best_epoch >= config.patience:
            result.stopped_early = True
            break

    _restore(net, best_params)
    return result


# ---------------------------------------------------------------------------
# fitted-model wrapper shared by evaluation, explanation and serving


MODEL_NAMES = (
    "linear",
    "mlp",
    "tab_transformer",
    "tab_kanet",
    "forest",
    "gbdt_onehot",
    "gbdt_ordered",
)

_NET_KINDS = {"linear", "mlp", "tab_transformer", "tab_kanet"}


@dataclass
class FittedModel:
    """One trained predictor bound to its encoder and task.

    ``predict_encoded`` returns positive-class probability for
    classification tasks and index values in original units for regression.
    """

    name: str
    task: ds.Task
    encoder: ds.FeatureEncoder
    net: nets.Net | None = None
    tree_model: object = None
    y_mean: float = 0.0
    y_std: float = 1.0

    @property
    def family(self) -> str:
        return "net" if self.net is not None else "tree"

    def predict_encoded(self, batch: ds.EncodedBatch) -> np.ndarray:
        if self.net is not None:
            out = self.net.predict(batch.num_std, batch.cat)
            if not self.task.is_classification:
                out = out * self.y_std + self.y_mean
            return out
        X, _ = batch.tree_matrix()
        return self.tree_model.predict(X)

    def predict_records(self, records) -> np.ndarray:
        return self.predict_encoded(self.encoder.encode_batch(records))


# ---------------------------------------------------------------------------
# key = value config files


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ConfigError(f"{path}:{ln}: empty key")
            if key in out:
                raise ConfigError(f"{path}:{ln}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def write_config_file(path, mapping: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in mapping:
            fh.write(f"{key} = {mapping[key]}\n")


# ---------------------------------------------------------------------------
# experiment matrix


_MASKS = {"full": ds.FULL_MASK, "simplified": ds.SIMPLIFIED_MASK}


@dataclass
class ExperimentSettings:
    """Everything run_experiment needs beyond the records themselves."""

    tasks: tuple[ds.Task, ...] = tuple(ds.Task)
    models: tuple[str, ...] = MODEL_NAMES
    seed: int = 20240817
    mask: frozenset = ds.FULL_MASK
    net_config: nets.NetConfig = nets.NetConfig()
    train_classify: TrainConfig = TrainConfig.for_classification()
    train_regress: TrainConfig = TrainConfig.for_regression()
    gbdt_config: trees.GbdtConfig = trees.GbdtConfig()
    forest_config: trees.ForestConfig = trees.ForestConfig()
    use_cache: bool = True

    def __post_init__(self):
        for m in self.models:
            if m not in MODEL_NAMES:
                raise ConfigError(f"unknown model {m!r}; choose from {MODEL_NAMES}")

    def describe(self) -> dict:
        return {
            "seed": self.seed,
            "mask": ",".join(sorted(self.mask)),
            "tasks": ",".join(t.value for t in self.tasks),
            "models": ",".join(self.models),
            "net_config": repr(self.net_config),
            "train_classify": repr(self.train_classify),
            "train_regress": repr(self.train_regress),
            "gbdt_config": repr(self.gbdt_config),
            "forest_config": repr(self.forest_config),
        }


def settings_from_mapping(cfg: dict) -> ExperimentSettings:
    """Build settings from a flat key=value mapping (see read_config_file).

    Recognised keys: seed, mask (full|simplified), tasks and models as
    comma lists, and dotted overrides like gbdt.n_trees, forest.max_depth,
    net.embed_dim, train_classify.lr or train_regress.epochs. Unknown keys
    fail loudly so typos cannot silently fall back to defaults.
    """
    base = ExperimentSettings()
    top: dict = {}
    sub: dict[str, dict] = {
        "gbdt": {}, "forest": {}, "net": {}, "train_classify": {}, "train_regress": {},
    }
    sub_types = {
        "gbdt": trees.GbdtConfig,
        "forest": trees.ForestConfig,
        "net": nets.NetConfig,
        "train_classify": TrainConfig,
        "train_regress": TrainConfig,
    }

    def coerce(key: str, raw: str, kind: type):
        try:
            if kind is bool:
                if raw not in ("true", "false"):
                    raise ValueError(raw)
                return raw == "true"
            return kind(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from exc

    for key, raw in cfg.items():
        if key == "seed":
            top["seed"] = coerce(key, raw, int)
        elif key == "use_cache":
            top["use_cache"] = coerce(key, raw, bool)
        elif key == "mask":
            if raw not in _MASKS:
                raise ConfigError(f"mask must be full or simplified, got {raw!r}")
            top["mask"] = _MASKS[raw]
        elif key == "tasks":
            try:
                top["tasks"] = tuple(ds.Task(v.strip()) for v in raw.split(","))
            except ValueError as exc:
                raise ConfigError(f"tasks: {exc}") from exc
        elif key == "models":
            top["models"] = tuple(v.strip() for v in raw.split(","))
        elif "." in key:
            group, field_name = key.split(".", 1)
            if group not in sub:
                raise ConfigError(f"unknown config group {group!r} in {key!r}")
            fields = {f.name: f.type for f in dataclasses.fields(sub_types[group])}
            if field_name not in fields:
                raise ConfigError(f"unknown field {key!r}")
            kind_name = str(fields[field_name])
            if "int" in kind_name:
                kind = int
            elif "float" in kind_name:
                kind = float
            else:
                kind = str
            sub[group][field_name] = coerce(key, raw, kind)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    return ExperimentSettings(
        **top,
        gbdt_config=dataclasses.replace(base.gbdt_config, **sub["gbdt"]),
        forest_config=dataclasses.replace(base.forest_config, **sub["forest"]),
        net_config=dataclasses.replace(base.net_config, **sub["net"]),
        train_classify=dataclasses.replace(base.train_classify, **sub["train_classify"]),
        train_regress=dataclasses.replace(base.train_regress, **sub["train_regress"]),
    )


def _fingerprint(ids: list[str], task: ds.Task, model: str, settings: ExperimentSettings) -> str:
    payload = json.dumps(
        {
            "ids": hashlib.sha256("\n".join(ids).encode()).hexdigest(),
            "task": task.value,
            "model": model,
            "seed": settings.seed,
            "mask": sorted(settings.mask),
            "net": repr(settings.net_config),
            "train_c": repr(settings.train_classify),
            "train_r": repr(settings.train_regress),
            "gbdt": repr(settings.gbdt_config),
            "forest": repr(settings.forest_config),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _fit_one(
    model_name: str,
    task: ds.Task,
    encoder: ds.FeatureEncoder,
    batches: dict[str, ds.EncodedBatch],
    targets: dict[str, np.ndarray],
    settings: ExperimentSettings,
) -> FittedModel:
    classify = task.is_classification
    tr, va = batches["train"], batches["val"]
    y_tr, y_va = targets["train"], targets["val"]

    if model_name in _NET_KINDS:
        out_dim = 2 if classify else 1
        net = nets.build_model(
            model_name, tr.num_std.shape[1], encoder.cat_cards(), out_dim,
            settings.net_config,
        )
        cfg = settings.train_classify if classify else settings.train_regress
        result = train(
            net, tr.num_std, tr.cat, y_tr, va.num_std, va.cat, y_va,
            "classify" if classify else "regress", cfg,
        )
        return FittedModel(
            name=model_name, task=task, encoder=encoder, net=net,
            y_mean=result.y_mean, y_std=result.y_std,
        )

    X_tr, cat_idx = tr.tree_matrix()
    X_va, _ = va.tree_matrix()
    if model_name in ("gbdt_onehot", "gbdt_ordered"):
        mode = "ordered_target" if model_name == "gbdt_ordered" else "one_hot_threshold"
        cfg = dataclasses.replace(settings.gbdt_config, cat_mode=mode, seed=settings.seed)
        model = trees.fit_gbdt(
            X_tr, y_tr, "logistic" if classify else "squared", cfg,
            cat_idx=tuple(cat_idx), X_val=X_va, y_val=y_va,
        )
    else:
        cfg = dataclasses.replace(settings.forest_config, seed=settings.seed)
        model = trees.fit_forest(
            X_tr, y_tr, "classify" if classify else "regress", cfg,
            cat_idx=tuple(cat_idx),
        )
    return FittedModel(name=model_name, task=task, encoder=encoder, tree_model=model)


def _cache_paths(cache_dir: str, fp: str, model_name: str) -> dict[str, str]:
    if model_name in _NET_KINDS:
        return {
            "net": os.path.join(cache_dir, f"{fp}.net.bin"),
            "meta": os.path.join(cache_dir, f"{fp}.meta.json"),
        }
    return {"tree": os.path.join(cache_dir, f"{fp}.model.json")}


def _save_cached(fitted: FittedModel, paths: dict[str, str]) -> None:
    if fitted.net is not None:
        nets.save_net(fitted.net, paths["net"])
        with open(paths["meta"], "w", encoding="utf-8") as fh:
            json.dump({"y_mean": fitted.y_mean, "y_std": fitted.y_std}, fh)
    else:
        with open(paths["tree"], "w", encoding="utf-8") as fh:
            fh.write(fitted.tree_model.to_json())


def _load_cached(
    model_name: str,
    task: ds.Task,
    encoder: ds.FeatureEncoder,
    paths: dict[str, str],
) -> FittedModel | None:
    if not all(os.path.exists(p) for p in paths.values()):
        return None
    if model_name in _NET_KINDS:
        net = nets.load_net(paths["net"])
        with open(paths["meta"], encoding="utf-8") as fh:
            meta = json.load(fh)
        return FittedModel(
            name=model_name, task=task, encoder=encoder, net=net,
            y_mean=meta["y_mean"], y_std=meta["y_std"],
        )
    with open(paths["tree"], encoding="utf-8") as fh:
        text = fh.read()
    model = (
        trees.GbdtModel.from_json(text)
        if model_name.startswith("gbdt")
        else trees.ForestModel.from_json(text)
    )
    return FittedModel(name=model_name, task=task, encoder=encoder, tree_model=model)


_METRIC_COLUMNS = (
    "task,model,split,n,auc,accuracy,precision,recall,f1,mae,rmse,r2,degenerate"
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(float(v))


def _metric_row(task, model, split_name, classify: bool, report: dict) -> str:
    if classify:
        cells = [
            task.value, model, split_name, _fmt(report["n"]),
            _fmt(report["auc"]), _fmt(report["accuracy"]), _fmt(report["precision"]),
            _fmt(report["recall"]), _fmt(report["f1"]), "", "", "",
            _fmt(report["degenerate"]),
        ]
    else:
        cells = [
            task.value, model, split_name, _fmt(report["n"]),
            "", "", "", "", "",
            _fmt(report["mae"]), _fmt(report["rmse"]), _fmt(report["r2"]),
            _fmt(report.get("degenerate", False)),
        ]
    return ",".join(cells)


def run_experiment(records, outdir, settings: ExperimentSettings = ExperimentSettings()) -> dict:
    """Fit every requested model on every requested task; write artifacts.

    Returns {(task, model): {split_name: report_dict, "fitted": FittedModel,
    "background": EncodedBatch}}; the background is an evenly-spaced sample
    of Train rows for attribution baselines. Artifacts land in ``outdir``:
    metrics.csv, roc_/scatter_ point files, group_metrics.csv, per-task
    split manifests and exclusion counts, run_config.txt and report.md.
    """
    os.makedirs(outdir, exist_ok=True)
    cache_dir = os.path.join(outdir, "cache")
    os.makedirs(cache_dir, exist_ok=True)
    write_config_file(os.path.join(outdir, "run_config.txt"), settings.describe())

    results: dict = {}
    metric_rows: list[str] = []
    group_rows: list[str] = []

    for task in settings.tasks:
        classify = task.is_classification
        kept, excl = ds.apply_exclusions(records, task, settings.mask)
        if not kept:
            raise ConfigError(f"no records survive exclusions for {task.value}")
        with open(
            os.path.join(outdir, f"exclusions_{task.value}.json"), "w", encoding="utf-8"
        ) as fh:
            fh.write(excl.to_json())
        assignment = ds.split(kept, seed=settings.seed)
        assignment.write_manifest(os.path.join(outdir, f"manifest_{task.value}.csv"))

        by_split: dict[str, list] = {}
        for rec in kept:
            by_split.setdefault(assignment.assignment[rec.id].value, []).append(rec)
        if "train" not in by_split or "val" not in by_split or "test" not in by_split:
            raise ConfigError(f"{task.value}: a split is empty; need more records")

        encoder = ds.fit_encoder(by_split["train"], settings.mask)
        batches = {name: encoder.encode_batch(rs) for name, rs in by_split.items()}
        targets = {
            name: ds.target_array(rs, task).astype(np.float64)
            for name, rs in by_split.items()
        }
        n_tr = len(batches["train"])
        bg_idx = np.linspace(0, n_tr - 1, min(512, n_tr)).astype(np.int64)
        background = batches["train"].take(bg_idx)

        for model_name in settings.models:
            fp = _fingerprint([r.id for r in kept], task, model_name, settings)
            paths = _cache_paths(cache_dir, fp, model_name)
            fitted = (
                _load_cached(model_name, task, encoder, paths)
                if settings.use_cache
                else None
            )
            if fitted is None:
                fitted = _fit_one(model_name, task, encoder, batches, targets, settings)
                _save_cached(fitted, paths)

            results[(task, model_name)] = {"fitted": fitted, "background": background}
            for split_name in ("val", "test", "external"):
                if split_name not in batches or len(batches[split_name]) == 0:
                    continue
                preds = fitted.predict_encoded(batches[split_name])
                y = targets[split_name]
                if classify:
                    report = metrics.classification_report(preds, y.astype(bool))
                else:
                    report = metrics.regression_report(preds, y)
                results[(task, model_name)][split_name] = report
                metric_rows.append(
                    _metric_row(task, model_name, split_name, classify, report)
                )

                if split_name == "test":
                    _write_points(
                        outdir, task, model_name, classify, preds, y,
                        batches[split_name].ids,
                    )
                    group_rows.extend(
                        _group_rows(
                            task, model_name, by_split["test"], preds, y, classify,
                            settings.mask,
                        )
                    )

    metric_rows.sort()
    with open(os.path.join(outdir, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write(_METRIC_COLUMNS + "\n")
        fh.write("\n".join(metric_rows) + "\n")
    with open(os.path.join(outdir, "group_metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write("task,model,group_feature,group_value,n,auc,accuracy,f1,mae,rmse,r2\n")
        fh.write("".join(r + "\n" for r in sorted(group_rows)))
    _write_report_md(outdir, results)
    return results


def _write_points(outdir, task, model_name, classify, preds, y, ids) -> None:
    stem = f"{task.value}_{model_name}"
    if classify:
        try:
            pts = metrics.roc_points(preds, y.astype(bool))
        except UndefinedMetricError:
            return
        with open(os.path.join(outdir, f"roc_{stem}.csv"), "w", encoding="utf-8") as fh:
            fh.write("fpr,tpr\n")
            for fpr, tpr in pts:
                fh.write(f"{_fmt(fpr)},{_fmt(tpr)}\n")
    else:
        with open(
            os.path.join(outdir, f"scatter_{stem}.csv"), "w", encoding="utf-8"
        ) as fh:
            fh.write("id,target,pred\n")
            for rid, t, p in zip(ids, y, preds):
                fh.write(f"{rid},{_fmt(t)},{_fmt(p)}\n")


def _group_rows(task, model_name, test_records, preds, y, classify, mask) -> list[str]:
    rows = []
    for feat in ("sex", "race"):
        if feat not in mask:
            continue
        groups = [r.get(feat).value for r in test_records]
        summary = metrics.group_summary(
            groups, preds, y.astype(bool) if classify else y,
            kind="classification" if classify else "regression",
        )
        for value, rep in summary.items():
            if classify:
                cells = [
                    task.value, model_name, feat, value, _fmt(rep["n"]),
                    _fmt(rep["auc"]), _fmt(rep["accuracy"]), _fmt(rep["f1"]),
                    "", "", "",
                ]
            else:
                degenerate = rep.get("degenerate", False)
                cells = [
                    task.value, model_name, feat, value, _fmt(rep["n"]),
                    "", "", "",
                    _fmt(rep.get("mae")) if not degenerate else "",
                    _fmt(rep.get("rmse")) if not degenerate else "",
                    _fmt(rep.get("r2")) if not degenerate else "",
                ]
            rows.append(",".join(cells))
    return rows


def _write_report_md(outdir, results: dict) -> None:
    lines = ["# Experiment report", ""]
    tasks = sorted({task for task, _ in results}, key=lambda t: t.value)
    for task in tasks:
        lines.append(f"## {task.value}")
        lines.append("")
        if task.is_classification:
            lines.append("| model | split | n | AUC | accuracy | F1 |")
            lines.append("|---|---|---|---|---|---|")
        else:
            lines.append("| model | split | n | RMSE | MAE | R2 |")
            lines.append("|---|---|---|---|---|---|")
        for (t, model_name), by_split in sorted(
            results.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
        ):
            if t is not task:
                continue
            for split_name in ("val", "test", "external"):
                rep = by_split.get(split_name)
                if rep is None:
                    continue
                if task.is_classification:
                    lines.append(
                        f"| {model_name} | {split_name} | {rep['n']} "
                        f"| {_round(rep['auc'])} | {_round(rep['accuracy'])} "
                        f"| {_round(rep['f1'])} |"
                    )
                else:
                    lines.append(
                        f"| {model_name} | {split_name} | {rep['n']} "
                        f"| {_round(rep['rmse'])} | {_round(rep['mae'])} "
                        f"| {_round(rep['r2'])} |"
                    )
        lines.append("")
    with open(os.path.join(outdir, "report.md"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def _round(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"
