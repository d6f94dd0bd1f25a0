"""Model bundles and the HTTP prediction service.

A bundle is a directory holding one fitted model, its feature encoder and
an optional background sample for attributions. ``create_app`` serves a
directory of bundles over HTTP for interactive what-if exploration:

- ``GET /health``  liveness and schema version
- ``GET /models``  the loaded bundles with their input schema
- ``POST /predict`` one prediction from a feature dict
- ``POST /whatif``  predictions along a grid of values for one feature
- ``POST /explain`` per-feature attribution of one prediction

Classification predictions are positive-class probabilities with a 0.5
decision threshold; regression predictions are index values in original
units. Validation errors return 422 with per-field details, malformed
JSON returns 400, unknown model ids return 404.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import dataset as ds
from . import explain as explain_mod
from . import nets, trees
from .errors import ConfigError, SchemaError
from .harness import FittedModel

SCHEMA_VERSION = 1

# accepted input ranges per numeric feature, inclusive
FEATURE_RANGES = {
    "age": (18.0, 120.0),
    "bmi": (10.0, 80.0),
    "waist": (40.0, 220.0),
    "pulse": (30.0, 220.0),
    "systolic": (70.0, 260.0),
    "diastolic": (30.0, 160.0),
    "fpg": (30.0, 300.0),
}


# ---------------------------------------------------------------------------
# bundles


@dataclass
class Bundle:
    fitted: FittedModel
    background: ds.EncodedBatch | None = None


def _batch_to_dict(batch: ds.EncodedBatch) -> dict:
    return {
        "ids": list(batch.ids),
        "num_std": batch.num_std.tolist(),
        "num_raw": batch.num_raw.tolist(),
        "cat": batch.cat.tolist(),
        "numeric_names": list(batch.numeric_names),
        "categorical_names": list(batch.categorical_names),
        "cat_cards": list(batch.cat_cards),
    }


def _batch_from_dict(d: dict) -> ds.EncodedBatch:
    n = len(d["ids"])
    return ds.EncodedBatch(
        ids=list(d["ids"]),
        num_std=np.asarray(d["num_std"], dtype=np.float64).reshape(n, -1),
        num_raw=np.asarray(d["num_raw"], dtype=np.float64).reshape(n, -1),
        cat=np.asarray(d["cat"], dtype=np.int64).reshape(n, -1),
        numeric_names=tuple(d["numeric_names"]),
        categorical_names=tuple(d["categorical_names"]),
        cat_cards=tuple(d["cat_cards"]),
    )


def save_bundle(
    fitted: FittedModel, dirpath, background: ds.EncodedBatch | None = None
) -> None:
    os.makedirs(dirpath, exist_ok=True)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "name": fitted.name,
        "task": fitted.task.value,
        "family": fitted.family,
        "y_mean": fitted.y_mean,
        "y_std": fitted.y_std,
        "encoder": fitted.encoder.to_dict(),
        "background": _batch_to_dict(background) if background is not None else None,
    }
    with open(os.path.join(dirpath, "bundle.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
    if fitted.net is not None:
        nets.save_net(fitted.net, os.path.join(dirpath, "net.bin"))
    else:
        with open(os.path.join(dirpath, "model.json"), "w", encoding="utf-8") as fh:
            fh.write(fitted.tree_model.to_json())


def load_bundle(dirpath) -> Bundle:
    meta_path = os.path.join(dirpath, "bundle.json")
    if not os.path.exists(meta_path):
        raise ConfigError(f"no bundle.json under {dirpath}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"bundle schema {meta.get('schema_version')!r} unsupported; "
            f"expected {SCHEMA_VERSION}"
        )
    encoder = ds.FeatureEncoder.from_dict(meta["encoder"])
    net = None
    tree_model = None
    if meta["family"] == "net":
        net = nets.load_net(os.path.join(dirpath, "net.bin"))
    else:
        with open(os.path.join(dirpath, "model.json"), encoding="utf-8") as fh:
            text = fh.read()
        kind = json.loads(text).get("kind")
        tree_model = (
            trees.GbdtModel.from_json(text)
            if kind == "gbdt"
            else trees.ForestModel.from_json(text)
        )
    fitted = FittedModel(
        name=meta["name"],
        task=ds.Task(meta["task"]),
        encoder=encoder,
        net=net,
        tree_model=tree_model,
        y_mean=meta["y_mean"],
        y_std=meta["y_std"],
    )
    background = (
        _batch_from_dict(meta["background"]) if meta["background"] is not None else None
    )
    return Bundle(fitted=fitted, background=background)


def export_bundles(results: dict, root) -> list[str]:
    """Write one bundle per (task, model) from run_experiment results."""
    os.makedirs(root, exist_ok=True)
    written = []
    for (task, model_name), entry in results.items():
        dirpath = os.path.join(root, f"{task.value}__{model_name}")
        save_bundle(entry["fitted"], dirpath, background=entry["background"])
        written.append(dirpath)
    return sorted(written)


def load_bundles(root) -> dict[str, Bundle]:
    """All bundles directly under ``root``, keyed by directory name."""
    out: dict[str, Bundle] = {}
    for name in sorted(os.listdir(root)):
        dirpath = os.path.join(root, name)
        if os.path.isdir(dirpath) and os.path.exists(
            os.path.join(dirpath, "bundle.json")
        ):
            out[name] = load_bundle(dirpath)
    if not out:
        raise ConfigError(f"no bundles found under {root}")
    return out


# ---------------------------------------------------------------------------
# request schemas


class Features(BaseModel):
    model_config = ConfigDict(extra="forbid")

    age: float | None = Field(None, ge=18, le=120)
    bmi: float | None = Field(None, ge=10, le=80)
    waist: float | None = Field(None, ge=40, le=220)
    pulse: float | None = Field(None, ge=30, le=220)
    systolic: float | None = Field(None, ge=70, le=260)
    diastolic: float | None = Field(None, ge=30, le=160)
    fpg: float | None = Field(None, ge=30, le=300)
    sex: Literal["male", "female"] | None = None
    race: (
        Literal[
            "mexican_american",
            "other_hispanic",
            "non_hispanic_white",
            "non_hispanic_black",
            "other_multi",
        ]
        | None
    ) = None


class PredictRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    model: str
    features: Features


class WhatifRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    model: str
    features: Features
    feature: str
    values: list[float] = Field(min_length=1, max_length=201)


class ExplainRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    model: str
    features: Features
    n_permutations: int = Field(128, ge=1, le=2048)
    seed: int = 0


# ---------------------------------------------------------------------------
# service


def _field_error(name: str, msg: str) -> HTTPException:
    return HTTPException(
        status_code=422,
        detail=[{"loc": ["body", "features", name], "msg": msg, "type": "value_error"}],
    )


def _record_from_features(bundle: Bundle, features: Features) -> ds.ParticipantRecord:
    encoder = bundle.fitted.encoder
    required = tuple(encoder.numeric_names) + tuple(encoder.categorical_names)
    given = features.model_dump()
    for name in required:
        if given.get(name) is None:
            raise _field_error(name, f"field required for model inputs {required}")
    kwargs = {}
    for name in encoder.numeric_names:
        kwargs[name] = float(given[name])
    if "sex" in required:
        kwargs["sex"] = ds.Sex(given["sex"])
    if "race" in required:
        kwargs["race"] = ds.Race(given["race"])
    return ds.ParticipantRecord(id="query", source=ds.Source.NHANES, **kwargs)


def _model_info(name: str, bundle: Bundle) -> dict:
    fitted = bundle.fitted
    encoder = fitted.encoder
    task = fitted.task
    classify = task.is_classification
    return {
        "id": name,
        "model": fitted.name,
        "task": task.value,
        "kind": "classification" if classify else "regression",
        "numeric_features": list(encoder.numeric_names),
        "categorical_features": {
            n: list(encoder.vocabs[n]) for n in encoder.categorical_names
        },
        "ranges": {n: list(FEATURE_RANGES[n]) for n in encoder.numeric_names},
        "index_kind": task.index_kind.value,
        "index_threshold": task.index_kind.threshold,
        "decision_threshold": 0.5 if classify else None,
        "has_background": bundle.background is not None,
    }


def create_app(bundle_root) -> FastAPI:
    """Serve every bundle directory under ``bundle_root``."""
    bundles = load_bundles(bundle_root)
    app = FastAPI(title="insulin resistance what-if service")
    # the browser client may be served from a different origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _on_validation(request, exc):
        errors = exc.errors()
        if any(e.get("type") == "json_invalid" for e in errors):
            return JSONResponse(
                status_code=400, content={"detail": "malformed JSON body"}
            )
        return JSONResponse(
            status_code=422, content={"detail": jsonable_encoder(errors)}
        )

    def _bundle(name: str) -> Bundle:
        if name not in bundles:
            raise HTTPException(
                status_code=404,
                detail=f"unknown model {name!r}; available: {sorted(bundles)}",
            )
        return bundles[name]

    def _predict_one(bundle: Bundle, features: Features) -> float:
        record = _record_from_features(bundle, features)
        batch = bundle.fitted.encoder.encode_batch([record])
        return float(bundle.fitted.predict_encoded(batch)[0])

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "schema_version": SCHEMA_VERSION,
            "models": len(bundles),
        }

    @app.get("/models")
    def models():
        return {
            "schema_version": SCHEMA_VERSION,
            "models": [_model_info(name, b) for name, b in bundles.items()],
        }

    @app.post("/predict")
    def predict(req: PredictRequest):
        bundle = _bundle(req.model)
        value = _predict_one(bundle, req.features)
        classify = bundle.fitted.task.is_classification
        return {
            "schema_version": SCHEMA_VERSION,
            "model": req.model,
            "kind": "classification" if classify else "regression",
            "prediction": value,
            "positive": bool(value > 0.5) if classify else None,
            "decision_threshold": 0.5 if classify else None,
            "index_kind": bundle.fitted.task.index_kind.value,
            "index_threshold": bundle.fitted.task.index_kind.threshold,
        }

    @app.post("/whatif")
    def whatif(req: WhatifRequest):
        bundle = _bundle(req.model)
        encoder = bundle.fitted.encoder
        if req.feature not in encoder.numeric_names:
            raise _field_error(
                req.feature,
                f"what-if feature must be one of {tuple(encoder.numeric_names)}",
            )
        lo, hi = FEATURE_RANGES[req.feature]
        for v in req.values:
            if not lo <= v <= hi:
                raise _field_error(
                    req.feature, f"grid value {v} outside [{lo}, {hi}]"
                )
        base = req.features.model_dump()
        records = []
        for v in req.values:
            swapped = Features(**{**base, req.feature: v})
            records.append(_record_from_features(bundle, swapped))
        batch = encoder.encode_batch(records)
        preds = bundle.fitted.predict_encoded(batch)
        classify = bundle.fitted.task.is_classification
        return {
            "schema_version": SCHEMA_VERSION,
            "model": req.model,
            "kind": "classification" if classify else "regression",
            "feature": req.feature,
            "values": list(req.values),
            "predictions": [float(p) for p in preds],
        }

    @app.post("/explain")
    def explain(req: ExplainRequest):
        bundle = _bundle(req.model)
        if bundle.background is None:
            raise HTTPException(
                status_code=409,
                detail=f"model {req.model!r} was packaged without a background sample",
            )
        record = _record_from_features(bundle, req.features)
        instance = bundle.fitted.encoder.encode_batch([record])
        att = explain_mod.shapley_sampling(
            bundle.fitted,
            instance,
            bundle.background,
            n_permutations=req.n_permutations,
            seed=req.seed,
        )
        classify = bundle.fitted.task.is_classification
        return {
            "schema_version": SCHEMA_VERSION,
            "model": req.model,
            "kind": "classification" if classify else "regression",
            "attribution": att.to_dict(),
        }

    return app
