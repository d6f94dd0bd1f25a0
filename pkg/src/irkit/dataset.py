"""Survey-shaped tabular data: parsing, exclusions, targets, encoding, splits.

Input files are comma-separated UTF-8 with a mandatory header row and period
decimal separators. Two schemas are recognised:

NHANES-shaped columns
    id, age, sex, race, height_cm, weight_kg, bmi, waist_cm, pulse_bpm,
    systolic_mmhg, diastolic_mmhg, fpg_mgdl, insulin_uiu_ml, tg_mgdl,
    hdl_mgdl, diabetes

CHARLS-shaped columns
    same, minus ``race`` and ``insulin_uiu_ml`` (all CHARLS participants are
    coded Other/Multi-Racial and no insulin assay exists). A stray ``race``
    column is tolerated with a warning and ignored.

``height_cm``, ``weight_kg``, ``waist_cm`` and ``insulin_uiu_ml`` are
optional columns; everything else is mandatory. Unparseable or
physiologically impossible cells become missing values and are flagged, not
fatal. Missing BMI is derived from height and weight when both are present.

The model input is nine features: seven numeric (age, bmi, waist, pulse,
systolic, diastolic, fpg) and two categorical (sex, race). Feature-subset
masks (e.g. the simplified BMI+glucose mode) restrict that set consistently
across encoding, training and serving.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import indices
from .errors import ConfigError, DomainError, SchemaError
from .numcore import Rng


class Sex(Enum):
    MALE = "male"
    FEMALE = "female"


class Race(Enum):
    MEXICAN_AMERICAN = "mexican_american"
    OTHER_HISPANIC = "other_hispanic"
    NON_HISPANIC_WHITE = "non_hispanic_white"
    NON_HISPANIC_BLACK = "non_hispanic_black"
    OTHER_MULTI = "other_multi"


class Source(Enum):
    NHANES = "nhanes"
    CHARLS = "charls"


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    EXTERNAL = "external"


NUMERIC_FEATURES = ("age", "bmi", "waist", "pulse", "systolic", "diastolic", "fpg")
CATEGORICAL_FEATURES = ("sex", "race")
ALL_FEATURES = NUMERIC_FEATURES + CATEGORICAL_FEATURES
SIMPLIFIED_MASK = frozenset({"bmi", "fpg"})
FULL_MASK = frozenset(ALL_FEATURES)

# physiological sanity bounds used at parse time; cells outside become missing
_NUMERIC_BOUNDS = {
    "age": (0.0, 130.0),
    "height": (50.0, 280.0),
    "weight": (10.0, 450.0),
    "bmi": (5.0, 120.0),
    "waist": (30.0, 250.0),
    "pulse": (20.0, 250.0),
    "systolic": (50.0, 300.0),
    "diastolic": (20.0, 200.0),
    "fpg": (10.0, 500.0),
    "insulin": (0.0, 1000.0),
    "tg": (1.0, 3000.0),
    "hdl": (2.0, 250.0),
}

_COLUMN_TO_FIELD = {
    "id": "id",
    "age": "age",
    "sex": "sex",
    "race": "race",
    "height_cm": "height",
    "weight_kg": "weight",
    "bmi": "bmi",
    "waist_cm": "waist",
    "pulse_bpm": "pulse",
    "systolic_mmhg": "systolic",
    "diastolic_mmhg": "diastolic",
    "fpg_mgdl": "fpg",
    "insulin_uiu_ml": "insulin",
    "tg_mgdl": "tg",
    "hdl_mgdl": "hdl",
    "diabetes": "diabetes_flag",
}

_OPTIONAL_COLUMNS = {"height_cm", "weight_kg", "waist_cm", "insulin_uiu_ml"}


def mandatory_columns(source: Source) -> tuple[str, ...]:
    cols = [c for c in _COLUMN_TO_FIELD if c not in _OPTIONAL_COLUMNS]
    if source is Source.CHARLS:
        cols.remove("race")
    return tuple(cols)


@dataclass
class ParticipantRecord:
    id: str
    source: Source
    age: float | None = None
    sex: Sex | None = None
    race: Race | None = None
    height: float | None = None
    weight: float | None = None
    bmi: float | None = None
    waist: float | None = None
    pulse: float | None = None
    systolic: float | None = None
    diastolic: float | None = None
    fpg: float | None = None
    insulin: float | None = None
    tg: float | None = None
    hdl: float | None = None
    diabetes_flag: bool | None = None

    def get(self, name: str):
        return getattr(self, name)


class Task(Enum):
    """The four prediction tasks; three thresholded labels, one regression."""

    HOMA_CLASS = "homa_class"
    TYG_CLASS = "tyg_class"
    METS_CLASS = "mets_class"
    METS_REGRESS = "mets_regress"

    @property
    def is_classification(self) -> bool:
        return self is not Task.METS_REGRESS

    @property
    def index_kind(self) -> indices.IndexKind:
        return {
            Task.HOMA_CLASS: indices.IndexKind.HOMA_IR,
            Task.TYG_CLASS: indices.IndexKind.TYG,
            Task.METS_CLASS: indices.IndexKind.METS_IR,
            Task.METS_REGRESS: indices.IndexKind.METS_IR,
        }[self]

    @property
    def threshold(self) -> float | None:
        return self.index_kind.threshold if self.is_classification else None

    @property
    def label_fields(self) -> tuple[str, ...]:
        """Record fields the target formula consumes."""
        if self is Task.HOMA_CLASS:
            return ("fpg", "insulin")
        if self is Task.TYG_CLASS:
            return ("tg", "fpg")
        return ("fpg", "tg", "bmi", "hdl")


# ---------------------------------------------------------------------------
# parsing


@dataclass
class ParseReport:
    rows_read: int = 0
    rows_kept: int = 0
    flagged_cells: list[tuple[str, str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def rows_flagged(self) -> int:
        return len({row_id for row_id, _, _ in self.flagged_cells})

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "rows_flagged": self.rows_flagged,
            "flagged_cells": [list(c) for c in self.flagged_cells],
            "warnings": list(self.warnings),
        }


def _parse_numeric(field_name: str, raw: str) -> float | None:
    """None when empty/unparseable/out of physiological bounds."""
    raw = raw.strip()
    if raw == "":
        return None
    try:
        v = float(raw)
    except ValueError:
        return None
    if not math.isfinite(v):
        return None
    lo, hi = _NUMERIC_BOUNDS[field_name]
    if not (lo <= v <= hi):
        return None
    return v


_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no"}


def parse_csv(path, source: Source) -> tuple[list[ParticipantRecord], ParseReport]:
    """Read one survey CSV into records plus a row/cell accounting report."""
    report = ParseReport()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file (no header row)")
        header = [h.strip() for h in reader.fieldnames]
        missing = [c for c in mandatory_columns(source) if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing mandatory columns: {', '.join(missing)}")
        if source is Source.CHARLS and "race" in header:
            report.warnings.append(
                "unexpected 'race' column in CHARLS-shaped file; "
                "all rows forced to other_multi"
            )
        rows = list(reader)

    if not rows:
        raise SchemaError(f"{path}: no data rows")

    records: list[ParticipantRecord] = []
    for i, row in enumerate(rows):
        report.rows_read += 1
        rid = (row.get("id") or "").strip() or f"row{i + 1}"
        rec = ParticipantRecord(id=rid, source=source)

        for column, fieldname in _COLUMN_TO_FIELD.items():
            if column in ("id",):
                continue
            raw = row.get(column)
            if raw is None:
                continue
            raw = raw.strip()
            if fieldname == "sex":
                if raw.lower() in ("male", "m"):
                    rec.sex = Sex.MALE
                elif raw.lower() in ("female", "f"):
                    rec.sex = Sex.FEMALE
                else:
                    report.flagged_cells.append((rid, column, raw))
            elif fieldname == "race":
                if source is Source.CHARLS:
                    continue  # warned above; value ignored
                try:
                    rec.race = Race(raw.lower())
                except ValueError:
                    report.flagged_cells.append((rid, column, raw))
            elif fieldname == "diabetes_flag":
                if raw.lower() in _TRUE:
                    rec.diabetes_flag = True
                elif raw.lower() in _FALSE:
                    rec.diabetes_flag = False
                else:
                    report.flagged_cells.append((rid, column, raw))
            else:
                value = _parse_numeric(fieldname, raw)
                if value is None and not (raw == "" and column in _OPTIONAL_COLUMNS):
                    # empty optional cells are ordinary absences, not problems
                    report.flagged_cells.append((rid, column, raw))
                setattr(rec, fieldname, value)

        if source is Source.CHARLS:
            rec.race = Race.OTHER_MULTI
            rec.insulin = None

        if rec.bmi is None and rec.height is not None and rec.weight is not None:
            rec.bmi = indices.bmi(rec.weight, rec.height)

        records.append(rec)
        report.rows_kept += 1
    return records, report


# ---------------------------------------------------------------------------
# exclusions


@dataclass
class ExclusionReport:
    counts: dict[str, int] = field(default_factory=lambda: {
        "age": 0,
        "diabetes": 0,
        "incomplete": 0,
    })
    kept: int = 0

    def to_json(self) -> str:
        return json.dumps({"excluded": self.counts, "kept": self.kept}, sort_keys=True)


def required_fields(task: Task, mask: frozenset[str] = FULL_MASK) -> tuple[str, ...]:
    """Fields a record must carry to participate in ``task`` under ``mask``."""
    needed = list(task.label_fields)
    for name in ALL_FEATURES:
        if name in mask and name not in needed:
            needed.append(name)
    return tuple(needed)


def apply_exclusions(
    records: Iterable[ParticipantRecord],
    task: Task,
    mask: frozenset[str] = FULL_MASK,
) -> tuple[list[ParticipantRecord], ExclusionReport]:
    """Drop under-18s, diabetics, and records missing task-required fields.

    A record failing several rules is tallied once, under the first matching
    reason (age, then diabetes, then incomplete). Idempotent.
    """
    report = ExclusionReport()
    kept: list[ParticipantRecord] = []
    needed = required_fields(task, mask)
    for rec in records:
        if rec.age is None or rec.age < 18.0:
            report.counts["age"] += 1
            continue
        if rec.diabetes_flag is None or rec.diabetes_flag:
            report.counts["diabetes"] += 1
            continue
        if any(rec.get(name) is None for name in needed):
            report.counts["incomplete"] += 1
            continue
        kept.append(rec)
    report.kept = len(kept)
    return kept, report


# ---------------------------------------------------------------------------
# targets


def derive_target(record: ParticipantRecord, task: Task) -> bool | float:
    """Label (classification) or METS-IR value (regression) for one record."""
    for name in task.label_fields:
        if record.get(name) is None:
            raise DomainError(f"record {record.id}: missing {name} for {task.value}")
    if task is Task.HOMA_CLASS:
        idx = indices.homa_ir(indices.glucose_mgdl_to_mmol(record.fpg), record.insulin)
    elif task is Task.TYG_CLASS:
        idx = indices.tyg(record.tg, record.fpg)
    else:
        idx = indices.mets_ir(record.fpg, record.tg, record.bmi, record.hdl)
    if task is Task.METS_REGRESS:
        return idx.value
    return indices.classify(idx).positive


def target_array(records: Sequence[ParticipantRecord], task: Task) -> np.ndarray:
    vals = [derive_target(r, task) for r in records]
    return np.asarray(vals, dtype=np.float64)


# ---------------------------------------------------------------------------
# splitting


@dataclass
class SplitAssignment:
    assignment: dict[str, Split]
    seed: int

    def ids_for(self, split: Split) -> list[str]:
        return [rid for rid, s in self.assignment.items() if s is split]

    def counts(self) -> dict[str, int]:
        out = {s.value: 0 for s in Split}
        for s in self.assignment.values():
            out[s.value] += 1
        return out

    def write_manifest(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "split"])
            for rid, s in self.assignment.items():
                writer.writerow([rid, s.value])


def split(
    records: Sequence[ParticipantRecord],
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
    stratify_labels: Sequence[bool] | None = None,
) -> SplitAssignment:
    """Deterministic 6:2:2-style split; CHARLS records are always External.

    Sizes follow ceil/round/remainder semantics: ceil(r0*N) train,
    round(r1*N) val, the rest test (N counts internal records only). Plain
    random by default; pass per-record labels to stratify instead.
    """
    records = list(records)
    if not records:
        raise ConfigError("split requires at least one record")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError(f"ratios must be three non-negatives, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {ratios!r}")

    assignment: dict[str, Split] = {}
    internal = [r for r in records if r.source is not Source.CHARLS]
    for rec in records:
        if rec.source is Source.CHARLS:
            assignment[rec.id] = Split.EXTERNAL

    def assign_block(block: list[ParticipantRecord], order: np.ndarray) -> None:
        n = len(block)
        n_train = math.ceil(ratios[0] * n)
        n_val = round(ratios[1] * n)
        for pos, j in enumerate(order):
            if pos < n_train:
                assignment[block[j].id] = Split.TRAIN
            elif pos < n_train + n_val:
                assignment[block[j].id] = Split.VAL
            else:
                assignment[block[j].id] = Split.TEST

    rng = Rng(seed)
    if stratify_labels is None:
        assign_block(internal, rng.permutation(len(internal)))
    else:
        labels = list(stratify_labels)
        if len(labels) != len(records):
            raise ConfigError("stratify_labels length must match records")
        by_label: dict[bool, list[ParticipantRecord]] = {}
        for rec, lab in zip(records, labels):
            if rec.source is not Source.CHARLS:
                by_label.setdefault(bool(lab), []).append(rec)
        for lab in sorted(by_label):
            block = by_label[lab]
            assign_block(block, rng.child(int(lab)).permutation(len(block)))

    # keep manifest order aligned with input order
    ordered = {rec.id: assignment[rec.id] for rec in records}
    return SplitAssignment(assignment=ordered, seed=seed)


# ---------------------------------------------------------------------------
# encoding


@dataclass(frozen=True)
class FeatureVector:
    """One encoded row: 9 slots, standardized numerics plus category codes.

    Masked-out slots hold NaN (numeric) or -1 (categorical) and a False mask
    bit; models must never read them.
    """

    numeric: np.ndarray  # (7,) float64, z-scored
    categorical: np.ndarray  # (2,) int64 codes
    mask: np.ndarray  # (9,) bool, ordered as ALL_FEATURES

    def __post_init__(self):
        if self.numeric.shape != (len(NUMERIC_FEATURES),):
            raise ConfigError(f"numeric slot count must be 7, got {self.numeric.shape}")
        if self.categorical.shape != (len(CATEGORICAL_FEATURES),):
            raise ConfigError("categorical slot count must be 2")
        if self.mask.shape != (len(ALL_FEATURES),):
            raise ConfigError("mask must cover all 9 feature slots")


@dataclass
class EncodedBatch:
    """Model-ready arrays for a set of records under one encoder."""

    ids: list[str]
    num_std: np.ndarray  # (n, k_num) z-scored numerics
    num_raw: np.ndarray  # (n, k_num) raw numerics (trees are scale-invariant)
    cat: np.ndarray  # (n, k_cat) integer codes
    numeric_names: tuple[str, ...]
    categorical_names: tuple[str, ...]
    cat_cards: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)

    def tree_matrix(self) -> tuple[np.ndarray, list[int]]:
        """Raw numerics with categorical code columns appended on the right."""
        X = np.concatenate([self.num_raw, self.cat.astype(np.float64)], axis=1)
        cat_idx = list(range(self.num_raw.shape[1], X.shape[1]))
        return X, cat_idx

    def take(self, idx: Sequence[int]) -> "EncodedBatch":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedBatch(
            ids=[self.ids[i] for i in idx],
            num_std=self.num_std[idx],
            num_raw=self.num_raw[idx],
            cat=self.cat[idx],
            numeric_names=self.numeric_names,
            categorical_names=self.categorical_names,
            cat_cards=self.cat_cards,
        )


_CAT_VOCAB = {"sex": [s.value for s in Sex], "race": [r.value for r in Race]}


class FeatureEncoder:
    """Train-split statistics for z-scoring plus categorical vocabularies.

    Unseen race values map to the reserved other_multi code; the sex
    vocabulary is closed. Fit once on Train, then immutable.
    """

    def __init__(self, mask: frozenset[str] = FULL_MASK):
        unknown = set(mask) - set(ALL_FEATURES)
        if unknown:
            raise ConfigError(f"unknown features in mask: {sorted(unknown)}")
        if not mask:
            raise ConfigError("mask must keep at least one feature")
        self.mask = frozenset(mask)
        self.numeric_names = tuple(n for n in NUMERIC_FEATURES if n in mask)
        self.categorical_names = tuple(n for n in CATEGORICAL_FEATURES if n in mask)
        self.means: dict[str, float] = {}
        self.stds: dict[str, float] = {}
        self.vocabs: dict[str, list[str]] = {}
        self._fitted = False

    def fit(self, train_records: Sequence[ParticipantRecord]) -> "FeatureEncoder":
        if self._fitted:
            raise ConfigError("encoder already fitted")
        if not train_records:
            raise ConfigError("cannot fit encoder on an empty train split")
        for name in self.numeric_names:
            vals = np.asarray(
                [r.get(name) for r in train_records], dtype=np.float64
            )
            if np.any(np.isnan(vals)):
                raise DomainError(f"train record missing {name}; exclusions not applied?")
            mean = float(vals.mean())
            std = float(vals.std())  # population convention
            if std == 0.0:
                warnings.warn(f"zero-variance feature {name}; std clamped to 1")
                std = 1.0
            self.means[name] = mean
            self.stds[name] = std
        for name in self.categorical_names:
            canonical = _CAT_VOCAB[name]
            observed = {r.get(name).value for r in train_records}
            vocab = [v for v in canonical if v in observed]
            if name == "race" and Race.OTHER_MULTI.value not in vocab:
                vocab.append(Race.OTHER_MULTI.value)  # reserved unseen code
            self.vocabs[name] = vocab
        self._fitted = True
        return self

    def _code(self, name: str, value) -> int:
        vocab = self.vocabs[name]
        v = value.value
        if v in vocab:
            return vocab.index(v)
        if name == "race":
            return vocab.index(Race.OTHER_MULTI.value)
        raise DomainError(f"unseen {name} value {v!r}")

    def decode(self, name: str, code: int) -> str:
        return self.vocabs[name][code]

    def cat_cards(self) -> tuple[int, ...]:
        return tuple(len(self.vocabs[n]) for n in self.categorical_names)

    def encode(self, record: ParticipantRecord) -> FeatureVector:
        self._require_fitted()
        numeric = np.full(len(NUMERIC_FEATURES), np.nan)
        categorical = np.full(len(CATEGORICAL_FEATURES), -1, dtype=np.int64)
        mask_bits = np.zeros(len(ALL_FEATURES), dtype=bool)
        for i, name in enumerate(NUMERIC_FEATURES):
            if name in self.mask:
                value = record.get(name)
                if value is None:
                    raise DomainError(f"record {record.id}: missing {name}")
                numeric[i] = (value - self.means[name]) / self.stds[name]
                mask_bits[i] = True
        for j, name in enumerate(CATEGORICAL_FEATURES):
            if name in self.mask:
                value = record.get(name)
                if value is None:
                    raise DomainError(f"record {record.id}: missing {name}")
                categorical[j] = self._code(name, value)
                mask_bits[len(NUMERIC_FEATURES) + j] = True
        return FeatureVector(numeric=numeric, categorical=categorical, mask=mask_bits)

    def encode_batch(self, records: Sequence[ParticipantRecord]) -> EncodedBatch:
        self._require_fitted()
        n = len(records)
        k_num = len(self.numeric_names)
        k_cat = len(self.categorical_names)
        num_raw = np.zeros((n, k_num))
        num_std = np.zeros((n, k_num))
        cat = np.zeros((n, k_cat), dtype=np.int64)
        for i, rec in enumerate(records):
            for j, name in enumerate(self.numeric_names):
                value = rec.get(name)
                if value is None:
                    raise DomainError(f"record {rec.id}: missing {name}")
                num_raw[i, j] = value
                num_std[i, j] = (value - self.means[name]) / self.stds[name]
            for j, name in enumerate(self.categorical_names):
                value = rec.get(name)
                if value is None:
                    raise DomainError(f"record {rec.id}: missing {name}")
                cat[i, j] = self._code(name, value)
        return EncodedBatch(
            ids=[r.id for r in records],
            num_std=num_std,
            num_raw=num_raw,
            cat=cat,
            numeric_names=self.numeric_names,
            categorical_names=self.categorical_names,
            cat_cards=self.cat_cards(),
        )

    def _require_fitted(self) -> None:
        if not self._fitted:
            raise ConfigError("encoder not fitted")

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        self._require_fitted()
        return {
            "mask": sorted(self.mask),
            "means": self.means,
            "stds": self.stds,
            "vocabs": self.vocabs,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureEncoder":
        enc = cls(mask=frozenset(d["mask"]))
        enc.means = {k: float(v) for k, v in d["means"].items()}
        enc.stds = {k: float(v) for k, v in d["stds"].items()}
        enc.vocabs = {k: list(v) for k, v in d["vocabs"].items()}
        enc._fitted = True
        return enc


def fit_encoder(
    train_records: Sequence[ParticipantRecord], mask: frozenset[str] = FULL_MASK
) -> FeatureEncoder:
    return FeatureEncoder(mask=mask).fit(train_records)
