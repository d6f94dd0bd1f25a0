"""Insulin-resistance surrogate indices and their threshold labels.

Three indices are supported, each with a fixed decision threshold:

* HOMA-IR  = FPG(mmol/L) * insulin(mIU/L) / 22.5          threshold 2.5
* TyG      = ln(TG * FPG / 2), both in mg/dL              threshold 8.85
* METS-IR  = ln(2*FPG + TG) * BMI / ln(HDL-C), mg/dL      threshold 41.33

Values are kept at full double precision; round only for display (4 dp).
The threshold boundary itself belongs to the negative class ("<= threshold"
is not resistant). All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import DomainError, SingularityError

# mg/dL per mmol/L for glucose; the common clinical convention. Pass 18.016
# to glucose_mgdl_to_mmol for the exact molar-mass variant.
GLUCOSE_MGDL_PER_MMOL = 18.0


class IndexKind(Enum):
    HOMA_IR = "homa_ir"
    TYG = "tyg"
    METS_IR = "mets_ir"

    @property
    def threshold(self) -> float:
        return _THRESHOLDS[self]


_THRESHOLDS = {
    IndexKind.HOMA_IR: 2.5,
    IndexKind.TYG: 8.85,
    IndexKind.METS_IR: 41.33,
}


@dataclass(frozen=True)
class IndexValue:
    kind: IndexKind
    value: float

    def display(self) -> str:
        return f"{self.value:.4f}"


@dataclass(frozen=True)
class IrLabel:
    kind: IndexKind
    positive: bool


def _require_finite(name: str, x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def _require_positive(name: str, x: float) -> float:
    x = _require_finite(name, x)
    if x <= 0.0:
        raise DomainError(f"{name} must be > 0, got {x!r}")
    return x


def _require_nonnegative(name: str, x: float) -> float:
    x = _require_finite(name, x)
    if x < 0.0:
        raise DomainError(f"{name} must be >= 0, got {x!r}")
    return x


def homa_ir(fpg_mmol_per_l: float, insulin_miu_per_l: float) -> IndexValue:
    """HOMA-IR from fasting glucose (mmol/L) and fasting insulin (mIU/L)."""
    fpg = _require_nonnegative("fpg_mmol_per_l", fpg_mmol_per_l)
    insulin = _require_nonnegative("insulin_miu_per_l", insulin_miu_per_l)
    return IndexValue(IndexKind.HOMA_IR, fpg * insulin / 22.5)


def tyg(tg_mg_per_dl: float, fpg_mg_per_dl: float) -> IndexValue:
    """TyG index from triglycerides and fasting glucose, both in mg/dL."""
    tg_v = _require_positive("tg_mg_per_dl", tg_mg_per_dl)
    fpg = _require_positive("fpg_mg_per_dl", fpg_mg_per_dl)
    return IndexValue(IndexKind.TYG, math.log(tg_v * fpg / 2.0))


def mets_ir(
    fpg_mg_per_dl: float,
    tg_mg_per_dl: float,
    bmi_kg_per_m2: float,
    hdl_mg_per_dl: float,
) -> IndexValue:
    """METS-IR from glucose, triglycerides (mg/dL), BMI and HDL-C (mg/dL).

    The denominator ln(HDL-C) vanishes at HDL-C = 1 mg/dL; physiological data
    never approaches that, but the singularity is guarded explicitly.
    """
    fpg = _require_nonnegative("fpg_mg_per_dl", fpg_mg_per_dl)
    tg_v = _require_nonnegative("tg_mg_per_dl", tg_mg_per_dl)
    bmi_v = _require_positive("bmi_kg_per_m2", bmi_kg_per_m2)
    hdl = _require_finite("hdl_mg_per_dl", hdl_mg_per_dl)
    if hdl <= 1.0:
        raise SingularityError(
            f"hdl_mg_per_dl must be > 1 (ln(HDL-C) denominator), got {hdl!r}"
        )
    if 2.0 * fpg + tg_v <= 0.0:
        raise DomainError("2*fpg + tg must be > 0 for the METS-IR logarithm")
    return IndexValue(
        IndexKind.METS_IR, math.log(2.0 * fpg + tg_v) * bmi_v / math.log(hdl)
    )


def classify(idx: IndexValue) -> IrLabel:
    """Threshold an index value; the boundary falls in the negative class."""
    value = _require_finite("value", idx.value)
    return IrLabel(idx.kind, value > idx.kind.threshold)


def glucose_mgdl_to_mmol(
    fpg_mg_per_dl: float, mgdl_per_mmol: float = GLUCOSE_MGDL_PER_MMOL
) -> float:
    """Convert glucose mg/dL -> mmol/L (NHANES stores mg/dL; HOMA-IR wants mmol/L)."""
    fpg = _require_nonnegative("fpg_mg_per_dl", fpg_mg_per_dl)
    return fpg / mgdl_per_mmol


def bmi(weight_kg: float, height_cm: float) -> float:
    """Body mass index in kg/m^2."""
    weight = _require_positive("weight_kg", weight_kg)
    height = _require_positive("height_cm", height_cm)
    h_m = height / 100.0
    return weight / (h_m * h_m)
