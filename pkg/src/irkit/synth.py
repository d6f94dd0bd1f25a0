"""Synthetic survey cohorts for tests and desk-scale experiments.

Real NHANES/CHARLS extracts are large downloads, so the test and acceptance
suites run on a documented generative stand-in. The generator draws the nine
observable features, then produces *latent* triglycerides, HDL-C and insulin
as noisy functions of adiposity and glycemia, and finally computes every
prediction target through the exact index formulas. Observables therefore
carry real signal about the labels, but never determine them exactly.

Generative process (NHANES-shaped; units as in the column dictionary):

    age      ~ U(18, 80)
    sex      ~ Bernoulli(female=0.52)
    race     ~ categorical(0.17, 0.085, 0.44, 0.20, 0.105)
    bmi      ~ N(28.4, 6.5)               clip [16, 60]
    waist    = 2.1*bmi + 0.06*age + 30 + 4*male + N(0, 5)      clip [55, 200]
    fpg      = 78 + 0.55*bmi + 0.12*age + N(0, 8)              clip [60, 280]
    pulse    = 76 - 0.07*age + 0.15*(bmi-28) + N(0, 10)        clip [35, 180]
    systolic = 95 + 0.45*age + 0.35*bmi + N(0, 10)             clip [70, 250]
    diastolic= 58 + 0.10*age + 0.30*bmi + N(0, 8)              clip [35, 150]
    tg       = 30 + 2.6*bmi + 0.5*(waist-95) + 0.7*(fpg-95) + N(0, 24)
                                                               clip [25, 800]
    hdl      = 88 - 0.95*bmi - 0.12*(waist-95) - 8*male + N(0, 9)
                                                               clip [20, 150]
    insulin  = exp(0.85 + 0.055*bmi + 0.012*(fpg-95) + N(0, 0.35))
                                                               clip [0.5, 300]

The CHARLS-shaped variant shifts age to U(45, 85), BMI to N(23.8, 3.8),
forces race to other_multi and drops insulin, mirroring the external
cohort's demographics. All records are adult non-diabetics; pass
``dirty_fraction`` to inject under-age/diabetic/incomplete rows when the
exclusion pipeline itself is under test.
"""

from __future__ import annotations

import csv

import numpy as np

from .dataset import ParticipantRecord, Race, Sex, Source
from .numcore import Rng

_RACES = list(Race)
_RACE_P = np.array([0.17, 0.085, 0.44, 0.20, 0.105])


def generate_cohort(
    n: int,
    seed: int,
    source: Source = Source.NHANES,
    dirty_fraction: float = 0.0,
) -> list[ParticipantRecord]:
    rng = Rng(seed)
    charls = source is Source.CHARLS

    age = rng.uniform(45.0 if charls else 18.0, 85.0 if charls else 80.0, n)
    female = rng.uniform(size=n) < (0.54 if charls else 0.52)
    if charls:
        race_codes = np.zeros(n, dtype=int)
    else:
        # inverse-CDF over the documented proportions
        race_codes = np.searchsorted(np.cumsum(_RACE_P), rng.uniform(size=n))

    bmi = np.clip(rng.normal(23.8 if charls else 28.4, 3.8 if charls else 6.5, n), 16, 60)
    waist = np.clip(
        2.1 * bmi + 0.06 * age + 30.0 + 4.0 * (~female) + rng.normal(0, 5, n), 55, 200
    )
    fpg = np.clip(78.0 + 0.55 * bmi + 0.12 * age + rng.normal(0, 8, n), 60, 280)
    pulse = np.clip(76.0 - 0.07 * age + 0.15 * (bmi - 28) + rng.normal(0, 10, n), 35, 180)
    systolic = np.clip(95.0 + 0.45 * age + 0.35 * bmi + rng.normal(0, 10, n), 70, 250)
    diastolic = np.clip(58.0 + 0.10 * age + 0.30 * bmi + rng.normal(0, 8, n), 35, 150)

    tg = np.clip(
        30.0 + 2.6 * bmi + 0.5 * (waist - 95) + 0.7 * (fpg - 95) + rng.normal(0, 24, n),
        25,
        800,
    )
    hdl = np.clip(
        88.0 - 0.95 * bmi - 0.12 * (waist - 95) - 8.0 * (~female) + rng.normal(0, 9, n),
        20,
        150,
    )
    insulin = np.clip(
        np.exp(0.85 + 0.055 * bmi + 0.012 * (fpg - 95) + rng.normal(0, 0.35, n)),
        0.5,
        300,
    )

    prefix = "charls" if charls else "synth"
    records = []
    for i in range(n):
        records.append(
            ParticipantRecord(
                id=f"{prefix}-{seed}-{i:05d}",
                source=source,
                age=float(age[i]),
                sex=Sex.FEMALE if female[i] else Sex.MALE,
                race=Race.OTHER_MULTI if charls else _RACES[int(race_codes[i])],
                bmi=float(bmi[i]),
                waist=float(waist[i]),
                pulse=float(pulse[i]),
                systolic=float(systolic[i]),
                diastolic=float(diastolic[i]),
                fpg=float(fpg[i]),
                insulin=None if charls else float(insulin[i]),
                tg=float(tg[i]),
                hdl=float(hdl[i]),
                diabetes_flag=False,
            )
        )

    if dirty_fraction > 0.0:
        n_dirty = int(round(dirty_fraction * n))
        pick = rng.choice(n, size=min(n_dirty, n), replace=False)
        for j, idx in enumerate(np.sort(pick)):
            rec = records[int(idx)]
            kind = j % 3
            if kind == 0:
                rec.age = float(rng.uniform(5, 17.9))
            elif kind == 1:
                rec.diabetes_flag = True
            else:
                rec.fpg = None
    return records


_CSV_FIELDS = [
    ("id", lambda r: r.id),
    ("age", lambda r: _fmt(r.age)),
    ("sex", lambda r: r.sex.value if r.sex else ""),
    ("race", lambda r: r.race.value if r.race else ""),
    ("height_cm", lambda r: _fmt(r.height)),
    ("weight_kg", lambda r: _fmt(r.weight)),
    ("bmi", lambda r: _fmt(r.bmi)),
    ("waist_cm", lambda r: _fmt(r.waist)),
    ("pulse_bpm", lambda r: _fmt(r.pulse)),
    ("systolic_mmhg", lambda r: _fmt(r.systolic)),
    ("diastolic_mmhg", lambda r: _fmt(r.diastolic)),
    ("fpg_mgdl", lambda r: _fmt(r.fpg)),
    ("insulin_uiu_ml", lambda r: _fmt(r.insulin)),
    ("tg_mgdl", lambda r: _fmt(r.tg)),
    ("hdl_mgdl", lambda r: _fmt(r.hdl)),
    ("diabetes", lambda r: "" if r.diabetes_flag is None else str(int(r.diabetes_flag))),
]


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def write_cohort_csv(records, path, source: Source = Source.NHANES) -> None:
    """Emit records in the documented CSV schema for the given source."""
    fields = list(_CSV_FIELDS)
    if source is Source.CHARLS:
        fields = [f for f in fields if f[0] not in ("race", "insulin_uiu_ml")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in fields])
        for rec in records:
            writer.writerow([get(rec) for _, get in fields])
