"""Parsing, exclusion, target, split and encoding behaviour."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irkit import dataset as ds
from irkit import synth
from irkit.errors import ConfigError, DomainError, SchemaError

# fixture records hold many constant columns; the clamp warning is expected
pytestmark = pytest.mark.filterwarnings("ignore:zero-variance feature")

NHANES_HEADER = (
    "id,age,sex,race,height_cm,weight_kg,bmi,waist_cm,pulse_bpm,"
    "systolic_mmhg,diastolic_mmhg,fpg_mgdl,insulin_uiu_ml,tg_mgdl,hdl_mgdl,diabetes"
)

ROW_A = "a1,47,female,non_hispanic_white,,,28.41,95.0,72,118,76,100.64,12.26,117.01,54.58,0"
ROW_B = "b2,33,male,mexican_american,,,24.0,88.0,64,112,70,91.0,8.1,95.0,61.0,0"
ROW_C = "c3,61,female,non_hispanic_black,,,31.2,104.0,70,131,82,104.0,14.9,141.0,48.0,0"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def make_nhanes(tmp_path, rows, name="cohort.csv"):
    return write(tmp_path, name, "\n".join([NHANES_HEADER, *rows]) + "\n")


# ---------------------------------------------------------------------------
# parsing


def test_parse_well_formed(tmp_path):
    path = make_nhanes(tmp_path, [ROW_A, ROW_B, ROW_C])
    records, report = ds.parse_csv(path, ds.Source.NHANES)
    assert len(records) == 3
    assert report.rows_read == 3
    assert report.rows_kept == 3
    assert report.flagged_cells == []
    a = records[0]
    assert a.id == "a1"
    assert a.sex is ds.Sex.FEMALE
    assert a.race is ds.Race.NON_HISPANIC_WHITE
    assert a.fpg == pytest.approx(100.64)
    assert a.insulin == pytest.approx(12.26)
    assert a.diabetes_flag is False


def test_parse_empty_cell_becomes_missing_and_flagged(tmp_path):
    row = ROW_A.replace("100.64", "")
    path = make_nhanes(tmp_path, [row])
    records, report = ds.parse_csv(path, ds.Source.NHANES)
    assert records[0].fpg is None
    assert ("a1", "fpg_mgdl", "") in report.flagged_cells
    assert report.rows_flagged == 1


def test_parse_garbage_and_out_of_bounds_flagged(tmp_path):
    rows = [
        ROW_A.replace("100.64", "abc"),
        ROW_B.replace("24.0", "900"),  # impossible BMI
    ]
    path = make_nhanes(tmp_path, rows)
    records, report = ds.parse_csv(path, ds.Source.NHANES)
    assert records[0].fpg is None
    assert records[1].bmi is None
    flagged = {(rid, col) for rid, col, _ in report.flagged_cells}
    assert ("a1", "fpg_mgdl") in flagged
    assert ("b2", "bmi") in flagged


def test_parse_bmi_derived_from_height_weight(tmp_path):
    row = ROW_A.replace(",,,28.41,", ",170,81.0,,")
    path = make_nhanes(tmp_path, [row])
    records, _ = ds.parse_csv(path, ds.Source.NHANES)
    assert records[0].bmi == pytest.approx(81.0 / 1.70**2)


def test_parse_missing_mandatory_columns(tmp_path):
    path = write(tmp_path, "bad.csv", "id,age,sex\n1,40,male\n")
    with pytest.raises(SchemaError) as exc:
        ds.parse_csv(path, ds.Source.NHANES)
    assert "fpg_mgdl" in str(exc.value)
    assert "tg_mgdl" in str(exc.value)


def test_parse_empty_file(tmp_path):
    path = write(tmp_path, "empty.csv", "")
    with pytest.raises(SchemaError):
        ds.parse_csv(path, ds.Source.NHANES)


def test_parse_header_only_file(tmp_path):
    path = write(tmp_path, "header.csv", NHANES_HEADER + "\n")
    with pytest.raises(SchemaError):
        ds.parse_csv(path, ds.Source.NHANES)


def test_parse_charls_ignores_race_with_warning(tmp_path):
    # CHARLS-shaped but carrying a stray race column
    path = make_nhanes(tmp_path, [ROW_A])
    records, report = ds.parse_csv(path, ds.Source.CHARLS)
    assert any("race" in w for w in report.warnings)
    assert records[0].race is ds.Race.OTHER_MULTI
    assert records[0].insulin is None


def test_parse_charls_without_race_or_insulin(tmp_path):
    header = (
        "id,age,sex,bmi,waist_cm,pulse_bpm,systolic_mmhg,diastolic_mmhg,"
        "fpg_mgdl,tg_mgdl,hdl_mgdl,diabetes"
    )
    row = "x1,58,male,23.8,86,68,124,78,93.97,136.27,51.66,0"
    path = write(tmp_path, "charls.csv", f"{header}\n{row}\n")
    records, report = ds.parse_csv(path, ds.Source.CHARLS)
    assert report.warnings == []
    assert records[0].race is ds.Race.OTHER_MULTI
    assert records[0].insulin is None
    assert records[0].fpg == pytest.approx(93.97)


# ---------------------------------------------------------------------------
# exclusions


def rec(**kw):
    base = dict(
        id=kw.pop("id", "r"),
        source=kw.pop("source", ds.Source.NHANES),
        age=47.0,
        sex=ds.Sex.FEMALE,
        race=ds.Race.NON_HISPANIC_WHITE,
        bmi=28.41,
        waist=95.0,
        pulse=72.0,
        systolic=118.0,
        diastolic=76.0,
        fpg=100.64,
        insulin=12.26,
        tg=117.01,
        hdl=54.58,
        diabetes_flag=False,
    )
    base.update(kw)
    return ds.ParticipantRecord(**base)


def test_exclusion_reasons_and_precedence():
    records = [
        rec(id="ok"),
        rec(id="child", age=17.0),
        rec(id="child_diabetic", age=12.0, diabetes_flag=True),  # age wins
        rec(id="diabetic", diabetes_flag=True),
        rec(id="no_flag", diabetes_flag=None),
        rec(id="no_fpg", fpg=None),
    ]
    kept, report = ds.apply_exclusions(records, ds.Task.METS_CLASS)
    assert [r.id for r in kept] == ["ok"]
    assert report.counts == {"age": 2, "diabetes": 2, "incomplete": 1}
    assert report.kept == 1


def test_exclusions_idempotent():
    records = [rec(id=f"r{i}") for i in range(5)] + [rec(id="bad", age=10.0)]
    kept1, _ = ds.apply_exclusions(records, ds.Task.METS_CLASS)
    kept2, report2 = ds.apply_exclusions(kept1, ds.Task.METS_CLASS)
    assert [r.id for r in kept1] == [r.id for r in kept2]
    assert report2.counts == {"age": 0, "diabetes": 0, "incomplete": 0}


def test_charls_record_kept_without_insulin_for_mets_but_not_homa():
    r = rec(id="ch", source=ds.Source.CHARLS, race=ds.Race.OTHER_MULTI, insulin=None)
    kept_mets, _ = ds.apply_exclusions([r], ds.Task.METS_CLASS)
    kept_homa, rep_homa = ds.apply_exclusions([r], ds.Task.HOMA_CLASS)
    assert len(kept_mets) == 1
    assert kept_homa == []
    assert rep_homa.counts["incomplete"] == 1


def test_simplified_mask_relaxes_completeness():
    r = rec(id="nw", waist=None)
    kept_full, _ = ds.apply_exclusions([r], ds.Task.METS_CLASS, mask=ds.FULL_MASK)
    kept_simple, _ = ds.apply_exclusions([r], ds.Task.METS_CLASS, mask=ds.SIMPLIFIED_MASK)
    assert kept_full == []
    assert len(kept_simple) == 1


# ---------------------------------------------------------------------------
# targets


def test_derive_target_mets_classification_and_regression():
    r = rec(fpg=100.0, tg=117.0, bmi=28.41, hdl=54.58)
    value = ds.derive_target(r, ds.Task.METS_REGRESS)
    assert value == pytest.approx(40.91, abs=0.01)
    assert ds.derive_target(r, ds.Task.METS_CLASS) is False  # 40.91 <= 41.33


def test_derive_target_homa_boundary_is_negative():
    # 90 mg/dL is exactly 5 mmol/L; 5 * 11.25 / 22.5 == 2.5 exactly
    r = rec(fpg=90.0, insulin=11.25)
    assert ds.derive_target(r, ds.Task.HOMA_CLASS) is False
    r2 = rec(fpg=90.0, insulin=11.26)
    assert ds.derive_target(r2, ds.Task.HOMA_CLASS) is True


def test_derive_target_missing_field_names_it():
    r = rec(tg=None)
    with pytest.raises(DomainError) as exc:
        ds.derive_target(r, ds.Task.TYG_CLASS)
    assert "tg" in str(exc.value)


def test_target_array_dtype():
    rows = [rec(id="p"), rec(id="q", bmi=40.0)]
    y = ds.target_array(rows, ds.Task.METS_REGRESS)
    assert y.dtype == np.float64
    assert y.shape == (2,)


# ---------------------------------------------------------------------------
# splitting


def ids(n, prefix="r", source=ds.Source.NHANES):
    return [ds.ParticipantRecord(id=f"{prefix}{i}", source=source) for i in range(n)]


def test_split_sizes_survey_scale():
    records = ids(22008)
    sa = ds.split(records, seed=7)
    counts = sa.counts()
    assert counts["train"] == 13205
    assert counts["val"] == 4402
    assert counts["test"] == 4401
    assert counts["external"] == 0


def test_split_sizes_ten():
    sa = ds.split(ids(10), seed=1)
    c = sa.counts()
    assert (c["train"], c["val"], c["test"]) == (6, 2, 2)


def test_split_partition_and_determinism():
    records = ids(101)
    sa1 = ds.split(records, seed=42)
    sa2 = ds.split(records, seed=42)
    sa3 = ds.split(records, seed=43)
    assert sa1.assignment == sa2.assignment
    assert sa1.assignment != sa3.assignment
    assert set(sa1.assignment) == {r.id for r in records}
    assert sum(sa1.counts().values()) == 101


def test_split_charls_always_external():
    records = ids(8) + ids(3, prefix="c", source=ds.Source.CHARLS)
    sa = ds.split(records, seed=0)
    assert sa.counts()["external"] == 3
    for i in range(3):
        assert sa.assignment[f"c{i}"] is ds.Split.EXTERNAL
    # internal sizing ignores external rows: ceil(0.6*8)=5, round(0.2*8)=2
    c = sa.counts()
    assert (c["train"], c["val"], c["test"]) == (5, 2, 1)


def test_split_stratified_preserves_block_ratios():
    records = ids(100)
    labels = [i < 30 for i in range(100)]  # 30 positive, 70 negative
    sa = ds.split(records, seed=5, stratify_labels=labels)
    pos_train = sum(
        1 for r, lab in zip(records, labels)
        if lab and sa.assignment[r.id] is ds.Split.TRAIN
    )
    neg_train = sum(
        1 for r, lab in zip(records, labels)
        if not lab and sa.assignment[r.id] is ds.Split.TRAIN
    )
    assert pos_train == math.ceil(0.6 * 30)
    assert neg_train == math.ceil(0.6 * 70)


def test_split_manifest_round_trip(tmp_path):
    records = ids(9)
    sa = ds.split(records, seed=3)
    path = tmp_path / "manifest.csv"
    sa.write_manifest(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "id,split"
    assert len(lines) == 10
    # manifest rows follow input order
    assert [ln.split(",")[0] for ln in lines[1:]] == [r.id for r in records]


def test_split_rejects_bad_ratios():
    with pytest.raises(ConfigError):
        ds.split(ids(5), ratios=(0.5, 0.2, 0.2))
    with pytest.raises(ConfigError):
        ds.split(ids(5), ratios=(0.8, -0.1, 0.3))
    with pytest.raises(ConfigError):
        ds.split([])


@given(n=st.integers(min_value=1, max_value=400), seed=st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_split_property_sizes(n, seed):
    sa = ds.split(ids(n), seed=seed)
    c = sa.counts()
    assert c["train"] == math.ceil(0.6 * n)
    assert c["val"] == round(0.2 * n)
    assert c["train"] + c["val"] + c["test"] == n
    assert c["test"] >= 0


# ---------------------------------------------------------------------------
# encoding


def test_encoder_zscore_population_convention():
    train = [rec(id="a", bmi=1.0), rec(id="b", bmi=3.0)]
    enc = ds.fit_encoder(train)
    probe = enc.encode(rec(id="c", bmi=3.0))
    j = ds.NUMERIC_FEATURES.index("bmi")
    assert probe.numeric[j] == pytest.approx(1.0)  # (3-2)/1, population std
    probe_mean = enc.encode(rec(id="d", bmi=2.0))
    assert probe_mean.numeric[j] == pytest.approx(0.0)


def test_encoder_simplified_mask_slots():
    train = [rec(id="a"), rec(id="b", bmi=30.0, fpg=95.0)]
    enc = ds.fit_encoder(train, mask=ds.SIMPLIFIED_MASK)
    fv = enc.encode(rec(id="c"))
    assert fv.mask.sum() == 2
    for i, name in enumerate(ds.NUMERIC_FEATURES):
        if name in ("bmi", "fpg"):
            assert fv.mask[i]
            assert np.isfinite(fv.numeric[i])
        else:
            assert not fv.mask[i]
            assert np.isnan(fv.numeric[i])
    assert fv.categorical.tolist() == [-1, -1]


def test_encoder_zero_variance_clamps_with_warning():
    train = [rec(id="a", pulse=70.0), rec(id="b", pulse=70.0, bmi=31.0)]
    with pytest.warns(UserWarning, match="pulse"):
        enc = ds.fit_encoder(train)
    assert enc.stds["pulse"] == 1.0
    fv = enc.encode(rec(id="c", pulse=71.0))
    j = ds.NUMERIC_FEATURES.index("pulse")
    assert fv.numeric[j] == pytest.approx(1.0)


def test_encoder_categorical_round_trip_and_reserved_race():
    train = [
        rec(id="a", sex=ds.Sex.MALE, race=ds.Race.NON_HISPANIC_WHITE),
        rec(id="b", sex=ds.Sex.FEMALE, race=ds.Race.MEXICAN_AMERICAN),
    ]
    enc = ds.fit_encoder(train)
    for r in train:
        fv = enc.encode(r)
        assert enc.decode("sex", fv.categorical[0]) == r.sex.value
        assert enc.decode("race", fv.categorical[1]) == r.race.value
    # unseen race lands on the reserved bucket rather than failing
    probe = enc.encode(rec(id="c", race=ds.Race.NON_HISPANIC_BLACK))
    assert enc.decode("race", probe.categorical[1]) == ds.Race.OTHER_MULTI.value
    assert ds.Race.OTHER_MULTI.value in enc.vocabs["race"]


def test_encoder_unseen_sex_is_an_error():
    # a closed vocabulary cannot absorb new values
    train = [rec(id="a", sex=ds.Sex.MALE), rec(id="b", sex=ds.Sex.MALE, bmi=30.0)]
    enc = ds.fit_encoder(train)
    with pytest.raises(DomainError):
        enc.encode(rec(id="c", sex=ds.Sex.FEMALE))


def test_encoder_requires_fit_and_fits_once():
    enc = ds.FeatureEncoder()
    with pytest.raises(ConfigError):
        enc.encode(rec(id="x"))
    enc.fit([rec(id="a"), rec(id="b", bmi=30.0)])
    with pytest.raises(ConfigError):
        enc.fit([rec(id="c")])


def test_encoder_rejects_unknown_mask_names():
    with pytest.raises(ConfigError):
        ds.FeatureEncoder(mask=frozenset({"bmi", "cholesterol"}))
    with pytest.raises(ConfigError):
        ds.FeatureEncoder(mask=frozenset())


def test_encoder_persistence_round_trip():
    train = [rec(id="a"), rec(id="b", bmi=33.0, sex=ds.Sex.MALE)]
    enc = ds.fit_encoder(train)
    clone = ds.FeatureEncoder.from_dict(enc.to_dict())
    probe = rec(id="c", bmi=30.0)
    a, b = enc.encode(probe), clone.encode(probe)
    np.testing.assert_array_equal(a.numeric, b.numeric)
    np.testing.assert_array_equal(a.categorical, b.categorical)


def test_encode_batch_and_tree_matrix():
    train = [rec(id="a"), rec(id="b", bmi=33.0, sex=ds.Sex.MALE)]
    enc = ds.fit_encoder(train)
    batch = enc.encode_batch(train)
    assert len(batch) == 2
    X, cat_idx = batch.tree_matrix()
    assert X.shape == (2, 9)
    assert cat_idx == [7, 8]
    assert X[0, ds.NUMERIC_FEATURES.index("bmi")] == pytest.approx(28.41)
    sub = batch.take([1])
    assert sub.ids == ["b"]
    assert sub.num_raw[0, ds.NUMERIC_FEATURES.index("bmi")] == pytest.approx(33.0)


@given(
    values=st.lists(
        st.floats(min_value=15.0, max_value=60.0, allow_nan=False),
        min_size=2,
        max_size=40,
    ).filter(lambda v: max(v) - min(v) > 1e-6)
)
@settings(max_examples=40, deadline=None)
def test_encoder_train_zscores_standardized(values):
    train = [rec(id=f"r{i}", bmi=v) for i, v in enumerate(values)]
    enc = ds.fit_encoder(train)
    batch = enc.encode_batch(train)
    j = enc.numeric_names.index("bmi")
    col = batch.num_std[:, j]
    assert abs(col.mean()) < 1e-9
    assert abs(col.std() - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# synthetic cohorts


def test_synth_deterministic_and_clean():
    a = synth.generate_cohort(200, seed=11)
    b = synth.generate_cohort(200, seed=11)
    assert [r.id for r in a] == [r.id for r in b]
    assert all(x.fpg == y.fpg and x.hdl == y.hdl for x, y in zip(a, b))
    kept, report = ds.apply_exclusions(a, ds.Task.METS_CLASS)
    assert len(kept) == 200
    assert report.counts == {"age": 0, "diabetes": 0, "incomplete": 0}


def test_synth_labels_have_both_classes():
    cohort = synth.generate_cohort(500, seed=3)
    y = ds.target_array(cohort, ds.Task.METS_CLASS)
    assert 0.05 < y.mean() < 0.95
    y_homa = ds.target_array(cohort, ds.Task.HOMA_CLASS)
    assert 0.05 < y_homa.mean() < 0.95


def test_synth_charls_shape():
    cohort = synth.generate_cohort(50, seed=4, source=ds.Source.CHARLS)
    assert all(r.insulin is None for r in cohort)
    assert all(r.race is ds.Race.OTHER_MULTI for r in cohort)
    assert all(r.age >= 45.0 for r in cohort)


def test_synth_csv_round_trip(tmp_path):
    cohort = synth.generate_cohort(40, seed=9)
    path = tmp_path / "synth.csv"
    synth.write_cohort_csv(cohort, path, ds.Source.NHANES)
    records, report = ds.parse_csv(path, ds.Source.NHANES)
    assert report.flagged_cells == []
    assert len(records) == 40
    for orig, back in zip(cohort, records):
        assert back.id == orig.id
        assert back.fpg == pytest.approx(orig.fpg, abs=1e-5)
        assert back.hdl == pytest.approx(orig.hdl, abs=1e-5)
        assert back.sex is orig.sex
        assert back.race is orig.race


def test_synth_dirty_fraction_feeds_exclusions(tmp_path):
    cohort = synth.generate_cohort(100, seed=2, dirty_fraction=0.3)
    kept, report = ds.apply_exclusions(cohort, ds.Task.METS_CLASS)
    assert len(kept) == 70
    assert sum(report.counts.values()) == 30
    assert report.counts["age"] > 0
    assert report.counts["diabetes"] > 0
    assert report.counts["incomplete"] > 0
