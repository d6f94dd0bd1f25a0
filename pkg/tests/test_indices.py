import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irkit.errors import DomainError, SingularityError
from irkit.indices import (
    IndexKind,
    IndexValue,
    bmi,
    classify,
    glucose_mgdl_to_mmol,
    homa_ir,
    mets_ir,
    tyg,
)

# Independently re-typed formulas; kept separate from the implementation on
# purpose so the two paths can disagree.


def oracle_homa(fpg, ins):
    return fpg * ins / 22.5


def oracle_tyg(tg_v, fpg):
    return math.log(tg_v * fpg / 2.0)


def oracle_mets(fpg, tg_v, b, hdl):
    return math.log(2 * fpg + tg_v) * b / math.log(hdl)


class TestHomaIr:
    def test_hand_evaluated(self):
        assert homa_ir(5.0, 11.25).value == pytest.approx(2.5, abs=1e-12)

    def test_zero_case(self):
        assert homa_ir(0.0, 14.7).value == 0.0

    def test_cohort_mean_inputs(self):
        # FPG 100.64 mg/dL -> 5.591 mmol/L, insulin 12.26 uU/mL
        assert homa_ir(5.59, 12.26).value == pytest.approx(3.046, abs=1e-3)

    @pytest.mark.parametrize("args", [(-1.0, 5.0), (5.0, -1.0), (float("nan"), 5.0)])
    def test_domain_errors_name_argument(self, args):
        with pytest.raises(DomainError) as exc:
            homa_ir(*args)
        assert "fpg" in str(exc.value) or "insulin" in str(exc.value)


class TestTyg:
    def test_ln_one(self):
        assert tyg(2.0, 1.0).value == 0.0

    def test_ln_5000(self):
        assert tyg(100.0, 100.0).value == pytest.approx(8.5172, abs=1e-4)

    def test_cohort_mean_inputs(self):
        # mean-of-inputs TyG differs from the cohort's mean TyG (mean of logs)
        assert tyg(117.01, 100.64).value == pytest.approx(8.68, abs=0.01)

    def test_nonpositive_rejected(self):
        with pytest.raises(DomainError):
            tyg(0.0, 100.0)
        with pytest.raises(DomainError):
            tyg(100.0, -3.0)

    @given(
        tg_v=st.floats(1.0, 500.0),
        fpg=st.floats(30.0, 300.0),
        k=st.floats(0.01, 100.0),
    )
    def test_product_invariance(self, tg_v, fpg, k):
        # depends only on tg*fpg, so scaling one up and the other down cancels
        a = tyg(tg_v * k, fpg / k).value
        b = tyg(tg_v, fpg).value
        assert a == pytest.approx(b, abs=1e-9)


class TestMetsIr:
    def test_hand_evaluated(self):
        assert mets_ir(100, 117, 28.41, 54.58).value == pytest.approx(40.91, abs=0.005)

    def test_unit_denominator(self):
        v = mets_ir(100, 117, 28.41, math.e)
        assert v.value == pytest.approx(math.log(317) * 28.41, abs=1e-9)

    def test_charls_cohort_means(self):
        assert mets_ir(93.97, 136.27, 23.78, 51.66).value == pytest.approx(35.0, abs=0.3)

    def test_hdl_singularity(self):
        with pytest.raises(SingularityError):
            mets_ir(100, 117, 28.41, 1.0)
        with pytest.raises(SingularityError):
            mets_ir(100, 117, 28.41, 0.5)

    def test_nonpositive_bmi(self):
        with pytest.raises(DomainError):
            mets_ir(100, 117, 0.0, 54.58)

    @given(
        fpg=st.floats(30.0, 300.0),
        tg_v=st.floats(10.0, 500.0),
        b=st.floats(10.0, 80.0),
        hdl=st.floats(5.0, 150.0),
        bump=st.floats(0.1, 20.0),
    )
    @settings(max_examples=200)
    def test_monotonicity(self, fpg, tg_v, b, hdl, bump):
        base = mets_ir(fpg, tg_v, b, hdl).value
        assert mets_ir(fpg + bump, tg_v, b, hdl).value > base
        assert mets_ir(fpg, tg_v + bump, b, hdl).value > base
        assert mets_ir(fpg, tg_v, b + bump, hdl).value > base
        assert mets_ir(fpg, tg_v, b, hdl + bump).value < base


class TestClassify:
    @pytest.mark.parametrize(
        "kind,value,positive",
        [
            (IndexKind.METS_IR, 41.33, False),
            (IndexKind.METS_IR, 41.34, True),
            (IndexKind.HOMA_IR, 2.5, False),
            (IndexKind.HOMA_IR, 2.5000000001, True),
            (IndexKind.TYG, 8.85, False),
            (IndexKind.TYG, 8.86, True),
        ],
    )
    def test_boundary_in_negative_class(self, kind, value, positive):
        assert classify(IndexValue(kind, value)).positive is positive

    def test_strict_boundary_within_1e12(self):
        for kind in IndexKind:
            t = kind.threshold
            assert classify(IndexValue(kind, t - 1e-12)).positive is False
            assert classify(IndexValue(kind, t + 1e-12)).positive is True

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            classify(IndexValue(IndexKind.TYG, float("inf")))


class TestConversions:
    def test_glucose_zero(self):
        assert glucose_mgdl_to_mmol(0.0) == 0.0

    def test_glucose_90(self):
        assert glucose_mgdl_to_mmol(90.0) == 5.0

    def test_glucose_cohort_mean(self):
        assert glucose_mgdl_to_mmol(100.64) == pytest.approx(5.591, abs=1e-3)

    def test_glucose_alternate_constant(self):
        assert glucose_mgdl_to_mmol(18.016, mgdl_per_mmol=18.016) == 1.0

    def test_glucose_negative(self):
        with pytest.raises(DomainError):
            glucose_mgdl_to_mmol(-1.0)

    def test_bmi_hand(self):
        assert bmi(100, 200) == 25.0
        assert bmi(81.0, 180.0) == pytest.approx(25.0, abs=1e-12)

    def test_bmi_one_square_metre(self):
        assert bmi(63.0, 100.0) == 63.0

    def test_bmi_nonpositive(self):
        with pytest.raises(DomainError):
            bmi(0.0, 170.0)
        with pytest.raises(DomainError):
            bmi(70.0, -170.0)


class TestOracleAgreement:
    def test_all_three_against_retyped_oracle(self):
        import random

        rng = random.Random(20240817)
        for _ in range(1000):
            fpg_mg = rng.uniform(30, 300)
            tg_v = rng.uniform(10, 600)
            ins = rng.uniform(0.1, 80)
            b = rng.uniform(12, 70)
            hdl = rng.uniform(10, 150)
            fpg_mmol = glucose_mgdl_to_mmol(fpg_mg)
            assert abs(homa_ir(fpg_mmol, ins).value - oracle_homa(fpg_mmol, ins)) < 1e-12
            assert abs(tyg(tg_v, fpg_mg).value - oracle_tyg(tg_v, fpg_mg)) < 1e-12
            assert abs(
                mets_ir(fpg_mg, tg_v, b, hdl).value - oracle_mets(fpg_mg, tg_v, b, hdl)
            ) < 1e-12
