import math

import pytest
from hypothesis import given, strategies as st

from walkforge.schedule import (
    ParameterSchedule,
    ScheduleStructureError,
    default_desk_schedule,
    eta_of,
    roomy_desk_schedule,
    schedule_hash,
    validate,
)


def desk_n1():
    return ParameterSchedule(levels=1, a=(1, 352), b=(4,), beta=(44,),
                             eta=(0.0625,), K=(None,), mode="desk")


class TestEtaOf:
    def test_level_one(self):
        assert eta_of(1, 4) == 0.0625

    def test_level_two_against_high_precision_oracle(self):
        # 1 / (1408 * sqrt(1408)) evaluated with 50-digit decimal arithmetic
        assert eta_of(2, 1408) == pytest.approx(1.8927620415093256e-05,
                                                rel=1e-14)

    def test_monotone_in_level(self):
        assert eta_of(4, 997) > eta_of(2, 997)

    @given(st.integers(min_value=1, max_value=12),
           st.integers(min_value=2, max_value=10**9))
    def test_bounds(self, n, b):
        v = eta_of(n, b)
        assert 0.0 < v < 1.0
        assert v <= 1.0 / b  # exponent is always > 1

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            eta_of(0, 4)
        with pytest.raises(ValueError):
            eta_of(1, 1)


class TestValidateDesk:
    def test_hand_checked_level_one_schedule_is_valid(self):
        # 1|4, 4|44, 4|352, 44 >= 44, 352 >= 8*44
        report = validate(desk_n1())
        assert report.ok
        assert report.violations == ()

    def test_odd_period_violates_parity(self):
        s = ParameterSchedule(levels=1, a=(1, 353), b=(4,), beta=(44,),
                              eta=(0.0625,), K=(None,), mode="desk")
        assert "(i)" in validate(s).labels()

    def test_divisibility_violations_labeled(self):
        s = ParameterSchedule(levels=1, a=(1, 352), b=(4,), beta=(46,),
                              eta=(0.0625,), K=(None,), mode="desk",
                              eta_auto=False)
        assert "(ii)" in validate(s).labels()

    def test_obstacle_fit_rule(self):
        s = ParameterSchedule(levels=1, a=(1, 352), b=(4,), beta=(40,),
                              eta=(0.0625,), K=(None,), mode="desk",
                              eta_auto=False)
        assert "desk-fit" in validate(s).labels()

    def test_room_rule(self):
        s = ParameterSchedule(levels=1, a=(1, 176), b=(4,), beta=(44,),
                              eta=(0.0625,), K=(None,), mode="desk",
                              eta_auto=False)
        assert "desk-room" in validate(s).labels()

    def test_eta_formula_checked_when_auto(self):
        s = ParameterSchedule(levels=1, a=(1, 352), b=(4,), beta=(44,),
                              eta=(0.5,), K=(None,), mode="desk")
        assert "eta-formula" in validate(s).labels()

    def test_structural_error_distinct_from_violations(self):
        s = ParameterSchedule(levels=2, a=(1, 352), b=(4,), beta=(44,),
                              eta=(0.0625,), K=(None,), mode="desk")
        with pytest.raises(ScheduleStructureError):
            validate(s)

    def test_validate_is_pure(self):
        s = desk_n1()
        assert validate(s) == validate(s)


class TestValidateStrict:
    def test_small_b1_violates_magnitude_bound(self):
        s = ParameterSchedule(levels=1, a=(1, 352), b=(4,), beta=(44,),
                              eta=(0.0625,), K=(None,), mode="strict")
        report = validate(s)
        assert "(iii)" in report.labels()

    def test_unverifiable_conditions_flagged_not_violated(self):
        s = ParameterSchedule(levels=1, a=(1, 352), b=(4,), beta=(44,),
                              eta=(0.0625,), K=(None,), mode="strict")
        report = validate(s)
        flag_labels = [label for label, _ in report.flags]
        assert "(vii)" in flag_labels
        assert "(clubsuit)" in flag_labels
        assert "(vii)" not in report.labels()

    def test_magnitude_window_checked(self):
        # b inside [a/sqrt(2), a] for n=1 requires b close to a; 4 is not
        s = ParameterSchedule(levels=1, a=(1, 352), b=(4,), beta=(44,),
                              eta=(0.0625,), K=(None,), mode="strict")
        assert "(iv)" in validate(s).labels()


class TestGenerators:
    def test_default_level_one_values(self):
        s = default_desk_schedule(1)
        assert s.a == (1, 352)
        assert s.b == (4,)
        assert s.beta == (44,)
        assert s.eta == (0.0625,)
        assert s.K == (None,)

    def test_default_level_two_values(self):
        s = default_desk_schedule(2)
        assert s.b[1] == 1408
        assert s.beta[1] == 15488
        assert s.a[2] == 123904

    @pytest.mark.parametrize("N", [1, 2, 3, 4, 5, 6])
    def test_default_always_validates(self, N):
        assert validate(default_desk_schedule(N)).ok

    @pytest.mark.parametrize("N", [1, 2, 3])
    def test_roomy_validates_and_has_corner_room(self, N):
        s = roomy_desk_schedule(N)
        assert validate(s).ok
        for n in range(1, N + 1):
            assert 8 * s.beta_at(n) < s.a_at(n)

    @pytest.mark.parametrize("N", [1, 2, 3, 4])
    def test_obstacle_fits_inside_inner_region(self, N):
        # containment geometry shared by both generators
        for s in (default_desk_schedule(N), roomy_desk_schedule(N)):
            for n in range(1, N + 1):
                assert s.beta_at(n) + s.b_at(n) < s.a_at(n) // 2
                assert 10 * s.b_at(n) + 1 <= 2 * s.beta_at(n)


class TestAccessorsAndSerialization:
    def test_level_accessors(self):
        s = default_desk_schedule(2)
        assert s.a_at(0) == 1
        assert s.b_at(2) == 1408
        assert s.half_a(1) == 176
        with pytest.raises(IndexError):
            s.b_at(0)
        with pytest.raises(IndexError):
            s.a_at(3)

    def test_round_trip(self):
        s = default_desk_schedule(2).with_K(1, 3.5)
        d = s.to_dict()
        assert ParameterSchedule.from_dict(d) == s

    def test_with_K_is_functional(self):
        s = default_desk_schedule(1)
        s2 = s.with_K(1, 2.0)
        assert s.K == (None,)
        assert s2.K == (2.0,)
        with pytest.raises(ValueError):
            s.with_K(1, -1.0)

    def test_hash_stable_and_sensitive(self):
        s = default_desk_schedule(1)
        assert schedule_hash(s) == schedule_hash(default_desk_schedule(1))
        assert schedule_hash(s) != schedule_hash(s.with_K(1, 2.0))

    @given(st.integers(min_value=1, max_value=4))
    def test_hash_matches_round_trip(self, N):
        s = roomy_desk_schedule(N)
        assert schedule_hash(ParameterSchedule.from_dict(s.to_dict())) \
            == schedule_hash(s)
