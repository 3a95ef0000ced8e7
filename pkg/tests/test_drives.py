import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from homeorl.drives import (
    AFFECTIVE,
    COGNITIVE,
    CONDITIONS,
    FULL,
    NONE,
    BinaryEnergy,
    EmpathyCondition,
    PreferenceDist,
    couple_drives,
    drive_categorical,
    drive_quadratic,
    get_condition,
    homeostatic_reward,
)

HIGH, LOW = BinaryEnergy.HIGH, BinaryEnergy.LOW
finite = st.floats(min_value=-10, max_value=10, allow_nan=False)


class TestDriveCategorical:
    def test_high_preference(self):
        # -ln 0.95 = 0.0512932943875505
        assert drive_categorical(HIGH, PreferenceDist(0.95, 0.05)) == pytest.approx(0.051293, abs=1e-6)

    def test_low_preference(self):
        # -ln 0.05 = 2.995732273553991
        assert drive_categorical(LOW, PreferenceDist(0.95, 0.05)) == pytest.approx(2.995732, abs=1e-6)

    def test_uniform_preference_is_symmetric(self):
        pref = PreferenceDist(0.5, 0.5)
        assert drive_categorical(HIGH, pref) == drive_categorical(LOW, pref)

    @given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
    def test_strictly_positive(self, p):
        pref = PreferenceDist(p, 1.0 - p)
        assert drive_categorical(HIGH, pref) > 0
        assert drive_categorical(LOW, pref) > 0

    @pytest.mark.parametrize("p_high,p_low", [(0.0, 1.0), (1.0, 0.0), (0.6, 0.6), (-0.1, 1.1)])
    def test_invalid_preferences_rejected(self, p_high, p_low):
        with pytest.raises(ValueError):
            PreferenceDist(p_high, p_low)


class TestDriveQuadratic:
    @pytest.mark.parametrize("energy,expected", [(0.0, 0.0), (0.5, 0.25), (-0.7, 0.49)])
    def test_examples(self, energy, expected):
        assert drive_quadratic(energy) == pytest.approx(expected, abs=1e-15)

    # squares of |e| < 1e-154 underflow to 0.0
    @given(finite.filter(lambda e: e == 0 or abs(e) > 1e-150))
    def test_non_negative_and_zero_only_at_setpoint(self, e):
        d = drive_quadratic(e)
        assert d >= 0
        assert (d == 0) == (e == 0)


class TestCoupling:
    def test_affective_example(self):
        # 0.051293 + 0.5 * 2.995732 = 1.549159
        assert couple_drives(0.051293, 2.995732, AFFECTIVE) == pytest.approx(1.549159, abs=1e-6)

    @given(finite, finite)
    def test_none_ignores_partner(self, x, y):
        assert couple_drives(x, y, NONE) == x

    def test_zero_drives(self):
        assert couple_drives(0.0, 0.0, FULL) == 0.0

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 2))
    def test_monotone_in_partner_drive(self, d_self, a, b, w):
        cond = EmpathyCondition("x", False, w)
        lo, hi = sorted((a, b))
        assert couple_drives(d_self, lo, cond) <= couple_drives(d_self, hi, cond)

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
    def test_constant_in_partner_drive_without_coupling(self, d_self, a, b):
        assert couple_drives(d_self, a, COGNITIVE) == couple_drives(d_self, b, COGNITIVE)

    def test_condition_table(self):
        table = {c.name: (c.observe_partner, c.coupling_w) for c in CONDITIONS.values()}
        assert table == {
            "none": (False, 0.0),
            "cognitive": (True, 0.0),
            "affective": (False, 0.5),
            "full": (True, 0.5),
        }

    def test_lookup_by_name(self):
        assert get_condition("Affective") is AFFECTIVE
        with pytest.raises(ValueError, match="unknown empathy condition"):
            get_condition("sympathy")


class TestReward:
    def test_grid_drift_example(self):
        # 100 * (0.25 - 0.497**2) = 100 * 0.002991
        assert homeostatic_reward(0.25, 0.247009, 100) == pytest.approx(0.2991, abs=1e-9)

    @given(st.floats(0, 100), st.floats(0.1, 1000))
    def test_unchanged_drive_gives_zero(self, d, beta):
        assert homeostatic_reward(d, d, beta) == 0

    def test_affective_pass_example(self):
        # Partner Low -> High while possessor stays High, coupled with w = 0.5:
        # before 0.051293 + 0.5*2.995732, after 1.5*0.051293 = 0.076940
        assert homeostatic_reward(1.549159, 0.076940, 1.0) == pytest.approx(1.472219, abs=1e-9)

    def test_beta_must_be_positive(self):
        with pytest.raises(ValueError):
            homeostatic_reward(1.0, 0.0, 0.0)

    @given(st.lists(st.floats(0, 50), min_size=2, max_size=60), st.floats(0.1, 200))
    def test_rewards_telescope(self, drives, beta):
        total = sum(homeostatic_reward(a, b, beta) for a, b in zip(drives, drives[1:]))
        assert math.isclose(total, beta * (drives[0] - drives[-1]), abs_tol=1e-9)
