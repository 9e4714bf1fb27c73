import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mortsim import spa
from mortsim.spa import SCHEMES, SpaSchedule

TIMETABLE = Path(__file__).parent / "data" / "spa_timetable.csv"


def load_timetable():
    with open(TIMETABLE, newline="") as fh:
        return [(r["scheme"], r["sex"], int(r["birth_year"]), int(r["birth_month"]), int(r["spa_months"]))
                for r in csv.DictReader(fh)]


def test_matches_enumerated_timetable():
    rows = load_timetable()
    assert {r[0] for r in rows} == set(SCHEMES)
    for scheme, sex, y, m, months in rows:
        assert int(SpaSchedule.for_scheme(scheme).months(sex, spa.month_index(y, m))) == months, (scheme, sex, y, m)


def test_month_index_round_trip():
    for y, m in [(1921, 1), (1953, 11), (1990, 12)]:
        assert spa.from_month_index(spa.month_index(y, m)) == (y, m)


def test_pre_reform_is_constant():
    s = SpaSchedule.for_scheme("pre_reform")
    idx = np.arange(spa.month_index(1900, 1), spa.month_index(2020, 1))
    assert np.all(s.months("M", idx) == 780) and np.all(s.months("F", idx) == 720)


def test_given_examples():
    assert spa.spa_at("equal_spa", "F", 1965, 6) == (65, 0)
    assert spa.spa_at("accelerated_spa_68", "M", 1990, 1) == (68, 0)


def test_equalisation_completes_november_2018():
    assert spa.pension_date("equal_spa", "F", 1953, 11) == (2018, 11)
    assert spa.spa_at("equal_spa", "F", 1953, 10) < (65, 0)
    assert spa.pension_date("spa_68", "F", 1953, 11) == (2018, 11)


def test_unaccelerated_equalisation_runs_to_2020():
    s = SpaSchedule.for_scheme("spa_68", equalise_1995=True)
    assert spa.pension_date(s, "F", 1955, 3) == (2020, 3)
    assert spa.spa_at(s, "F", 1954, 3) < (65, 0)


def _transition_dates(scheme, sex, lo, hi):
    s = SpaSchedule.for_scheme(scheme)
    dates = []
    for idx in range(spa.month_index(1940, 1), spa.month_index(1995, 1)):
        m = int(s.months(sex, idx))
        if lo < m < hi:
            dates.append(spa.from_month_index(idx + m)[0])
    return min(dates), max(dates)


def test_accelerated_milestones():
    assert spa.pension_date("accelerated_spa_68", "M", 1954, 9) == (2020, 9)
    assert spa.spa_at("accelerated_spa_68", "M", 1953, 12) == (65, 3)
    assert _transition_dates("accelerated_spa_68", "M", 792, 804) == (2026, 2028)
    assert _transition_dates("accelerated_spa_68", "F", 804, 816) == (2044, 2046)


def test_spa_68_milestones():
    assert _transition_dates("spa_68", "M", 780, 792) == (2024, 2026)
    assert _transition_dates("spa_68", "M", 792, 804) == (2034, 2036)
    assert _transition_dates("spa_68", "M", 804, 816) == (2044, 2046)


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("sex", ["M", "F"])
def test_monotone_in_birth_date(scheme, sex):
    s = SpaSchedule.for_scheme(scheme)
    m = s.months(sex, np.arange(spa.month_index(1900, 1), spa.month_index(2010, 1)))
    assert np.all(np.diff(m) >= 0)
    assert m[-1] == s.plateau(sex)


@given(st.sampled_from(SCHEMES), st.sampled_from("MF"), st.integers(1921 * 12, 2000 * 12))
def test_vector_and_scalar_agree(scheme, sex, idx):
    s = SpaSchedule.for_scheme(scheme)
    female = np.array([sex == "F"])
    assert s.months_by_sex(female, np.array([idx]))[0] == s.months(sex, idx)


def test_unknown_scheme():
    with pytest.raises(ValueError):
        SpaSchedule.for_scheme("spa_70")
