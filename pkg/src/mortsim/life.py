"""Cohort life-table measures over a spliced historical + forecast surface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_io import MortalitySurface
from .errors import DegenerateCurve, InsufficientHorizon, SchemeUndefined, ShapeMismatch
from .spa import SpaSchedule, month_index

ADULT_AGE = 15


@dataclass(frozen=True)
class CohortSurvival:
    """``l[a]``: probability of being alive at exact age a, for a = 0..M+1."""

    birth_year: int
    l: np.ndarray


def _cohort_q(s: MortalitySurface, birth_year: int, first_age: int, last_age: int) -> np.ndarray:
    """q along the cohort diagonal for ages first_age..last_age."""
    y0, y1 = birth_year + first_age, birth_year + last_age
    if not s.covers(y0, y1):
        raise InsufficientHorizon(
            f"cohort {birth_year} ages {first_age}-{last_age} need years {y0}-{y1}; "
            f"surface covers {s.first_year}-{s.last_year}"
        )
    ages = np.arange(first_age, last_age + 1)
    return s.q[ages + birth_year - s.first_year, ages]


def survival_curve(s: MortalitySurface, birth_year: int) -> CohortSurvival:
    q = _cohort_q(s, birth_year, 0, s.max_age)
    l = np.concatenate([[1.0], np.cumprod(1.0 - q)])
    return CohortSurvival(birth_year, l)


def minimum_horizon(birth_year: int, age: int, max_age: int = 100) -> int:
    """Last calendar year a life-expectancy read for this cohort needs."""
    return birth_year + max(age, max_age - 1)


def life_expectancy_at(s: MortalitySurface, birth_year: int, age: int) -> float:
    """Curtate expectation of life at ``age`` plus half a year.

    Survival is followed up to age M; anyone still alive at M is credited
    with the same half year as everyone else, which biases the value down
    when mortality at M is low.
    """
    if not 0 <= age <= s.max_age:
        raise ValueError(f"age {age} outside 0..{s.max_age}")
    if age == s.max_age:
        return 0.5
    q = _cohort_q(s, birth_year, age, s.max_age - 1)
    return float(np.sum(np.cumprod(1.0 - q)) + 0.5)


def life_expectancy_fractional(s: MortalitySurface, birth_year: int, age_months: int) -> float:
    """Linear interpolation between whole-year expectancies at a months-precise age."""
    whole, frac = divmod(int(age_months), 12)
    e0 = life_expectancy_at(s, birth_year, whole)
    if frac == 0:
        return e0
    e1 = life_expectancy_at(s, birth_year, min(whole + 1, s.max_age))
    return e0 + (e1 - e0) * frac / 12.0


@dataclass(frozen=True)
class RetirementExpectancy:
    birth_year: int
    pension_age_months: int
    expectancy: float
    share_of_adult_life: float
    share_of_life: float


def _shares(age_years: float, e: float) -> tuple[float, float]:
    return e / (age_years - ADULT_AGE + e), e / (age_years + e)


def retiring_cohort(schedule: SpaSchedule, sex: str, retirement_year: int) -> tuple[int, int]:
    """Birth year of the cohort (born mid-year) reaching pension age in ``retirement_year``.

    When several birth years qualify the latest one is used. Returns the
    birth year and the pension age in months.
    """
    found = None
    for b in range(retirement_year - 90, retirement_year - 30):
        idx = month_index(b, 7)
        spa = int(schedule.months(sex, idx))
        if (idx + spa) // 12 == retirement_year:
            found = (b, spa)
    if found is None:
        raise SchemeUndefined(f"no {schedule.scheme} cohort reaches pension age in {retirement_year}")
    return found


def retirement_life_expectancy(s: MortalitySurface, retirement_year: int, scheme, sex: str | None = None):
    schedule = scheme if isinstance(scheme, SpaSchedule) else SpaSchedule.for_scheme(scheme)
    sex = sex or s.sex
    birth, spa = retiring_cohort(schedule, sex, retirement_year)
    e = life_expectancy_fractional(s, birth, spa)
    adult, total = _shares(spa / 12.0, e)
    return RetirementExpectancy(birth, spa, e, adult, total)


def expectancy_at_age(s: MortalitySurface, retirement_year: int, age: int) -> RetirementExpectancy:
    """Expectancy for the cohort turning ``age`` in ``retirement_year``."""
    birth = retirement_year - age
    e = life_expectancy_at(s, birth, age)
    adult, total = _shares(float(age), e)
    return RetirementExpectancy(birth, age * 12, e, adult, total)


def mortality_sex_ratio(male: MortalitySurface, female: MortalitySurface) -> np.ndarray:
    """ln(q_male / q_female) per (year, age); positive means excess male mortality."""
    if male.q.shape != female.q.shape or male.first_year != female.first_year:
        raise ShapeMismatch("male and female surfaces cover different ranges")
    return np.log(male.q) - np.log(female.q)


def _upper_quantile(cdf: np.ndarray, p: float) -> int:
    return int(np.argmax(cdf > p))


def rectangularisation_index(c: CohortSurvival) -> float:
    """Interquartile range of the age at death implied by ``l``.

    Deaths at age a carry mass l[a] - l[a+1]; whoever survives past M is
    placed at M+1. Quartiles are the smallest ages whose cumulative mass
    strictly exceeds 1/4 and 3/4.
    """
    l = np.asarray(c.l, dtype=float)
    mass = np.append(l[:-1] - l[1:], l[-1])
    total = mass.sum()
    if not total > 0:
        raise DegenerateCurve("survival curve carries no mass")
    cdf = np.cumsum(mass) / total
    cdf[-1] = 1.0
    return float(_upper_quantile(cdf, 0.75) - _upper_quantile(cdf, 0.25))
