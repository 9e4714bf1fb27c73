"""State pension age timetables.

Each scheme is a piecewise-linear map from birth month to pension age in
months, one per sex. Between breakpoints the age rises by a whole number of
months per birth month; outside them it stays at the nearest plateau.

Birth months are indexed as ``year * 12 + (month - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCHEMES = ("pre_reform", "equal_spa", "spa_68", "accelerated_spa_68")


def month_index(year: int, month: int) -> int:
    return year * 12 + (month - 1)


def from_month_index(idx: int) -> tuple[int, int]:
    return idx // 12, idx % 12 + 1


def _bp(*points):
    return tuple((month_index(y, m), spa) for (y, m), spa in points)


# women, Pensions Act 1995 phase-in accelerated in 2016 to finish in November 2018
_EQUALISE_2018 = ((1950, 3), 720), ((1953, 3), 756), ((1953, 11), 780)
_EQUALISE_2020 = ((1950, 3), 720), ((1955, 3), 780)
_TO_68_2007 = (
    ((1959, 3), 780), ((1960, 3), 792),
    ((1968, 3), 792), ((1969, 3), 804),
    ((1977, 3), 804), ((1978, 3), 816),
)
_TO_68_ACCELERATED = (
    ((1953, 11), 780), ((1953, 12), 783), ((1954, 9), 792),
    ((1960, 3), 792), ((1961, 3), 804),
    ((1977, 3), 804), ((1978, 3), 816),
)

_TABLES = {
    "pre_reform": {"M": _bp(((1900, 1), 780)), "F": _bp(((1900, 1), 720))},
    "equal_spa": {"M": _bp(((1900, 1), 780)), "F": _bp(*_EQUALISE_2018)},
    "spa_68": {"M": _bp(*_TO_68_2007), "F": _bp(*_EQUALISE_2018, *_TO_68_2007)},
    "accelerated_spa_68": {
        "M": _bp(*_TO_68_ACCELERATED),
        "F": _bp(*_EQUALISE_2018[:2], *_TO_68_ACCELERATED),
    },
}

# SPA-68 with women equalising on the unaccelerated 1995 timetable (65 by March 2020)
_SPA_68_1995 = {"M": _TABLES["spa_68"]["M"], "F": _bp(*_EQUALISE_2020, *_TO_68_2007)}


@dataclass(frozen=True)
class SpaSchedule:
    scheme: str
    male: tuple
    female: tuple

    @classmethod
    def for_scheme(cls, scheme: str, equalise_1995: bool = False) -> "SpaSchedule":
        """Timetable for ``scheme``.

        ``equalise_1995`` only affects ``spa_68``: women then follow the 1995
        Act alone and reach 65 in March 2020 instead of November 2018.
        """
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
        table = _SPA_68_1995 if (scheme == "spa_68" and equalise_1995) else _TABLES[scheme]
        return cls(scheme, table["M"], table["F"])

    def _points(self, sex: str):
        pts = self.male if sex == "M" else self.female
        xs = np.array([p[0] for p in pts], dtype=float)
        ys = np.array([p[1] for p in pts], dtype=float)
        return xs, ys

    def months(self, sex: str, birth_index) -> np.ndarray:
        """Pension age in months for birth month index/indices."""
        xs, ys = self._points(sex)
        return np.rint(np.interp(np.asarray(birth_index, dtype=float), xs, ys)).astype(np.int64)

    def months_by_sex(self, is_female: np.ndarray, birth_index: np.ndarray) -> np.ndarray:
        out = self.months("M", birth_index)
        if np.any(is_female):
            out = np.where(is_female, self.months("F", birth_index), out)
        return out

    def plateau(self, sex: str) -> int:
        """Final pension age in months, reached by the latest cohorts."""
        return int((self.male if sex == "M" else self.female)[-1][1])


def spa_at(scheme, sex: str, birth_year: int, birth_month: int = 7) -> tuple[int, int]:
    """Pension age as (years, months) for someone born in the given month."""
    sched = scheme if isinstance(scheme, SpaSchedule) else SpaSchedule.for_scheme(scheme)
    m = int(sched.months(sex, month_index(birth_year, birth_month)))
    return m // 12, m % 12


def pension_date(scheme, sex: str, birth_year: int, birth_month: int) -> tuple[int, int]:
    """Calendar (year, month) in which the pension age is reached."""
    sched = scheme if isinstance(scheme, SpaSchedule) else SpaSchedule.for_scheme(scheme)
    b = month_index(birth_year, birth_month)
    return from_month_index(b + int(sched.months(sex, b)))
