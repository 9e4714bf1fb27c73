"""Enumerate pension ages month by month, spreadsheet style.

Independent of ``mortsim.spa``: each timetable starts from its 1921 value
and, walking forward one birth month at a time, adds the step that applies
to that month. Writes tests/data/spa_timetable.csv.
"""

import csv
from pathlib import Path

FIRST, LAST = (1921, 1), (1990, 12)

# (first birth month, last birth month, months added per birth month)
EQUALISE = [((1950, 4), (1953, 3), 1), ((1953, 4), (1953, 11), 3)]
TO_68 = [((1959, 4), (1960, 3), 1), ((1968, 4), (1969, 3), 1), ((1977, 4), (1978, 3), 1)]
ACCELERATED = [((1953, 12), (1953, 12), 3), ((1954, 1), (1954, 9), 1),
               ((1960, 4), (1961, 3), 1), ((1977, 4), (1978, 3), 1)]

RULES = {
    ("pre_reform", "M"): (780, []),
    ("pre_reform", "F"): (720, []),
    ("equal_spa", "M"): (780, []),
    ("equal_spa", "F"): (720, EQUALISE),
    ("spa_68", "M"): (780, TO_68),
    ("spa_68", "F"): (720, EQUALISE + TO_68),
    ("accelerated_spa_68", "M"): (780, ACCELERATED),
    ("accelerated_spa_68", "F"): (720, EQUALISE + ACCELERATED),
}


def months():
    y, m = FIRST
    while (y, m) <= LAST:
        yield y, m
        y, m = (y, m + 1) if m < 12 else (y + 1, 1)


def main() -> None:
    out = Path(__file__).resolve().parents[1] / "tests" / "data" / "spa_timetable.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "sex", "birth_year", "birth_month", "spa_months"])
        for (scheme, sex), (spa, steps) in RULES.items():
            for ym in months():
                for lo, hi, step in steps:
                    if lo <= ym <= hi:
                        spa += step
                w.writerow([scheme, sex, ym[0], ym[1], spa])
    print(out)


if __name__ == "__main__":
    main()
