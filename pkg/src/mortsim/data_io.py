"""Tables in and out: mortality surfaces, population, flows, fertility, forecasts.

Loaders reject malformed input instead of repairing it. Rates are treated
as period qx rates, rectangular in (year, age); cohort reads are computed
views over that grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import stats
from .errors import (
    DuplicateCell,
    EmptyEnsemble,
    MissingCell,
    ParseError,
    RangeError,
    ShapeMismatch,
)

SEXES = ("M", "F")
ORIGINS = ("domestic", "eu_immigrant", "other_immigrant", "uk_abroad")
CORRIDORS = ("eu", "other", "uk_citizens")
DIRECTIONS = ("in", "out")

MORTALITY_HEADER = ["year", "age", "sex", "qx"]
POPULATION_HEADER = ["age", "sex", "origin", "arrival_year", "count"]
FLOW_HEADER = ["year", "corridor", "sex", "age_lo", "age_hi", "direction", "count"]
FERTILITY_HEADER = ["age", "rate"]
FORECAST_HEADER = ["year", "age", "sex", "median", "p2_5", "p97_5"]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_sex(sex: str) -> str:
    if sex not in SEXES:
        raise ParseError(f"sex must be one of {SEXES}, got {sex!r}")
    return sex


@dataclass(frozen=True)
class MortalitySurface:
    """Annual death probabilities ``q[year - first_year, age]`` for one sex."""

    sex: str
    first_year: int
    q: np.ndarray

    def __post_init__(self):
        _check_sex(self.sex)
        q = _frozen(self.q)
        if q.ndim != 2 or q.shape[0] < 1 or q.shape[1] < 1:
            raise ShapeMismatch(f"q must be a non-empty 2-d grid, got shape {q.shape}")
        if not np.all(np.isfinite(q)) or np.any(q <= 0) or np.any(q > 1):
            bad = np.argwhere(~((q > 0) & (q <= 1)))[0]
            raise RangeError(
                f"qx outside (0, 1] at year={self.first_year + bad[0]}, age={bad[1]}"
            )
        object.__setattr__(self, "q", q)

    @property
    def last_year(self) -> int:
        return self.first_year + self.q.shape[0] - 1

    @property
    def max_age(self) -> int:
        return self.q.shape[1] - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.first_year, self.last_year + 1)

    def covers(self, first: int, last: int) -> bool:
        return self.first_year <= first and last <= self.last_year

    def rate(self, year: int, age: int) -> float:
        return float(self.q[year - self.first_year, min(age, self.max_age)])


@dataclass(frozen=True)
class LogRateSurface:
    sex: str
    first_year: int
    x: np.ndarray

    def __post_init__(self):
        _check_sex(self.sex)
        x = _frozen(self.x)
        if x.ndim != 2:
            raise ShapeMismatch(f"x must be 2-d, got shape {x.shape}")
        if np.any(x > 0) or not np.all(np.isfinite(x)):
            raise RangeError("log-rates must be finite and <= 0")
        object.__setattr__(self, "x", x)

    @property
    def last_year(self) -> int:
        return self.first_year + self.x.shape[0] - 1

    @property
    def max_age(self) -> int:
        return self.x.shape[1] - 1

    @property
    def n_years(self) -> int:
        return self.x.shape[0]


def to_log_rates(s: MortalitySurface) -> LogRateSurface:
    return LogRateSurface(s.sex, s.first_year, np.log(s.q))


def from_log_rates(x: LogRateSurface) -> MortalitySurface:
    return MortalitySurface(x.sex, x.first_year, np.exp(x.x))


def splice(history: MortalitySurface, forecast_q: np.ndarray) -> MortalitySurface:
    """Append forecast years directly after the last historical year."""
    forecast_q = np.asarray(forecast_q, dtype=float)
    if forecast_q.ndim != 2 or forecast_q.shape[1] != history.q.shape[1]:
        raise ShapeMismatch(
            f"forecast grid {forecast_q.shape} does not match ages 0..{history.max_age}"
        )
    return MortalitySurface(history.sex, history.first_year, np.vstack([history.q, forecast_q]))


def _open_csv(path, header: Sequence[str]):
    path = Path(path)
    fh = path.open(newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        first = next(reader)
    except StopIteration:
        fh.close()
        raise ParseError(f"{path}: empty file")
    if [c.strip() for c in first] != list(header):
        fh.close()
        raise ParseError(f"{path}: expected header {','.join(header)}, got {','.join(first)}")
    return fh, reader


def _rows(path, header: Sequence[str]):
    fh, reader = _open_csv(path, header)
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def _int(value: str, where: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{where}: not an integer: {value!r}") from None


def _float(value: str, where: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise ParseError(f"{where}: not a number: {value!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{where}: not finite: {value!r}")
    return v


def load_mortality_csv(path, sex: str | None = None, floor: float | None = None) -> MortalitySurface:
    """Load one sex from a ``year,age,sex,qx`` file.

    Rows may come in any order. ``sex`` may be omitted when the file holds a
    single sex. ``floor`` replaces q by max(q, floor) before validation; off by
    default, zeros are an error.
    """
    cells: dict[str, dict[tuple[int, int], float]] = {}
    for lineno, (y, a, s, qx) in _rows(path, MORTALITY_HEADER):
        where = f"{path}:{lineno}"
        s = _check_sex(s)
        key = (_int(y, where), _int(a, where))
        value = _float(qx, where)
        bucket = cells.setdefault(s, {})
        if key in bucket:
            raise DuplicateCell(f"{where}: duplicate cell year={key[0]}, age={key[1]}, sex={s}")
        bucket[key] = value
    if not cells:
        raise ParseError(f"{path}: no data rows")
    if sex is None:
        if len(cells) > 1:
            raise ParseError(f"{path}: file holds both sexes, pass sex=")
        sex = next(iter(cells))
    if sex not in cells:
        raise ParseError(f"{path}: no rows for sex {sex}")
    bucket = cells[sex]
    years = [k[0] for k in bucket]
    ages = [k[1] for k in bucket]
    y0, y1, a1 = min(years), max(years), max(ages)
    if min(ages) != 0:
        raise MissingCell(f"{path}: ages must start at 0")
    q = np.empty((y1 - y0 + 1, a1 + 1))
    for t in range(y0, y1 + 1):
        for i in range(a1 + 1):
            try:
                q[t - y0, i] = bucket[(t, i)]
            except KeyError:
                raise MissingCell(f"{path}: missing cell year={t}, age={i}, sex={sex}") from None
    if floor is not None:
        q = np.maximum(q, floor)
    if np.any(q <= 0) or np.any(q > 1):
        t, i = np.argwhere((q <= 0) | (q > 1))[0]
        raise RangeError(f"{path}: qx={q[t, i]} outside (0, 1] at year={y0 + t}, age={i}")
    return MortalitySurface(sex, y0, q)


def load_mortality_pair(path, floor: float | None = None) -> dict[str, MortalitySurface]:
    """Both sexes from one file, with identical year/age ranges."""
    out = {s: load_mortality_csv(path, s, floor) for s in SEXES}
    if out["M"].q.shape != out["F"].q.shape or out["M"].first_year != out["F"].first_year:
        raise ShapeMismatch(f"{path}: male and female grids differ in range")
    return out


def write_mortality_csv(surfaces: Iterable[MortalitySurface], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MORTALITY_HEADER)
        for s in surfaces:
            for t, year in enumerate(s.years):
                for i in range(s.max_age + 1):
                    w.writerow([int(year), i, s.sex, f"{s.q[t, i]:.12g}"])


@dataclass(frozen=True)
class PopulationTable:
    """Base-year resident counts.

    ``cells`` maps (age, sex, origin) to ``{arrival_year: count}``; domestic
    and ``uk_abroad`` cells use the key ``None``.
    """

    base_year: int
    max_age: int
    cells: dict

    def total(self) -> int:
        return sum(sum(h.values()) for h in self.cells.values())


def load_population_csv(path, base_year: int, max_age: int = 100) -> PopulationTable:
    cells: dict = {}
    for lineno, (a, s, origin, arrival, count) in _rows(path, POPULATION_HEADER):
        where = f"{path}:{lineno}"
        age = _int(a, where)
        if not 0 <= age <= max_age:
            raise RangeError(f"{where}: age {age} outside 0..{max_age}")
        _check_sex(s)
        if origin == "other":
            origin = "other_immigrant"
        if origin not in ORIGINS:
            raise ParseError(f"{where}: unknown origin {origin!r}")
        immigrant = origin in ("eu_immigrant", "other_immigrant")
        if immigrant and not arrival:
            raise ParseError(f"{where}: immigrant rows need arrival_year")
        if not immigrant and arrival:
            raise ParseError(f"{where}: arrival_year only allowed for immigrant rows")
        arr = _int(arrival, where) if arrival else None
        if arr is not None and arr > base_year:
            raise RangeError(f"{where}: arrival {arr} after base year {base_year}")
        n = _int(count, where)
        if n < 0:
            raise RangeError(f"{where}: negative count")
        hist = cells.setdefault((age, s, origin), {})
        if arr in hist:
            raise DuplicateCell(f"{where}: duplicate row")
        hist[arr] = n
    return PopulationTable(base_year, max_age, cells)


@dataclass(frozen=True)
class FlowRow:
    sex: str
    age_lo: int
    age_hi: int
    count: float


@dataclass(frozen=True)
class FlowTable:
    """Annual migration counts keyed by (year, corridor, direction).

    Bands in each (year, corridor, direction, sex) group partition 0..max_age.
    Years past the last tabulated year repeat the last year's levels.
    """

    max_age: int
    flows: dict = field(default_factory=dict)

    @property
    def years(self) -> list[int]:
        return sorted({k[0] for k in self.flows})

    def has_year(self, year: int) -> bool:
        return any(k[0] == year for k in self.flows)

    def rows(self, year: int, corridor: str, direction: str) -> list[FlowRow]:
        years = self.years
        if not years:
            return []
        if year > years[-1]:
            year = years[-1]
        return list(self.flows.get((year, corridor, direction), []))


def load_flow_csv(path, max_age: int = 100) -> FlowTable:
    flows: dict = {}
    for lineno, (y, corridor, s, lo, hi, direction, count) in _rows(path, FLOW_HEADER):
        where = f"{path}:{lineno}"
        if corridor not in CORRIDORS:
            raise ParseError(f"{where}: unknown corridor {corridor!r}")
        if direction not in DIRECTIONS:
            raise ParseError(f"{where}: direction must be in/out")
        _check_sex(s)
        row = FlowRow(s, _int(lo, where), _int(hi, where), _float(count, where))
        if row.count < 0:
            raise RangeError(f"{where}: negative count")
        if not 0 <= row.age_lo <= row.age_hi <= max_age:
            raise RangeError(f"{where}: bad age band {row.age_lo}-{row.age_hi}")
        flows.setdefault((_int(y, where), corridor, direction), []).append(row)
    for key, rows in flows.items():
        for s in {r.sex for r in rows}:
            bands = sorted((r.age_lo, r.age_hi) for r in rows if r.sex == s)
            expect = 0
            for lo, hi in bands:
                if lo != expect:
                    raise ParseError(f"{path}: bands for {key} sex {s} do not partition 0..{max_age}")
                expect = hi + 1
            if expect != max_age + 1:
                raise ParseError(f"{path}: bands for {key} sex {s} do not reach age {max_age}")
    return FlowTable(max_age, {k: tuple(v) for k, v in flows.items()})


def load_fertility_csv(path, max_age: int = 100) -> np.ndarray:
    """Age-specific annual birth probabilities per woman, zero where absent."""
    rates = np.zeros(max_age + 1)
    seen = set()
    for lineno, (a, r) in _rows(path, FERTILITY_HEADER):
        where = f"{path}:{lineno}"
        age = _int(a, where)
        rate = _float(r, where)
        if not 0 <= age <= max_age:
            raise RangeError(f"{where}: age {age} outside 0..{max_age}")
        if not 0 <= rate <= 1:
            raise RangeError(f"{where}: rate {rate} outside [0, 1]")
        if age in seen:
            raise DuplicateCell(f"{where}: duplicate age {age}")
        seen.add(age)
        rates[age] = rate
    rates.setflags(write=False)
    return rates


@dataclass(frozen=True)
class ForecastEnsemble:
    """Forecast q grids ``[run, year - first_year, age]`` and their bands.

    ``runs`` is None for ensembles read back from CSV, where only the bands
    survive.
    """

    sex: str
    first_year: int
    median: np.ndarray
    p2_5: np.ndarray
    p97_5: np.ndarray
    runs: np.ndarray | None = None

    @classmethod
    def from_runs(cls, sex: str, first_year: int, runs: np.ndarray) -> "ForecastEnsemble":
        runs = np.asarray(runs, dtype=float)
        if runs.ndim != 3 or runs.shape[0] == 0:
            raise EmptyEnsemble("an ensemble needs at least one run")
        lo, med, hi = stats.band(runs, axis=0)
        return cls(sex, first_year, _frozen(med), _frozen(lo), _frozen(hi), _frozen(runs))

    @property
    def last_year(self) -> int:
        return self.first_year + self.median.shape[0] - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.first_year, self.last_year + 1)


def write_forecast(ensembles, path) -> None:
    """Write one or more ensembles as ``year,age,sex,median,p2_5,p97_5``."""
    if isinstance(ensembles, ForecastEnsemble):
        ensembles = [ensembles]
    ensembles = list(ensembles)
    if not ensembles:
        raise EmptyEnsemble("nothing to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_HEADER)
        for e in ensembles:
            if e.median.size == 0:
                raise EmptyEnsemble("ensemble has no forecast cells")
            for t, year in enumerate(e.years):
                for i in range(e.median.shape[1]):
                    w.writerow([
                        int(year), i, e.sex,
                        f"{e.median[t, i]:.12g}", f"{e.p2_5[t, i]:.12g}", f"{e.p97_5[t, i]:.12g}",
                    ])


def read_forecast(path) -> dict[str, ForecastEnsemble]:
    cells: dict[str, dict[tuple[int, int], tuple[float, float, float]]] = {}
    for lineno, (y, a, s, med, lo, hi) in _rows(path, FORECAST_HEADER):
        where = f"{path}:{lineno}"
        _check_sex(s)
        key = (_int(y, where), _int(a, where))
        bucket = cells.setdefault(s, {})
        if key in bucket:
            raise DuplicateCell(f"{where}: duplicate forecast cell")
        bucket[key] = (_float(med, where), _float(lo, where), _float(hi, where))
    if not cells:
        raise EmptyEnsemble(f"{path}: no forecast rows")
    out = {}
    for sex, bucket in cells.items():
        y0 = min(k[0] for k in bucket)
        y1 = max(k[0] for k in bucket)
        a1 = max(k[1] for k in bucket)
        grid = np.empty((3, y1 - y0 + 1, a1 + 1))
        for t in range(y0, y1 + 1):
            for i in range(a1 + 1):
                try:
                    grid[:, t - y0, i] = bucket[(t, i)]
                except KeyError:
                    raise MissingCell(f"{path}: missing forecast cell year={t}, age={i}") from None
        if np.any(grid <= 0) or np.any(grid > 1):
            raise RangeError(f"{path}: forecast values outside (0, 1]")
        out[sex] = ForecastEnsemble(sex, y0, _frozen(grid[0]), _frozen(grid[1]), _frozen(grid[2]))
    return out
