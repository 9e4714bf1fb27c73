"""Synthetic inputs with E&W-like shapes, for tests and desk runs.

None of these numbers are real statistics. They only need the right
structure: log-linear mortality improvement, a plausible age pyramid, EU
inflows that jump after 2004, and fertility concentrated in ages 20-40.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data_io import (
    LogRateSurface,
    MortalitySurface,
    PopulationTable,
    write_mortality_csv,
)

FLOW_BANDS = ((0, 14), (15, 24), (25, 34), (35, 44), (45, 64), (65, 100))


def mortality_surfaces(first_year: int = 1951, last_year: int = 2016, max_age: int = 100,
                       seed: int = 0, noise: float = 0.02) -> dict[str, MortalitySurface]:
    """Gompertz-shaped rates improving 0.5-2.5% a year, women below men."""
    rng = np.random.default_rng(seed)
    ages = np.arange(max_age + 1)
    t = np.arange(last_year - first_year + 1)[:, None]
    out = {}
    for sex, shift, improve in (("M", 0.0, 1.0), ("F", -0.45, 0.85)):
        base = np.log(2e-4 + 3e-5 * np.exp(0.095 * ages)) + shift
        base[0] = np.log(0.025) + shift
        base[1:5] += np.log(0.35)
        rate = -(0.005 + 0.02 * np.exp(-((ages - 55.0) / 30.0) ** 2)) * improve
        x = base[None, :] + rate[None, :] * t + rng.normal(0.0, noise, (t.size, ages.size))
        out[sex] = MortalitySurface(sex, first_year, np.minimum(np.exp(x), 0.95))
    return out


def linear_log_rates(n_ages: int = 20, n_years: int = 60, extra_years: int = 10, noise: float = 0.01,
                     seed: int = 0, first_year: int = 1950):
    """Log-rates a_i + b_i * t plus Gaussian noise.

    Returns the noisy surface over ``n_years`` and the noiseless lines over
    ``n_years + extra_years`` (shape (years, ages)).
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(-7.0, -2.0, n_ages)
    b = rng.uniform(-0.03, -0.005, n_ages)
    t = np.arange(n_years + extra_years)[:, None]
    clean = a[None, :] + b[None, :] * t
    noisy = clean[:n_years] + rng.normal(0.0, noise, (n_years, n_ages))
    return LogRateSurface("M", first_year, noisy), clean


def population_table(base_year: int = 1991, max_age: int = 100, total: float = 50e6) -> PopulationTable:
    ages = np.arange(max_age + 1)
    shape = np.exp(-((ages / 78.0) ** 4)) * (1.0 + 0.25 * np.exp(-((ages - 27) / 6.0) ** 2))
    shape /= shape.sum()
    cells = {}
    for sex, share in (("M", 0.49), ("F", 0.51)):
        n = total * share * shape
        for a in ages:
            dom = int(round(n[a] * 0.93))
            cells[(int(a), sex, "domestic")] = {None: dom}
            for origin, frac in (("eu_immigrant", 0.02), ("other_immigrant", 0.05)):
                count = int(round(n[a] * frac))
                if count == 0 or a == 0:
                    continue
                first = max(base_year - a + 1, base_year - 30)
                years = list(range(first, base_year + 1))
                per = count // len(years)
                hist = {y: per for y in years}
                hist[years[-1]] += count - per * len(years)
                cells[(int(a), sex, origin)] = hist
            if 20 <= a <= 80:
                cells[(int(a), sex, "uk_abroad")] = {None: int(round(n[a] * 0.02))}
    return PopulationTable(base_year, max_age, cells)


def flow_rows(first_year: int = 1991, last_year: int = 2018):
    """Rows ``(year, corridor, sex, lo, hi, direction, count)`` for the flow CSV."""
    weights = np.array([0.10, 0.25, 0.35, 0.15, 0.12, 0.03])
    rows = []
    for year in range(first_year, last_year + 1):
        eu_in = 60_000 if year < 2004 else 60_000 + 12_000 * min(year - 2003, 10)
        levels = {
            ("eu", "in"): eu_in,
            ("eu", "out"): 50_000,
            ("other", "in"): 150_000 + 2_000 * (year - first_year),
            ("other", "out"): 80_000,
            ("uk_citizens", "in"): 40_000,
            ("uk_citizens", "out"): 70_000,
        }
        for (corridor, direction), total in levels.items():
            for sex in ("M", "F"):
                for (lo, hi), w in zip(FLOW_BANDS, weights):
                    rows.append((year, corridor, sex, lo, hi, direction, round(total * 0.5 * w)))
    return rows


def fertility_rates(max_age: int = 100) -> np.ndarray:
    ages = np.arange(max_age + 1)
    rates = 0.11 * np.exp(-0.5 * ((ages - 29.5) / 5.5) ** 2)
    rates[(ages < 15) | (ages > 49)] = 0.0
    return rates


def write_population_csv(pt: PopulationTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("age,sex,origin,arrival_year,count\n")
        for (age, sex, origin) in sorted(pt.cells):
            for arr, n in sorted(pt.cells[(age, sex, origin)].items(), key=lambda kv: kv[0] or 0):
                fh.write(f"{age},{sex},{origin},{'' if arr is None else arr},{n}\n")


def write_fixtures(directory, seed: int = 0) -> dict[str, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "mortality": d / "mortality.csv",
        "population": d / "population_1991.csv",
        "flows": d / "flows.csv",
        "fertility": d / "fertility.csv",
    }
    surfaces = mortality_surfaces(seed=seed)
    write_mortality_csv([surfaces["M"], surfaces["F"]], paths["mortality"])
    write_population_csv(population_table(), paths["population"])
    with open(paths["flows"], "w", encoding="utf-8") as fh:
        fh.write("year,corridor,sex,age_lo,age_hi,direction,count\n")
        for r in flow_rows():
            fh.write(",".join(str(v) for v in r) + "\n")
    with open(paths["fertility"], "w", encoding="utf-8") as fh:
        fh.write("age,rate\n")
        for a, r in enumerate(fertility_rates()):
            if r > 0:
                fh.write(f"{a},{r:.6g}\n")
    return paths
