"""Annual-step individual-level population simulation.

Each year applies, in order: deaths, births, migration. Ages are held in
months (birth month index) because pension ages phase in monthly. Agents
living abroad (UK emigrants) stay in the roster so they can be
repatriated, but they never count as residents.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import keyed_rng, stats
from .data_io import FlowTable, MortalitySurface, PopulationTable
from .errors import EmptyDenominator, EmptyTable, InputError, InvariantViolation, SurfaceGap
from .migration import BrexitState, MigrationScenario, apply_brexit_adjustments, preset
from .spa import SCHEMES, SpaSchedule, month_index

log = logging.getLogger(__name__)

ORIGIN_CODES = {"domestic": 0, "eu_immigrant": 1, "other_immigrant": 2, "uk_abroad": 3}
CORRIDOR_ORIGIN = {"eu": 1, "other": 2, "uk_citizens": 0}
CORRIDOR_CODES = {"eu": 1, "other": 2, "uk_citizens": 3}

# keyed-rng process tags
_DEATH, _BIRTH, _SEX, _MONTH, _ROUND, _SELECT, _AGE, _AGE_MONTH = range(1, 9)
# agent key namespaces
_INITIAL, _NEWBORN, _IMMIGRANT, _RETURNER = range(4)


@dataclass
class Population:
    """Column store of agents. ``birth`` is a month index; ``arrival`` is -1 for non-immigrants."""

    key: np.ndarray
    birth: np.ndarray
    female: np.ndarray
    origin: np.ndarray
    arrival: np.ndarray
    alive: np.ndarray

    DOMESTIC = 0
    EU = 1
    OTHER = 2
    ABROAD = 3

    @classmethod
    def empty(cls) -> "Population":
        return cls(
            np.zeros(0, np.uint64), np.zeros(0, np.int64), np.zeros(0, bool),
            np.zeros(0, np.int8), np.zeros(0, np.int32), np.zeros(0, bool),
        )

    def __len__(self) -> int:
        return self.key.size

    def copy(self) -> "Population":
        return Population(*(a.copy() for a in self._cols()))

    def _cols(self):
        return self.key, self.birth, self.female, self.origin, self.arrival, self.alive

    @property
    def resident(self) -> np.ndarray:
        return self.alive & (self.origin != self.ABROAD)

    def n_resident(self) -> int:
        return int(self.resident.sum())

    def age_months(self, date_index: int) -> np.ndarray:
        return date_index - self.birth

    def extend(self, other: "Population") -> "Population":
        return Population(*(np.concatenate([a, b]) for a, b in zip(self._cols(), other._cols())))

    def compact(self) -> "Population":
        """Drop dead agents."""
        keep = self.alive
        return Population(*(a[keep] for a in self._cols()))


def _new_agents(keys, birth, female, origin, arrival) -> Population:
    n = len(keys)
    return Population(
        np.asarray(keys, dtype=np.uint64), np.asarray(birth, dtype=np.int64),
        np.asarray(female, dtype=bool), np.full(n, origin, dtype=np.int8),
        np.asarray(arrival, dtype=np.int32) if np.ndim(arrival) else np.full(n, arrival, dtype=np.int32),
        np.ones(n, dtype=bool),
    )


def init_population(pt: PopulationTable, scale: float = 1.0, seed: int = 0) -> Population:
    """``round(count / scale)`` agents per cell, birth months spread evenly over the age year.

    Age a in the base year means completed years at 1 July. The layout is
    deterministic; ``seed`` only enters agent keys.
    """
    if scale < 1:
        raise InputError("scale must be >= 1")
    mid = month_index(pt.base_year, 7)
    keys, births, female, origin, arrival = [], [], [], [], []
    idx = 0
    for (age, sex, org) in sorted(pt.cells):
        for arr, count in sorted(pt.cells[(age, sex, org)].items(), key=lambda kv: (kv[0] is not None, kv[0] or 0)):
            n = int(np.floor(count / scale + 0.5))
            for j in range(n):
                offset = int((j + 0.5) * 12 / n)
                births.append(mid - 12 * age - offset)
                keys.append(keyed_rng.key_of(_INITIAL, seed, idx))
                female.append(sex == "F")
                origin.append(ORIGIN_CODES[org])
                arrival.append(-1 if arr is None else arr)
                idx += 1
    if idx == 0:
        raise EmptyTable("population table yields no agents at this scale")
    return Population(
        np.array(keys, dtype=np.uint64), np.array(births, dtype=np.int64),
        np.array(female, dtype=bool), np.array(origin, dtype=np.int8),
        np.array(arrival, dtype=np.int32), np.ones(idx, dtype=bool),
    )


@dataclass(frozen=True)
class YearTally:
    year: int
    alive_start: int
    deaths: int
    births: int
    inflows: int
    outflows: int
    alive_end: int
    deaths_abroad: int = 0

    def balanced(self) -> bool:
        return self.alive_end == self.alive_start - self.deaths + self.births + self.inflows - self.outflows


@dataclass
class StepContext:
    """Per-replicate constants and the Brexit quota state."""

    seed: int
    replicate: int
    scale: float
    scenario: MigrationScenario
    flows: FlowTable | None
    fertility: np.ndarray
    male_share: float = 105 / 205
    brexit: BrexitState = field(default_factory=BrexitState)

    def stream(self, year: int, process: int, *extra: int) -> int:
        return keyed_rng.key_of(self.seed, self.replicate, year, process, *extra)


def _mortality(surfaces: dict, year: int, female: np.ndarray, age_years: np.ndarray) -> np.ndarray:
    q = np.empty(age_years.size)
    for sex, mask in (("M", ~female), ("F", female)):
        s: MortalitySurface = surfaces[sex]
        if not s.first_year <= year <= s.last_year:
            raise SurfaceGap(f"no {sex} mortality for {year} (surface {s.first_year}-{s.last_year})")
        q[mask] = s.q[year - s.first_year, np.clip(age_years[mask], 0, s.max_age)]
    return q


def _stochastic_round(x: float, u: float) -> int:
    base = int(np.floor(x))
    return base + (1 if u < x - base else 0)


def step_year(pop: Population, surfaces: dict, ctx: StepContext, year: int) -> tuple[Population, YearTally]:
    pop = pop.copy()
    mid = month_index(year, 7)
    alive_start = pop.n_resident()

    # deaths
    age_y = pop.age_months(mid) // 12
    live = np.flatnonzero(pop.alive)
    q = _mortality(surfaces, year, pop.female[live], age_y[live])
    u = keyed_rng.uniforms(ctx.stream(year, _DEATH), pop.key[live])
    dead = live[u < q]
    resident_deaths = int((pop.origin[dead] != Population.ABROAD).sum())
    pop.alive[dead] = False

    # births
    mothers = np.flatnonzero(pop.resident & pop.female)
    mothers = mothers[(age_y[mothers] >= 0) & (age_y[mothers] < ctx.fertility.size)]
    rate = ctx.fertility[age_y[mothers]]
    u = keyed_rng.uniforms(ctx.stream(year, _BIRTH), pop.key[mothers])
    mothers = mothers[u < rate]
    births = mothers.size
    if births:
        kids = np.array([keyed_rng.key_of(_NEWBORN, k, year) for k in pop.key[mothers]], dtype=np.uint64)
        month = np.floor(keyed_rng.uniforms(ctx.stream(year, _MONTH), kids) * 12).astype(np.int64)
        girl = keyed_rng.uniforms(ctx.stream(year, _SEX), kids) >= ctx.male_share
        pop = pop.extend(_new_agents(kids, month_index(year, 1) + month, girl, Population.DOMESTIC, -1))

    inflows = outflows = 0
    if ctx.flows is not None:
        pop, inflows, outflows = _migrate(pop, ctx, year)

    pop = pop.compact()
    tally = YearTally(year, alive_start, resident_deaths, births, inflows, outflows,
                      pop.n_resident(), int(dead.size) - resident_deaths)
    if not tally.balanced():
        raise InvariantViolation(f"population accounting broken in {year}: {tally}")
    return pop, tally


def _band_mask(pop: Population, mid: int, lo: int, hi: int, female: bool, max_age: int) -> np.ndarray:
    age = pop.age_months(mid) // 12
    upper = age <= hi if hi < max_age else np.ones_like(age, dtype=bool)
    return (age >= lo) & upper & (pop.female == female)


def _migrate(pop: Population, ctx: StepContext, year: int):
    mid = month_index(year, 7)
    max_age = ctx.flows.max_age
    regular, leaving, returning = apply_brexit_adjustments(ctx.flows, ctx.scenario, year, pop, ctx.brexit)
    inflows = outflows = 0

    if leaving.size:
        gone = np.isin(pop.key, leaving)
        pop.alive[gone] = False
        outflows += int(gone.sum())

    for corridor in ("eu", "other", "uk_citizens"):
        c = CORRIDOR_CODES[corridor]
        for row in regular[(corridor, "out")]:
            u = keyed_rng.uniform(ctx.stream(year, _ROUND, c, 0), keyed_rng.key_of(row.age_lo, row.sex == "F"))
            n = _stochastic_round(row.count / ctx.scale, u)
            if n == 0:
                continue
            cand = np.flatnonzero(
                pop.resident & (pop.origin == CORRIDOR_ORIGIN[corridor])
                & _band_mask(pop, mid, row.age_lo, row.age_hi, row.sex == "F", max_age)
            )
            if cand.size == 0:
                continue
            draw = keyed_rng.uniforms(ctx.stream(year, _SELECT, c, 0), pop.key[cand])
            chosen = cand[np.argsort(draw, kind="stable")[:n]]
            if corridor == "uk_citizens":
                pop.origin[chosen] = Population.ABROAD
            else:
                pop.alive[chosen] = False
            outflows += chosen.size

    new = []
    for corridor in ("eu", "other", "uk_citizens"):
        c = CORRIDOR_CODES[corridor]
        for row in regular[(corridor, "in")]:
            female = row.sex == "F"
            u = keyed_rng.uniform(ctx.stream(year, _ROUND, c, 1), keyed_rng.key_of(row.age_lo, female))
            n = _stochastic_round(row.count / ctx.scale, u)
            if n == 0:
                continue
            if corridor == "uk_citizens":
                cand = np.flatnonzero(
                    pop.alive & (pop.origin == Population.ABROAD)
                    & _band_mask(pop, mid, row.age_lo, row.age_hi, female, max_age)
                )
                draw = keyed_rng.uniforms(ctx.stream(year, _SELECT, c, 1), pop.key[cand])
                back = cand[np.argsort(draw, kind="stable")[:n]]
                pop.origin[back] = Population.DOMESTIC
                inflows += back.size
                n -= back.size
                if n == 0:
                    continue
            ns = _RETURNER if corridor == "uk_citizens" else _IMMIGRANT
            keys = np.array([keyed_rng.key_of(ns, c, year, female, row.age_lo, k) for k in range(n)],
                            dtype=np.uint64)
            span = row.age_hi - row.age_lo + 1
            age = row.age_lo + np.floor(keyed_rng.uniforms(ctx.stream(year, _AGE), keys) * span).astype(np.int64)
            month = np.floor(keyed_rng.uniforms(ctx.stream(year, _AGE_MONTH), keys) * 12).astype(np.int64)
            origin = CORRIDOR_ORIGIN[corridor]
            new.append(_new_agents(keys, mid - 12 * age - month, np.full(n, female), origin,
                                   year if origin in (Population.EU, Population.OTHER) else -1))
            inflows += n

    if returning.size:
        back = np.isin(pop.key, returning) & pop.alive & (pop.origin == Population.ABROAD)
        pop.origin[back] = Population.DOMESTIC
        inflows += int(back.sum())

    for chunk in new:
        pop = pop.extend(chunk)
    return pop, inflows, outflows


def dependency_ratio(pop: Population, scheme, date: tuple[int, int]) -> float:
    """Residents at or above pension age over residents aged 15 to below pension age."""
    schedule = scheme if isinstance(scheme, SpaSchedule) else SpaSchedule.for_scheme(scheme)
    res = pop.resident
    birth = pop.birth[res]
    age = month_index(*date) - birth
    spa = schedule.months_by_sex(pop.female[res], birth)
    retired = int(np.count_nonzero(age >= spa))
    working = int(np.count_nonzero((age >= 15 * 12) & (age < spa)))
    if working == 0:
        raise EmptyDenominator(f"no residents between 15 and pension age on {date}")
    return retired / working


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    start_year: int = 1991
    end_year: int = 2061
    replicates: int = 1
    scale: float = 1.0
    scheme: str = "accelerated_spa_68"
    scenario: str = "status_quo"
    ratio_month: int = 7
    male_share: float = 105 / 205

    def __post_init__(self):
        if self.replicates < 1 or self.scale < 1:
            raise InputError("replicates and scale must be >= 1")
        if self.end_year > 2061 or self.end_year < self.start_year:
            raise InputError("need start_year <= end_year <= 2061")


@dataclass(frozen=True)
class SimInputs:
    population: PopulationTable
    surfaces: dict
    fertility: np.ndarray
    flows: FlowTable | None = None
    scenarios: dict = field(default_factory=dict)

    def scenario(self, kind: str) -> MigrationScenario:
        return self.scenarios.get(kind) or preset(kind)


@dataclass(frozen=True)
class RatioSeries:
    scheme: str
    scenario: str
    years: np.ndarray
    ratios: np.ndarray  # (replicate, year); NaN where undefined
    scale: float

    @property
    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.array([np.nanmean(c) if np.isfinite(c).any() else np.nan for c in self.ratios.T])

    def band(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = [], []
        for col in self.ratios.T:
            ok = col[np.isfinite(col)]
            if ok.size == 0:
                lo.append(np.nan)
                hi.append(np.nan)
            else:
                lo.append(stats.percentile_nearest_rank(ok, 2.5))
                hi.append(stats.percentile_nearest_rank(ok, 97.5))
        return np.array(lo), np.array(hi)


def simulate_replicate(cfg: SimConfig, inputs: SimInputs, scenario: str, replicate: int,
                       schemes=SCHEMES, on_year=None):
    """One realized population path; ratios for every scheme from the same path.

    Returns (ratios[scheme] as a list per year, list of YearTally).
    """
    for sex in ("M", "F"):
        if not inputs.surfaces[sex].covers(cfg.start_year, cfg.end_year):
            raise SurfaceGap(f"{sex} mortality does not cover {cfg.start_year}-{cfg.end_year}")
    schedules = {s: SpaSchedule.for_scheme(s) for s in schemes}
    ctx = StepContext(
        cfg.seed, replicate, cfg.scale, inputs.scenario(scenario), inputs.flows,
        np.asarray(inputs.fertility, dtype=float), cfg.male_share,
    )
    pop = init_population(inputs.population, cfg.scale, cfg.seed)
    ratios = {s: [] for s in schemes}
    tallies = []
    for year in range(cfg.start_year, cfg.end_year + 1):
        for s, sched in schedules.items():
            try:
                ratios[s].append(dependency_ratio(pop, sched, (year, cfg.ratio_month)))
            except EmptyDenominator:
                ratios[s].append(float("nan"))
        if on_year is not None:
            on_year(year, pop)
        pop, tally = step_year(pop, inputs.surfaces, ctx, year)
        tallies.append(tally)
    return ratios, tallies


def _replicate_job(args):
    cfg, inputs, scenario, r, schemes = args
    return simulate_replicate(cfg, inputs, scenario, r, schemes)


def simulate_matrix(cfg: SimConfig, inputs: SimInputs, schemes=SCHEMES, scenarios=("status_quo",),
                    workers: int = 1) -> tuple[dict, dict]:
    """Run every (scenario, replicate) once and score all requested schemes on it.

    Returns ({(scheme, scenario): RatioSeries}, {(scenario, replicate): tallies}).
    """
    jobs = [(cfg, inputs, sc, r, tuple(schemes)) for sc in scenarios for r in range(cfg.replicates)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_job, jobs))
    else:
        results = [_replicate_job(j) for j in jobs]
    years = np.arange(cfg.start_year, cfg.end_year + 1)
    series, tallies = {}, {}
    for (_, _, sc, r, _), (ratios, tl) in zip(jobs, results):
        tallies[(sc, r)] = tl
    for sc in scenarios:
        for s in schemes:
            rows = [results[i][0][s] for i, j in enumerate(jobs) if j[2] == sc]
            series[(s, sc)] = RatioSeries(s, sc, years, np.array(rows, dtype=float), cfg.scale)
    return series, tallies


def run_scenario(cfg: SimConfig, inputs: SimInputs, workers: int = 1) -> RatioSeries:
    series, _ = simulate_matrix(cfg, inputs, (cfg.scheme,), (cfg.scenario,), workers)
    return series[(cfg.scheme, cfg.scenario)]
