import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mortsim import keyed_rng
from mortsim import microsim as ms
from mortsim import synthetic
from mortsim.data_io import MortalitySurface, PopulationTable, load_flow_csv
from mortsim.errors import EmptyDenominator, EmptyTable, InputError, SurfaceGap
from mortsim.migration import preset
from mortsim.spa import SCHEMES, SpaSchedule, month_index

ZERO_FERTILITY = np.zeros(101)


def flat_surfaces(q=0.01, first=1900, last=2100):
    return {s: MortalitySurface(s, first, np.full((last - first + 1, 101), q)) for s in "MF"}


def ctx(flows=None, fertility=ZERO_FERTILITY, scenario="status_quo", scale=1.0, seed=0):
    return ms.StepContext(seed, 0, scale, preset(scenario), flows, fertility)


def agents(ages, female=None, date=(2020, 7), origin=None):
    n = len(ages)
    birth = month_index(*date) - np.asarray(ages, dtype=np.int64)
    return ms.Population(
        np.arange(n, dtype=np.uint64), birth,
        np.zeros(n, bool) if female is None else np.asarray(female, bool),
        np.zeros(n, np.int8) if origin is None else np.asarray(origin, np.int8),
        np.full(n, -1, np.int32), np.ones(n, bool),
    )


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    surfaces = synthetic.mortality_surfaces()
    # extend the synthetic history flat to 2061 so runs need no forecast
    spliced = {s: MortalitySurface(s, 1951, np.vstack([v.q, np.repeat(v.q[-1:], 45, axis=0)]))
               for s, v in surfaces.items()}
    paths = synthetic.write_fixtures(tmp_path_factory.mktemp("sim"))
    return ms.SimInputs(synthetic.population_table(), spliced, synthetic.fertility_rates(),
                        load_flow_csv(paths["flows"]))


# ---------------------------------------------------------------- initial population

def test_scale_divides_counts():
    pt = PopulationTable(1991, 100, {(40, "F", "domestic"): {None: 1000}})
    pop = ms.init_population(pt, scale=100)
    assert len(pop) == 10
    assert np.all(pop.age_months(month_index(1991, 7)) // 12 == 40)
    assert len(ms.init_population(pt, scale=1)) == 1000
    with pytest.raises(EmptyTable):
        ms.init_population(pt, scale=10_000)
    with pytest.raises(InputError):
        ms.init_population(pt, scale=0.5)


def test_init_keeps_origin_and_arrival():
    pt = PopulationTable(1991, 100, {(30, "M", "eu_immigrant"): {1985: 3, 1990: 2},
                                     (50, "F", "uk_abroad"): {None: 4}})
    pop = ms.init_population(pt)
    assert sorted(pop.arrival[pop.origin == ms.Population.EU].tolist()) == [1985] * 3 + [1990] * 2
    assert pop.n_resident() == 5 and len(pop) == 9


def test_init_is_deterministic():
    pt = synthetic.population_table(total=2e5)
    a, b = ms.init_population(pt, 10, seed=3), ms.init_population(pt, 10, seed=3)
    for x, y in zip(a._cols(), b._cols()):
        np.testing.assert_array_equal(x, y)
    assert not np.array_equal(a.key, ms.init_population(pt, 10, seed=4).key)


# ---------------------------------------------------------------- one year

def test_certain_death_empties_population():
    pop = agents([10 * 12, 30 * 12, 70 * 12], female=[1, 1, 0])
    out, tally = ms.step_year(pop, flat_surfaces(1.0), ctx(fertility=np.full(101, 0.5)), 2020)
    assert len(out) == 0 and tally.deaths == 3 and tally.births == 0 and tally.balanced()


def test_only_immigrants_survive_certain_death(inputs):
    pop = ms.init_population(inputs.population, scale=20_000)
    out, tally = ms.step_year(pop, flat_surfaces(1.0), ctx(inputs.flows, scale=20_000), 2000)
    assert tally.alive_end == tally.inflows and np.all(out.arrival[out.origin != 0] == 2000)


@given(st.integers(0, 2**32), st.floats(0.0, 0.5))
@settings(max_examples=25)
def test_conservation_without_births_or_migration(seed, q):
    r = np.random.default_rng(seed)
    pop = agents(r.integers(0, 1200, 200), female=r.integers(0, 2, 200))
    out, tally = ms.step_year(pop, flat_surfaces(max(q, 1e-9)), ctx(seed=seed), 2020)
    assert tally.alive_end == 200 - tally.deaths == len(out)


def test_deaths_replay_oracle():
    r = np.random.default_rng(1)
    pop = agents(r.integers(0, 1200, 500), female=r.integers(0, 2, 500))
    q = r.uniform(0.0, 0.6, (1, 101))
    surfaces = {s: MortalitySurface(s, 2020, np.maximum(q, 1e-6)) for s in "MF"}
    c = ctx(seed=9)
    out, _ = ms.step_year(pop, surfaces, c, 2020)
    u = keyed_rng.uniforms(c.stream(2020, 1), pop.key)
    age = pop.age_months(month_index(2020, 7)) // 12
    survivors = pop.key[u >= np.maximum(q, 1e-6)[0, age]]
    assert sorted(out.key.tolist()) == sorted(survivors.tolist())


def test_births_are_domestic_newborns():
    pop = agents([25 * 12] * 400, female=[1] * 400)
    out, tally = ms.step_year(pop, flat_surfaces(1e-9), ctx(fertility=np.full(101, 0.5)), 2020)
    kids = out.birth >= month_index(2020, 1)
    assert kids.sum() == tally.births and 150 < tally.births < 250
    assert np.all(out.origin[kids] == 0) and np.all(out.birth[kids] < month_index(2021, 1))


def test_missing_mortality_year():
    with pytest.raises(SurfaceGap):
        ms.step_year(agents([600]), flat_surfaces(0.1, 1900, 2000), ctx(), 2020)


# ---------------------------------------------------------------- dependency ratio

def test_direct_count():
    pop = agents([70 * 12, 70 * 12, 30 * 12])
    assert ms.dependency_ratio(pop, "pre_reform", (2020, 7)) == 2.0


def test_exact_pension_age_counts_as_retired():
    pop = agents([65 * 12, 30 * 12])
    assert ms.dependency_ratio(pop, "pre_reform", (2020, 7)) == 1.0
    pop = agents([65 * 12 - 1, 30 * 12])
    assert ms.dependency_ratio(pop, "pre_reform", (2020, 7)) == 0.0


def test_non_residents_and_children_excluded():
    pop = agents([70 * 12, 70 * 12, 30 * 12, 10 * 12, 15 * 12], origin=[0, 3, 0, 0, 0])
    assert ms.dependency_ratio(pop, "pre_reform", (2020, 7)) == 0.5


def test_empty_denominator():
    with pytest.raises(EmptyDenominator):
        ms.dependency_ratio(agents([70 * 12, 5 * 12]), "pre_reform", (2020, 7))


@given(st.integers(0, 2**32), st.sampled_from(SCHEMES), st.integers(1, 1000))
@settings(max_examples=200)
def test_matches_brute_recount(seed, scheme, n):
    r = np.random.default_rng(seed)
    date = (int(r.integers(1991, 2062)), int(r.integers(1, 13)))
    pop = agents(r.integers(0, 110 * 12, n), female=r.integers(0, 2, n), date=date,
                 origin=r.choice([0, 1, 2, 3], n))
    pop.alive[:] = r.random(n) < 0.9
    sched = SpaSchedule.for_scheme(scheme)
    now = month_index(*date)
    num = den = 0
    for i in range(n):
        if not pop.alive[i] or pop.origin[i] == 3:
            continue
        spa = int(sched.months("F" if pop.female[i] else "M", int(pop.birth[i])))
        age = now - int(pop.birth[i])
        num += age >= spa
        den += 180 <= age < spa
    if den == 0:
        with pytest.raises(EmptyDenominator):
            ms.dependency_ratio(pop, scheme, date)
    else:
        assert ms.dependency_ratio(pop, scheme, date) == num / den


# ---------------------------------------------------------------- full runs

def test_single_replicate_band_collapses(inputs):
    cfg = ms.SimConfig(end_year=2000, scale=20_000, replicates=1, scheme="pre_reform")
    s = ms.run_scenario(cfg, inputs)
    lo, hi = s.band()
    np.testing.assert_array_equal(lo, hi)
    np.testing.assert_array_equal(lo, s.mean)
    assert s.years.tolist() == list(range(1991, 2001))


def test_runs_are_reproducible_across_workers(inputs):
    cfg = ms.SimConfig(end_year=2005, scale=20_000, replicates=2)
    a, ta = ms.simulate_matrix(cfg, inputs, SCHEMES, ("status_quo", "hard_brexit"))
    b, tb = ms.simulate_matrix(cfg, inputs, SCHEMES, ("status_quo", "hard_brexit"), workers=2)
    for k in a:
        np.testing.assert_array_equal(a[k].ratios, b[k].ratios)
    assert ta == tb
    assert all(t.balanced() for tl in ta.values() for t in tl)


def test_scheme_ordering_on_shared_path(inputs):
    cfg = ms.SimConfig(end_year=2061, scale=20_000, replicates=2)
    series, _ = ms.simulate_matrix(cfg, inputs, ("accelerated_spa_68", "spa_68", "equal_spa", "pre_reform"),
                                   ("status_quo",))
    r = [series[(s, "status_quo")].ratios for s in ("accelerated_spa_68", "spa_68", "equal_spa", "pre_reform")]
    late = series[("pre_reform", "status_quo")].years >= 2019
    for lo, hi in zip(r, r[1:]):
        assert np.all(lo[:, late] <= hi[:, late])


def test_hard_brexit_keeps_fewer_eu_workers(inputs):
    cfg = ms.SimConfig(end_year=2030, scale=5_000, seed=2)
    counts = {}
    for kind in ("soft_brexit", "hard_brexit"):
        seen = {}

        def record(year, pop):
            age = pop.age_months(month_index(year, 7))
            seen[year] = int((pop.resident & (pop.origin == 1) & (age >= 180) & (age < 780)).sum())

        ms.simulate_replicate(cfg, inputs, kind, 0, ("pre_reform",), on_year=record)
        counts[kind] = seen
    assert counts["soft_brexit"][2019] == counts["hard_brexit"][2019]
    for year in range(2020, 2031):
        assert counts["hard_brexit"][year] <= counts["soft_brexit"][year], year


def test_config_validation():
    with pytest.raises(InputError):
        ms.SimConfig(end_year=2070)
    with pytest.raises(InputError):
        ms.SimConfig(replicates=0)
