"""Post-Brexit migration scenarios.

Regular flows come from the user's flow table; a scenario can replace the
EU corridor levels with those of reference years and scale the outflow of
UK citizens. Soft and hard Brexit add an "exodus" of pre-Brexit EU
immigrants, last arrived first, and a repatriation of UK citizens living
abroad. Both are paced evenly over the monthly steps of the exodus window.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data_io import FlowRow, FlowTable
from .errors import InputError

KINDS = ("status_quo", "soft_brexit", "hard_brexit")


class InconsistentStock(UserWarning):
    """A departure quota asked for more agents than the stock holds."""


@dataclass(frozen=True)
class MigrationScenario:
    kind: str
    brexit_year: int = 2019
    brexit_month: int = 3
    exodus_fraction: float = 0.0
    exodus_duration_years: float = 2.0
    repatriation_fraction: float = 0.0
    eu_inflow_rule: str = "trend"
    eu_outflow_rule: str = "trend"
    uk_outflow_factor: float = 1.0

    def __post_init__(self):
        for name in ("exodus_fraction", "repatriation_fraction", "uk_outflow_factor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {v}")
        if self.exodus_duration_years < 0:
            raise InputError("exodus_duration_years must be >= 0")
        for rule in (self.eu_inflow_rule, self.eu_outflow_rule):
            parse_rule(rule)

    @property
    def window_months(self) -> int:
        return int(round(12 * self.exodus_duration_years))


def preset(kind: str, **overrides) -> MigrationScenario:
    if kind == "status_quo":
        base = MigrationScenario(kind)
    elif kind == "soft_brexit":
        base = MigrationScenario(
            kind, exodus_fraction=0.10, repatriation_fraction=0.10,
            eu_inflow_rule="avg:2000,2011", eu_outflow_rule="avg:2000,2011",
            uk_outflow_factor=0.20,
        )
    elif kind == "hard_brexit":
        base = MigrationScenario(
            kind, exodus_fraction=0.70, repatriation_fraction=0.80,
            eu_inflow_rule="year:2003", eu_outflow_rule="trend",
            uk_outflow_factor=0.70,
        )
    else:
        raise InputError(f"unknown scenario {kind!r}; choose from {KINDS}")
    return replace(base, **overrides) if overrides else base


def parse_rule(rule: str) -> list[int] | None:
    """``trend`` -> None; ``year:2003`` -> [2003]; ``avg:2000,2011`` -> [2000, 2011]."""
    if rule == "trend":
        return None
    head, _, tail = rule.partition(":")
    try:
        years = [int(y) for y in tail.split(",") if y.strip()]
    except ValueError:
        raise InputError(f"bad flow rule {rule!r}") from None
    if head == "year" and len(years) == 1:
        return years
    if head == "avg" and years:
        return years
    raise InputError(f"bad flow rule {rule!r}")


def _level(flows: FlowTable, rule: str, year: int, corridor: str, direction: str) -> list[FlowRow]:
    ref = parse_rule(rule)
    if ref is None:
        return flows.rows(year, corridor, direction)
    for y in ref:
        if not flows.has_year(y):
            raise InputError(f"flow table lacks reference year {y} needed by rule {rule!r}")
    tables = [flows.rows(y, corridor, direction) for y in ref]
    acc: dict[tuple, float] = {}
    for rows in tables:
        for r in rows:
            key = (r.sex, r.age_lo, r.age_hi)
            acc[key] = acc.get(key, 0.0) + r.count / len(tables)
    return [FlowRow(s, lo, hi, c) for (s, lo, hi), c in sorted(acc.items())]


def adjusted_flows(flows: FlowTable, scenario: MigrationScenario, year: int) -> dict:
    """Regular flows for ``year`` keyed by (corridor, direction)."""
    out = {
        (c, d): flows.rows(year, c, d)
        for c in ("eu", "other", "uk_citizens") for d in ("in", "out")
    }
    if scenario.kind == "status_quo" or year < scenario.brexit_year:
        return out
    out[("eu", "in")] = _level(flows, scenario.eu_inflow_rule, year, "eu", "in")
    out[("eu", "out")] = _level(flows, scenario.eu_outflow_rule, year, "eu", "out")
    out[("uk_citizens", "out")] = [
        replace(r, count=r.count * scenario.uk_outflow_factor)
        for r in out[("uk_citizens", "out")]
    ]
    return out


def window_share(quota: int, scenario: MigrationScenario, year: int) -> int:
    """Departures falling in calendar ``year`` when ``quota`` is spread over the window.

    Month m of the window (m = 0 at the Brexit month) closes with
    floor((m + 1) * quota / W) cumulative departures.
    """
    start = scenario.brexit_year * 12 + scenario.brexit_month - 1
    w = scenario.window_months

    def cumulative(month_idx: int) -> int:
        m = month_idx - start
        if m < 0:
            return 0
        if w == 0 or m >= w - 1:
            return quota
        return (m + 1) * quota // w

    return cumulative(year * 12 + 11) - cumulative(year * 12 - 1)


@dataclass
class BrexitState:
    """Quotas fixed from the stock present at the Brexit step."""

    exodus_quota: int | None = None
    repatriation_quota: int | None = None
    warnings: list[str] = field(default_factory=list)


def exodus_order(keys: np.ndarray, arrival: np.ndarray) -> np.ndarray:
    """Positions sorted latest arrival first, ties by ascending key."""
    return np.lexsort((keys, -arrival.astype(np.int64)))


def apply_brexit_adjustments(flows: FlowTable, scenario: MigrationScenario, year: int,
                             stock, state: BrexitState | None = None):
    """Regular flows for the year plus the keys of forced movers.

    ``stock`` is the population before this year's migration. Returns
    (flows by (corridor, direction), exodus keys, repatriation keys).
    Exodus candidates are resident EU immigrants who arrived before the
    Brexit year; the departure order is latest arrival first.
    """
    state = state if state is not None else BrexitState()
    regular = adjusted_flows(flows, scenario, year)
    empty = np.zeros(0, dtype=np.uint64)
    if scenario.kind == "status_quo" or year < scenario.brexit_year:
        return regular, empty, empty

    eu = stock.alive & (stock.origin == stock.EU) & (stock.arrival < scenario.brexit_year)
    abroad = stock.alive & (stock.origin == stock.ABROAD)
    if state.exodus_quota is None:
        state.exodus_quota = int(np.floor(scenario.exodus_fraction * eu.sum() + 0.5))
        state.repatriation_quota = int(np.floor(scenario.repatriation_fraction * abroad.sum() + 0.5))

    def take(mask, quota, order_fn, label):
        n = window_share(quota, scenario, year)
        idx = np.flatnonzero(mask)
        if n > idx.size:
            msg = f"{year}: {label} quota {n} exceeds stock {idx.size}; clipped"
            state.warnings.append(msg)
            warnings.warn(msg, InconsistentStock, stacklevel=3)
            n = idx.size
        idx = idx[order_fn(idx)][:n]
        return stock.key[idx]

    leaving = take(eu, state.exodus_quota, lambda i: exodus_order(stock.key[i], stock.arrival[i]), "exodus")
    returning = take(abroad, state.repatriation_quota, lambda i: np.argsort(stock.key[i], kind="stable"),
                     "repatriation")
    return regular, leaving, returning
