"""INI run configuration.

A config file holds ``[section]`` headers and ``key = value`` lines with
``#`` comments. Relative paths are resolved against the file's directory.

    [data]
    mortality = mortality.csv
    population = population_1991.csv
    flows = flows.csv
    fertility = fertility.csv
    base_year = 1991

    [train]            # any TrainConfig field
    input_size = 15

    [forecast]
    runs = 5
    horizon = 2061

    [simulate]         # any SimConfig field except scheme/scenario
    replicates = 2
    schemes = pre_reform, accelerated_spa_68
    scenarios = status_quo, hard_brexit

    [scenario.hard_brexit]   # MigrationScenario overrides
    exodus_fraction = 0.5
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import InputError
from .forecaster import TrainConfig
from .microsim import SimConfig
from .migration import KINDS, MigrationScenario, preset
from .spa import SCHEMES

DATA_KEYS = ("mortality", "population", "flows", "fertility", "forecast")


def _coerce(cls, section: str, items: dict) -> dict:
    """Convert strings to the types of ``cls``'s fields; unknown keys are errors."""
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, raw in items.items():
        if key not in types:
            raise InputError(f"[{section}] unknown key {key!r}")
        t = str(types[key])
        try:
            if t == "bool":
                out[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif t == "int":
                out[key] = int(raw)
            elif t == "float":
                out[key] = float(raw)
            else:
                out[key] = raw.strip()
        except ValueError:
            raise InputError(f"[{section}] {key} = {raw!r} is not a valid {t}") from None
    return out


def _names(raw: str, allowed: tuple, what: str) -> tuple[str, ...]:
    names = tuple(n.strip() for n in raw.split(",") if n.strip())
    for n in names:
        if n not in allowed:
            raise InputError(f"unknown {what} {n!r}; choose from {', '.join(allowed)}")
    return names


@dataclass(frozen=True)
class RunConfig:
    data: dict = field(default_factory=dict)
    base_year: int = 1991
    floor: float | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    runs: int = 1
    horizon: int = 2061
    sim: SimConfig = field(default_factory=SimConfig)
    schemes: tuple[str, ...] = SCHEMES
    scenarios: tuple[str, ...] = KINDS
    scenario_overrides: dict = field(default_factory=dict)
    source: str | None = None

    def path(self, key: str) -> Path:
        if key not in self.data:
            raise InputError(f"config has no [data] {key} path and none was given on the command line")
        return Path(self.data[key])

    def scenario(self, kind: str) -> MigrationScenario:
        return preset(kind, **self.scenario_overrides.get(kind, {}))

    def snapshot(self) -> dict:
        return {
            "data": {k: str(v) for k, v in self.data.items()},
            "base_year": self.base_year,
            "floor": self.floor,
            "train": self.train.as_dict(),
            "forecast": {"runs": self.runs, "horizon": self.horizon},
            "simulate": {f.name: getattr(self.sim, f.name) for f in fields(self.sim)},
            "schemes": list(self.schemes),
            "scenarios": list(self.scenarios),
            "scenario_overrides": self.scenario_overrides,
        }


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise InputError(f"{path}: {e}") from None
    base = path.resolve().parent
    cfg = RunConfig(source=str(path))

    if parser.has_section("data"):
        sec = dict(parser["data"])
        data = {}
        for key in DATA_KEYS:
            if key in sec:
                p = Path(sec.pop(key))
                data[key] = str(p if p.is_absolute() else base / p)
        extra = {}
        if "base_year" in sec:
            extra["base_year"] = int(sec.pop("base_year"))
        if "floor" in sec:
            extra["floor"] = float(sec.pop("floor"))
        if sec:
            raise InputError(f"[data] unknown keys: {', '.join(sorted(sec))}")
        cfg = replace(cfg, data=data, **extra)

    if parser.has_section("train"):
        cfg = replace(cfg, train=TrainConfig(**_coerce(TrainConfig, "train", dict(parser["train"]))))

    if parser.has_section("forecast"):
        sec = dict(parser["forecast"])
        try:
            runs = int(sec.pop("runs", cfg.runs))
            horizon = int(sec.pop("horizon", cfg.horizon))
        except ValueError as e:
            raise InputError(f"[forecast] {e}") from None
        if sec:
            raise InputError(f"[forecast] unknown keys: {', '.join(sorted(sec))}")
        cfg = replace(cfg, runs=runs, horizon=horizon)

    if parser.has_section("simulate"):
        sec = dict(parser["simulate"])
        schemes = _names(sec.pop("schemes"), SCHEMES, "scheme") if "schemes" in sec else cfg.schemes
        scenarios = _names(sec.pop("scenarios"), KINDS, "scenario") if "scenarios" in sec else cfg.scenarios
        for key in ("scheme", "scenario"):
            if key in sec:
                raise InputError(f"[simulate] use '{key}s' to select a list")
        cfg = replace(cfg, sim=SimConfig(**_coerce(SimConfig, "simulate", sec)),
                      schemes=schemes, scenarios=scenarios)

    overrides = {}
    for name in parser.sections():
        if name.startswith("scenario."):
            kind = name.split(".", 1)[1]
            if kind not in KINDS:
                raise InputError(f"[{name}] unknown scenario")
            items = _coerce(MigrationScenario, name, dict(parser[name]))
            items.pop("kind", None)
            overrides[kind] = items
            preset(kind, **items)  # validate now
    known = {"data", "train", "forecast", "simulate"}
    for name in parser.sections():
        if name not in known and not name.startswith("scenario."):
            raise InputError(f"unknown config section [{name}]")
    return replace(cfg, scenario_overrides=overrides)
