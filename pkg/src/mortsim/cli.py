"""Command-line front end.

    mortsim [--config PATH] [--seed U64] [--out DIR] [--threads N] COMMAND ...

Commands: train, tune, forecast, life-table, simulate, report. Each writes
into ``--out`` only, always alongside a ``manifest.json``.

Exit codes: 0 ok, 2 input error, 3 numeric failure, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, keyed_rng, life, neural
from .config import RunConfig, load_config
from .data_io import (
    SEXES,
    LogRateSurface,
    MortalitySurface,
    load_fertility_csv,
    load_flow_csv,
    load_mortality_pair,
    load_population_csv,
    read_forecast,
    splice,
    to_log_rates,
    write_forecast,
)
from .errors import InputError, InsufficientHorizon, InvariantViolation, MissingArtifact, MortsimError
from .forecaster import (
    AgeSplit,
    TrainedModel,
    default_workers,
    ensemble_from_models,
    final_protocol,
    make_training_sequences,
    mean_reversion_summary,
    select_best,
    sensitivity_matrix,
    train,
    train_ensemble,
    tune,
)
from .microsim import SimInputs, simulate_matrix
from .migration import KINDS
from .spa import SCHEMES

log = logging.getLogger("mortsim")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4

# Files written by ``report``, in order.
BUNDLE = (
    "fig1_forecast_fan.csv",
    "fig2_survival.csv",
    "fig2_rectangularisation.csv",
    "fig3_sex_ratio.csv",
    "fig4_sensitivity.csv",
    "fig5_dependency_ratio.csv",
    "table1_expectancy.csv",
    "table1.txt",
    "manifest.json",
)

# Column schemes of the expectancy table: (label, pension age of women, of men)
TABLE1_COLUMNS = (
    ("pre_reform", 60, 65),
    ("equal_spa", 65, 65),
    ("spa_68", 68, 68),
)
# Test-set figures published for the full-size model on real data, men then women.
PUBLISHED_TEST = {"M": {"test_loss": 0.0106, "test_bias": 0.0241},
                  "F": {"test_loss": 0.0122, "test_bias": -0.0255}}


# ---------------------------------------------------------------- helpers

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _csv_writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def _g(x: float) -> str:
    return "" if not np.isfinite(x) else f"{x:.12g}"


class Run:
    """Per-invocation bookkeeping: output dir, inputs read, files written."""

    def __init__(self, args, cfg: RunConfig):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.seeds: dict = {}
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.t0 = time.time()

    def read(self, path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"input file not found: {p}")
        self.inputs[str(p)] = _sha256(p)
        return p

    def file(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def manifest(self, extra: dict | None = None) -> None:
        doc = {
            "tool": "mortsim",
            "version": __version__,
            "command": self.args.command,
            "argv": list(getattr(self.args, "argv", [])),
            "config": self.cfg.snapshot(),
            "config_file": self.cfg.source,
            "inputs": self.inputs,
            "outputs": {n: _sha256(self.out / n) for n in self.outputs},
            "seeds": self.seeds,
            "rng": {"training": "numpy PCG64 via default_rng", "simulation": keyed_rng.ALGORITHM},
            "threads": self.args.threads,
            "started": self.started,
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "elapsed_seconds": round(time.time() - self.t0, 3),
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
        if extra:
            doc.update(extra)
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2, default=str) + "\n", encoding="utf-8")


def _mortality(run: Run, path=None) -> dict[str, MortalitySurface]:
    p = run.read(path or run.cfg.path("mortality"))
    return load_mortality_pair(p, run.cfg.floor)


def _sexes(args) -> tuple[str, ...]:
    return tuple(args.sex) if getattr(args, "sex", None) else SEXES


def _train_config(args, cfg: RunConfig):
    tc = cfg.train
    if getattr(args, "steps", None):
        tc = replace(tc, steps=args.steps)
    if getattr(args, "stop_gradient", False):
        tc = replace(tc, stop_gradient=True)
    return tc


def _combined(history: dict, forecast: dict) -> dict[str, MortalitySurface]:
    out = {}
    for sex in SEXES:
        h = history[sex]
        if sex not in forecast:
            raise MissingArtifact(f"forecast has no rows for sex {sex}")
        f = forecast[sex]
        if f.first_year != h.last_year + 1:
            raise InputError(f"forecast for {sex} starts in {f.first_year}, history ends {h.last_year}")
        out[sex] = splice(h, f.median)
    return out


def _write_loss(run: Run, name: str, model: TrainedModel) -> None:
    fh, w = _csv_writer(run.file(name))
    with fh:
        w.writerow(["window", "step", "mean_batch_loss", "training_loss", "learning_rate", "validation_loss"])
        for i, (m, full, lr) in enumerate(zip(model.loss_history, model.checkpoint_loss, model.lr_history)):
            val = model.validation_loss[i] if i < len(model.validation_loss) else float("nan")
            w.writerow([i, (i + 1) * model.config.interval, _g(m), _g(full), _g(lr), _g(val)])


def _write_sensitivity(path, s) -> None:
    fh, w = _csv_writer(path)
    with fh:
        w.writerow(["t", "t_prime", "value"])
        for r, t in enumerate(s.rows):
            for c, tp in enumerate(s.cols):
                w.writerow([int(t), int(tp), _g(s.values[r, c])])


# ---------------------------------------------------------------- commands

def cmd_train(args, cfg: RunConfig) -> int:
    run = Run(args, cfg)
    tc = _train_config(args, cfg)
    surfaces = _mortality(run, args.mortality)
    seed = args.seed
    reports = {}
    for sex in _sexes(args):
        x = to_log_rates(surfaces[sex])
        run.seeds[sex] = seed
        if args.final_protocol:
            split = AgeSplit.standard(x.max_age)
            model, rep = final_protocol(tc, x, split, seed)
            reports[sex] = {
                "train_loss": rep.train_loss, "test_loss": rep.test_loss, "test_bias": rep.test_bias,
                "published_reference": PUBLISHED_TEST[sex],
            }
        else:
            model = train(tc, make_training_sequences(x, tc.input_size, tc.n_train), seed)
        neural.save_checkpoint(run.file(f"checkpoint_{sex}.json"), model.cell, seed,
                               {"sex": sex, "last_year": x.last_year, "train": tc.as_dict()})
        _write_loss(run, f"loss_{sex}.csv", model)
        log.info("%s: final training loss %.6g", sex, model.checkpoint_loss[-1])
    if reports:
        run.file("final_report.json").write_text(json.dumps(reports, indent=2) + "\n", encoding="utf-8")
    run.manifest()
    return EXIT_OK


def cmd_tune(args, cfg: RunConfig) -> int:
    run = Run(args, cfg)
    base = _train_config(args, cfg)
    surfaces = _mortality(run, args.mortality)
    fh, w = _csv_writer(run.file("tune.csv"))
    best = {}
    with fh:
        w.writerow(["sex", "input_size", "depth", "hidden_width", "n_params", "seed",
                    "min_validation_loss", "min_validation_step", "final_validation_loss"])
        for sex in _sexes(args):
            x = to_log_rates(surfaces[sex])
            chosen, results = tune(
                x, AgeSplit.standard(x.max_age), base, args.inputs, args.depths, args.widths,
                args.steps or base.steps, args.seed,
            )
            for r in results:
                w.writerow([sex, r.input_size, r.depth, r.hidden_width, r.n_params, r.seed,
                            _g(r.min_validation_loss), r.min_validation_step, _g(r.final_validation_loss)])
            win = select_best(results)
            best[sex] = {"train": chosen.as_dict(), "min_validation_loss": win.min_validation_loss}
            run.seeds[sex] = args.seed
    run.file("tune_best.json").write_text(json.dumps(best, indent=2) + "\n", encoding="utf-8")
    run.manifest()
    return EXIT_OK


def cmd_forecast(args, cfg: RunConfig) -> int:
    run = Run(args, cfg)
    surfaces = _mortality(run, args.mortality)
    horizon = args.horizon or cfg.horizon
    workers = default_workers(args.threads)
    ensembles, summaries = [], {}
    for sex in _sexes(args):
        x: LogRateSurface = to_log_rates(surfaces[sex])
        ckpts = [c for c in (args.checkpoint or []) if Path(c).name.endswith(f"_{sex}.json")] \
            if args.checkpoint else []
        if args.checkpoint:
            if not ckpts:
                raise InputError(f"no checkpoint for sex {sex} among --checkpoint files (expected *_{sex}.json)")
            models = [neural.load_checkpoint(run.read(c))[0] for c in ckpts]
            for m in models:
                if m.spec.input_size > x.n_years:
                    raise InputError(f"checkpoint needs {m.spec.input_size} years of history")
            run.seeds[sex] = "checkpoint"
        else:
            runs = args.runs or cfg.runs
            tc = _train_config(args, cfg)
            models = train_ensemble(tc, x, runs, args.seed, workers)
            run.seeds[sex] = [args.seed + r for r in range(runs)]
        ens = ensemble_from_models(models, x, horizon)
        ensembles.append(ens)
        if args.store_runs:
            fh, w = _csv_writer(run.file(f"forecast_runs_{sex}.csv"))
            with fh:
                w.writerow(["run", "year", "age", "q"])
                for r in range(ens.runs.shape[0]):
                    for t, year in enumerate(ens.years):
                        for i in range(ens.runs.shape[2]):
                            w.writerow([r, int(year), i, _g(ens.runs[r, t, i])])
        for age in args.sensitivity or []:
            if not 0 <= age <= x.max_age:
                raise InputError(f"--sensitivity age {age} outside 0..{x.max_age}")
            mats = [sensitivity_matrix(m, x, age, horizon) for m in models]
            s = replace(mats[0], values=np.mean([m.values for m in mats], axis=0))
            _write_sensitivity(run.file(f"sensitivity_{sex}_{age}.csv"), s)
            try:
                summ = mean_reversion_summary(s)
                summaries[f"{sex}_{age}"] = {
                    "near_sum": summ.near_sum, "far_sum": summ.far_sum,
                    "statistic": summ.statistic, "reverting": summ.reverting,
                }
            except InputError as e:
                summaries[f"{sex}_{age}"] = {"error": str(e)}
    write_forecast(ensembles, run.file("forecast.csv"))
    if summaries:
        run.file("reversion.json").write_text(json.dumps(summaries, indent=2) + "\n", encoding="utf-8")
    run.manifest({"horizon": horizon})
    return EXIT_OK


def cmd_life_table(args, cfg: RunConfig) -> int:
    run = Run(args, cfg)
    history = _mortality(run, args.mortality)
    forecast = read_forecast(run.read(args.forecast or cfg.path("forecast")))
    surfaces = _combined(history, forecast)
    for sex in _sexes(args):
        s = surfaces[sex]
        fh, w = _csv_writer(run.file(f"survival_{sex}.csv"))
        with fh:
            w.writerow(["cohort", "age", "l"])
            for b in args.cohorts:
                c = _survival(s, b)
                for a, v in enumerate(c.l):
                    w.writerow([b, a, _g(v)])
        fh, w = _csv_writer(run.file(f"expectancy_{sex}.csv"))
        with fh:
            w.writerow(["cohort", "age_at", "expectancy"])
            for b in args.cohorts:
                for a in args.ages:
                    try:
                        e = life.life_expectancy_at(s, b, a)
                    except InsufficientHorizon:
                        raise MissingArtifact(
                            f"cohort {b} at age {a} needs mortality through "
                            f"{life.minimum_horizon(b, a, s.max_age)}; forecast ends {s.last_year}"
                        ) from None
                    w.writerow([b, a, _g(e)])
    ratio = life.mortality_sex_ratio(surfaces["M"], surfaces["F"])
    _write_ratio(run.file("sex_ratio.csv"), surfaces["M"], ratio)
    run.manifest()
    return EXIT_OK


def _survival(s: MortalitySurface, birth_year: int):
    try:
        return life.survival_curve(s, birth_year)
    except InsufficientHorizon:
        raise MissingArtifact(
            f"survival curve for cohort {birth_year} needs mortality for {birth_year}-"
            f"{birth_year + s.max_age}; surface covers {s.first_year}-{s.last_year}"
            f" (forecast to at least {birth_year + s.max_age})"
        ) from None


def _write_ratio(path, s: MortalitySurface, ratio: np.ndarray) -> None:
    fh, w = _csv_writer(path)
    with fh:
        w.writerow(["year", "age", "log_ratio"])
        for t, year in enumerate(s.years):
            for a in range(ratio.shape[1]):
                w.writerow([int(year), a, _g(ratio[t, a])])


def _sim_inputs(run: Run, cfg: RunConfig, args) -> SimInputs:
    history = _mortality(run, args.mortality)
    forecast = read_forecast(run.read(args.forecast or cfg.path("forecast")))
    surfaces = _combined(history, forecast)
    pop = load_population_csv(run.read(args.population or cfg.path("population")), cfg.base_year)
    flows = load_flow_csv(run.read(args.flows or cfg.path("flows")))
    fert = load_fertility_csv(run.read(args.fertility or cfg.path("fertility")))
    return SimInputs(pop, surfaces, fert, flows, {k: cfg.scenario(k) for k in KINDS})


def cmd_simulate(args, cfg: RunConfig) -> int:
    run = Run(args, cfg)
    schemes = tuple(args.schemes or cfg.schemes)
    scenarios = tuple(args.scenarios or cfg.scenarios)
    sim = replace(cfg.sim, seed=args.seed, start_year=cfg.base_year)
    if args.replicates:
        sim = replace(sim, replicates=args.replicates)
    if args.scale:
        sim = replace(sim, scale=args.scale)
    if args.end_year:
        sim = replace(sim, end_year=args.end_year)
    inputs = _sim_inputs(run, cfg, args)
    try:
        series, tallies = simulate_matrix(sim, inputs, schemes, scenarios, default_workers(args.threads))
    except MortsimError as e:
        e.args = (f"simulation ({', '.join(scenarios)}): {e}",)
        raise
    run.seeds["simulation"] = sim.seed
    run.seeds["replicates"] = sim.replicates

    fh, w = _csv_writer(run.file("ratios.csv"))
    with fh:
        w.writerow(["year", "scheme", "scenario", "replicate", "ratio"])
        for (scheme, scenario), s in series.items():
            for r in range(s.ratios.shape[0]):
                for t, year in enumerate(s.years):
                    w.writerow([int(year), scheme, scenario, r, _g(s.ratios[r, t])])
    for (scheme, scenario), s in series.items():
        fh, w = _csv_writer(run.file(f"summary_{scheme}_{scenario}.csv"))
        with fh:
            _summary_rows(w, s, header=True)
    fh, w = _csv_writer(run.file("summary.csv"))
    with fh:
        w.writerow(["year", "scheme", "scenario", "mean", "p2_5", "p97_5"])
        for s in series.values():
            _summary_rows(w, s, header=False)
    fh, w = _csv_writer(run.file("tallies.csv"))
    with fh:
        w.writerow(["scenario", "replicate", "year", "alive_start", "deaths", "births",
                    "inflows", "outflows", "alive_end", "deaths_abroad"])
        for (scenario, r), rows in tallies.items():
            for t in rows:
                if not t.balanced():
                    raise InvariantViolation(f"unbalanced tally {t}")
                w.writerow([scenario, r, t.year, t.alive_start, t.deaths, t.births,
                            t.inflows, t.outflows, t.alive_end, t.deaths_abroad])
    run.manifest({"schemes": list(schemes), "scenarios": list(scenarios), "series": len(series)})
    return EXIT_OK


def _summary_rows(w, s, header: bool) -> None:
    if header:
        w.writerow(["year", "scheme", "scenario", "mean", "p2_5", "p97_5"])
    lo, hi = s.band()
    for t, year in enumerate(s.years):
        w.writerow([int(year), s.scheme, s.scenario, _g(s.mean[t]), _g(lo[t]), _g(hi[t])])


def _find(dirs, pattern: str) -> list[Path]:
    hits = []
    for d in dirs:
        hits.extend(sorted(Path(d).glob(pattern)))
    return hits


def _require(dirs, name: str, producer: str) -> Path:
    hits = _find(dirs, name)
    if not hits:
        raise MissingArtifact(f"{name} not found in {', '.join(map(str, dirs))}; run `{producer}` first")
    return hits[0]


def table1_layout(cells: dict, years) -> str:
    """Text table with years as rows and schemes as columns, ``women / men`` per cell."""
    head = ["year"] + [f"{name} ({f}/{m})" for name, f, m in TABLE1_COLUMNS]
    rows = [head]
    for y in years:
        row = [str(y)]
        for name, _, _ in TABLE1_COLUMNS:
            parts = []
            for sex in ("F", "M"):
                v = cells.get((y, name, sex))
                parts.append("n/a" if v is None else f"{v:.1f}")
            row.append(" / ".join(parts))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    return "\n".join("  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in rows) + "\n"


def cmd_report(args, cfg: RunConfig) -> int:
    run = Run(args, cfg)
    dirs = [Path(d) for d in args.inputs]
    for d in dirs:
        if not d.is_dir():
            raise MissingArtifact(f"input directory not found: {d}")
    history = _mortality(run, args.mortality)
    forecast = read_forecast(run.read(_require(dirs, "forecast.csv", "forecast")))
    surfaces = _combined(history, forecast)
    sens_files = _find(dirs, "sensitivity_*_*.csv")
    if not sens_files:
        raise MissingArtifact("no sensitivity_<sex>_<age>.csv found; run `forecast --sensitivity AGE` first")
    summary = run.read(_require(dirs, "summary.csv", "simulate"))

    # forecast fan: history as a degenerate band, then the forecast bands
    fh, w = _csv_writer(run.file("fig1_forecast_fan.csv"))
    with fh:
        w.writerow(["year", "age", "sex", "kind", "median", "p2_5", "p97_5"])
        for sex in SEXES:
            h, f = history[sex], forecast[sex]
            for t, year in enumerate(h.years):
                for a in range(h.max_age + 1):
                    v = _g(h.q[t, a])
                    w.writerow([int(year), a, sex, "history", v, v, v])
            for t, year in enumerate(f.years):
                for a in range(f.median.shape[1]):
                    w.writerow([int(year), a, sex, "forecast",
                                _g(f.median[t, a]), _g(f.p2_5[t, a]), _g(f.p97_5[t, a])])

    cohorts = args.cohorts
    if cohorts is None:
        s = surfaces["M"]
        last = s.last_year - s.max_age
        cohorts = list(range(s.first_year, last + 1, 10))
        if not cohorts:
            raise MissingArtifact(
                f"no complete cohort: survival curves need a forecast to at least {s.first_year + s.max_age}"
            )
    fh, w = _csv_writer(run.file("fig2_survival.csv"))
    fh2, w2 = _csv_writer(run.file("fig2_rectangularisation.csv"))
    with fh, fh2:
        w.writerow(["sex", "cohort", "age", "l"])
        w2.writerow(["sex", "cohort", "iqr_age_at_death"])
        for sex in SEXES:
            for b in cohorts:
                c = _survival(surfaces[sex], b)
                for a, v in enumerate(c.l):
                    w.writerow([sex, b, a, _g(v)])
                w2.writerow([sex, b, _g(life.rectangularisation_index(c))])

    ratio = life.mortality_sex_ratio(surfaces["M"], surfaces["F"])
    _write_ratio(run.file("fig3_sex_ratio.csv"), surfaces["M"], ratio)

    fh, w = _csv_writer(run.file("fig4_sensitivity.csv"))
    with fh:
        w.writerow(["sex", "age", "t", "t_prime", "value"])
        for p in sens_files:
            _, sex, age = p.stem.split("_")
            with open(run.read(p), encoding="utf-8") as src:
                for row in list(csv.reader(src))[1:]:
                    w.writerow([sex, age, *row])

    fh, w = _csv_writer(run.file("fig5_dependency_ratio.csv"))
    with fh, open(summary, encoding="utf-8") as src:
        for row in csv.reader(src):
            w.writerow(row)

    cells = {}
    fh, w = _csv_writer(run.file("table1_expectancy.csv"))
    with fh:
        w.writerow(["year", "scheme", "sex", "age", "cohort", "expectancy",
                    "share_of_adult_life", "share_of_life", "needs_horizon"])
        for y in args.table_years:
            for name, age_f, age_m in TABLE1_COLUMNS:
                for sex, age in (("F", age_f), ("M", age_m)):
                    need = life.minimum_horizon(y - age, age, surfaces[sex].max_age)
                    try:
                        r = life.expectancy_at_age(surfaces[sex], y, age)
                    except InsufficientHorizon:
                        w.writerow([y, name, sex, age, y - age, "", "", "", need])
                        continue
                    cells[(y, name, sex)] = r.expectancy
                    w.writerow([y, name, sex, age, r.birth_year, _g(r.expectancy),
                                _g(r.share_of_adult_life), _g(r.share_of_life), need])
    run.file("table1.txt").write_text(table1_layout(cells, args.table_years), encoding="utf-8")
    run.manifest({"bundle": list(BUNDLE), "sources": [str(d) for d in dirs]})
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _choices(allowed):
    def parse(text: str) -> list[str]:
        names = [v.strip() for v in text.split(",") if v.strip()]
        bad = [n for n in names if n not in allowed]
        if bad:
            raise argparse.ArgumentTypeError(f"unknown {bad}; choose from {', '.join(allowed)}")
        return names
    return parse


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    """Global flags, accepted before or after the command name.

    The copy attached to subcommands uses SUPPRESS defaults so it never
    overwrites a value given before the command.
    """
    def d(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None),
                        help="INI config file (sections data, train, forecast, simulate, scenario.*)")
    common.add_argument("--seed", type=_u64, default=d(0), help="base seed for training runs and simulation (default 0)")
    common.add_argument("--out", default=d("out"), help="output directory; nothing is written elsewhere")
    common.add_argument("--threads", type=int, default=d(1),
                        help="worker processes, capped by MORTSIM_MAX_WORKERS (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="mortsim", parents=[_global_flags(suppress=False)], description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    def train_flags(sp):
        sp.add_argument("--mortality", help="mortality CSV (overrides [data] mortality)")
        sp.add_argument("--sex", action="append", choices=SEXES, help="restrict to one sex (repeatable)")
        sp.add_argument("--steps", type=int, help="training steps (overrides [train] steps)")
        sp.add_argument("--stop-gradient", action="store_true",
                        help="ablation: cut gradients through fed-back predictions")

    sp = add("train", "train one model per sex and write checkpoints plus loss histories")
    train_flags(sp)
    sp.add_argument("--final-protocol", action="store_true",
                    help="train on training+validation ages and report test-set loss and bias")
    sp.set_defaults(func=cmd_train)

    sp = add("tune", "grid search over input size, depth and width scored on validation ages")
    train_flags(sp)
    sp.add_argument("--inputs", type=_ints, default=[15, 25, 40], help="input sizes N (default 15,25,40)")
    sp.add_argument("--depths", type=_ints, default=[3, 4, 5, 6, 7], help="depths K (default 3-7)")
    sp.add_argument("--widths", type=_ints, default=[32, 64, 128, 256, 512], help="widths H")
    sp.set_defaults(func=cmd_tune)

    sp = add("forecast", "ensemble forecast of q with nearest-rank 2.5/50/97.5 percentile bands")
    train_flags(sp)
    sp.add_argument("--runs", type=int, help="ensemble size; run r trains with seed --seed + r")
    sp.add_argument("--horizon", type=int, help="last forecast year (default [forecast] horizon or 2061)")
    sp.add_argument("--checkpoint", action="append",
                    help="use trained checkpoint(s) named *_M.json / *_F.json instead of training")
    sp.add_argument("--sensitivity", type=int, action="append", metavar="AGE",
                    help="write the q-space sensitivity matrix for AGE (repeatable)")
    sp.add_argument("--store-runs", action="store_true", help="also write every run's forecast grid")
    sp.set_defaults(func=cmd_forecast)

    sp = add("life-table", "cohort survival curves, life expectancies and the sex mortality ratio")
    sp.add_argument("--mortality")
    sp.add_argument("--forecast", help="forecast.csv from the forecast command")
    sp.add_argument("--sex", action="append", choices=SEXES)
    sp.add_argument("--cohorts", type=_ints, required=True, help="birth years, comma-separated")
    sp.add_argument("--ages", type=_ints, default=[0, 60, 65], help="ages for expectancy (default 0,60,65)")
    sp.set_defaults(func=cmd_life_table)

    sp = add("simulate", "microsimulate dependency ratios for a scheme x scenario matrix")
    for name in ("mortality", "forecast", "population", "flows", "fertility"):
        sp.add_argument(f"--{name}", help=f"{name} CSV (overrides [data] {name})")
    sp.add_argument("--schemes", type=_choices(SCHEMES), help=f"subset of {','.join(SCHEMES)}")
    sp.add_argument("--scenarios", type=_choices(KINDS), help=f"subset of {','.join(KINDS)}")
    sp.add_argument("--replicates", type=int, help="replicates per scenario")
    sp.add_argument("--scale", type=float, help="persons per simulated agent")
    sp.add_argument("--end-year", type=int, help="last simulated year (<= 2061)")
    sp.set_defaults(func=cmd_simulate)

    sp = add("report", "assemble the plot-data bundle from earlier outputs")
    sp.add_argument("--mortality")
    sp.add_argument("--from", dest="inputs", action="append", required=True, metavar="DIR",
                    help="directory holding forecast/simulate outputs (repeatable)")
    sp.add_argument("--cohorts", type=_ints, help="birth cohorts for survival curves")
    sp.add_argument("--table-years", type=_ints, default=[1960, 2018, 2048],
                    help="retirement years for the expectancy table (default 1960,2018,2048)")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except MortsimError as e:
        print(f"mortsim {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError) as e:
        print(f"mortsim {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, FloatingPointError) as e:
        print(f"mortsim {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
